import pytest
import torch

from lexctrl.corpus import build_dataset, default_grammar
from lexctrl.decode import Generator
from lexctrl.lexicon import load_lexicon
from lexctrl.model import ModelConfig, build_model
from lexctrl.tokenizer import build_complexity_table, train_bpe


@pytest.fixture(scope="session")
def toy_lex():
    records = [("tree", "A"), ("need", "A"), ("needs", "A"), ("the", "A"), ("water", "A"), ("this", "A"),
               ("peach", "B"), ("light", "B"), ("orchard", "C")]
    return load_lexicon(records, ["A", "B", "C"])


@pytest.fixture(scope="session")
def grammar():
    return default_grammar(0)


@pytest.fixture(scope="session")
def lex(grammar):
    return grammar.lexicon()


@pytest.fixture(scope="session")
def small_data(grammar, lex):
    return build_dataset(grammar, 600, seed=3, lex=lex)


@pytest.fixture(scope="session")
def vocab(small_data, lex):
    return train_bpe([ex.sentence for ex in small_data], 200, [lv.name for lv in lex.levels])


@pytest.fixture(scope="session")
def table(vocab, lex, small_data):
    return build_complexity_table(vocab, lex, [ex.sentence for ex in small_data])


def tiny_config(vocab, lex, variant="ce", **kw):
    base = dict(vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids, d_model=16,
                n_layers=1, n_heads=2, ffn_width=32, max_positions=64, variant=variant)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_generator(vocab, table, lex):
    model = build_model(tiny_config(vocab, lex), seed=1)
    with torch.no_grad():
        model.complexity_embeddings.weight.normal_(0, 0.5, generator=torch.Generator().manual_seed(2))
    model.eval()
    return Generator(model, vocab, table, lex)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    rows = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if rep.when != "call" and not (outcome in ("error", "skipped")):
                continue
            num = int(nodeid.split("test_criterion_")[1].split("_")[0])
            detail = dict(rep.user_properties).get("detail", "")
            status = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
            rows[num] = f"criterion {num}: {status}  {detail}".rstrip()
    if rows:
        terminalreporter.section("acceptance criteria")
        for num in sorted(rows):
            terminalreporter.write_line(rows[num])
