"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed at the end."""

import os
import random
import time

import pytest
import torch
from nltk.translate.bleu_score import corpus_bleu

from lexctrl.checkpoint import load_checkpoint, save_checkpoint
from lexctrl.corpus import build_dataset, default_grammar, read_dataset, split_dataset, write_dataset
from lexctrl.decode import Candidate, GenerationRequest, Generator, beam_decode, greedy_decode, masked_decode
from lexctrl.experiment import ExperimentConfig, averaged_metrics, render_table, run_experiment
from lexctrl.lexicon import load_lexicon
from lexctrl.metrics import accuracy_metric, bleu_n, constraint_scores, distinct_n, entropy_n
from lexctrl.model import ModelConfig, build_model, collate, encode_example, parameter_group
from lexctrl.rerank import rerank, rerank_score
from lexctrl.tokenizer import build_complexity_table, train_bpe
from lexctrl.training import Schedule, train, train_two_stage

from oracles import (
    brute_best,
    brute_distinct_entropy,
    brute_metrics,
    random_metric_workload,
    random_rerank_lists,
)
from test_model import _fd_check, fd_model_and_batch

DESK_SIZE = 10000


@pytest.fixture(scope="module")
def desk():
    grammar = default_grammar(0)
    lex = grammar.lexicon()
    examples = build_dataset(grammar, DESK_SIZE, seed=0, lex=lex)
    train_set, valid_set, test_set = split_dataset(examples)
    corpus = [ex.sentence for ex in train_set]
    vocab = train_bpe(corpus, 800, [lv.name for lv in lex.levels])
    table = build_complexity_table(vocab, lex, corpus)
    return dict(lex=lex, examples=examples, train=train_set, valid=valid_set, test=test_set,
                vocab=vocab, table=table)


@pytest.fixture(scope="module")
def quick_generator(desk):
    lex, vocab = desk["lex"], desk["vocab"]
    cfg = ModelConfig(vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids, d_model=32,
                      n_layers=1, n_heads=2, ffn_width=64, variant="ce")
    res = train(cfg, desk["train"], Schedule(steps=150, lr=2e-3, warmup=30, max_tokens=2048), vocab, lex)
    return Generator(res.model, vocab, desk["table"], lex)


def test_criterion_1_metric_oracle(record_property):
    t0 = time.perf_counter()
    level_of, punct, levels, samples = random_metric_workload(random.Random(2024), 1000)
    lex = load_lexicon(level_of.items(), levels, punctuation=punct)
    got = constraint_scores(samples, lex)[:5]
    expect = brute_metrics(samples, level_of, set(punct), levels)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"ours={got} oracle={expect} in {elapsed:.2f}s")
    assert got == expect
    assert elapsed < 10


def test_criterion_2_masking_guarantee(desk, quick_generator, record_property):
    lex = desk["lex"]
    requests = desk["test"][:200]
    assert len(requests) == 200
    pairs, violations = [], 0
    for ex in requests:
        cand = masked_decode(quick_generator, GenerationRequest.from_example(ex))
        acc = accuracy_metric([(ex.levels, cand.text)], lex)
        violations += acc != 1.0
        pairs.append((ex.levels, cand.text))
    overall = accuracy_metric(pairs, lex)
    record_property("detail", f"ACC={overall} over {len(pairs)} requests, {violations} violations")
    assert violations == 0 and overall == 1.0


def test_criterion_3_gradients(record_property):
    t0 = time.perf_counter()
    model, batch = fd_model_and_batch()
    assert model.config.d_model == 8 and model.config.n_layers == 1
    worst = _fd_check(model, batch, eps=1e-5, per_group=20)
    elapsed = time.perf_counter() - t0
    groups = {parameter_group(n) for n, _ in model.named_parameters()}
    record_property("detail", f"max rel err {max(worst.values()):.2e} over {len(worst)} groups in {elapsed:.1f}s")
    assert set(worst) == groups and "complexity_embeddings" in worst
    assert max(worst.values()) < 1e-3
    assert elapsed < 60


def test_criterion_4_ce_equals_prompt(desk, record_property):
    lex, vocab = desk["lex"], desk["vocab"]
    cfg = ModelConfig(vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids, variant="ce")
    ce = build_model(cfg, seed=11, dtype=torch.float64).eval()
    prompt = build_model(ModelConfig(**{**cfg.to_dict(), "variant": "prompt"}), seed=11, dtype=torch.float64).eval()
    rng = random.Random(4)
    worst = 0.0
    with torch.no_grad():
        for _ in range(50):
            exs = rng.sample(desk["train"], rng.randint(1, 8))
            b = collate([encode_example(ex, vocab, lex, "ce") for ex in exs], vocab, lex)
            worst = max(worst, float((ce(b) - prompt(b)).abs().max()))
    record_property("detail", f"max |logit diff| {worst:.3e} over 50 batches")
    assert worst < 1e-10


def test_criterion_5_freeze_invariant(desk, record_property):
    lex, vocab = desk["lex"], desk["vocab"]
    cfg = ModelConfig(vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids, d_model=32,
                      n_layers=1, n_heads=2, ffn_width=64, variant="prompt")
    data = desk["train"][:2000]
    pre = train(cfg, data, Schedule(steps=30, lr=2e-3, warmup=10, max_tokens=1024), vocab, lex).model
    s1 = Schedule(steps=60, lr=5e-3, warmup=10, max_tokens=1024, checkpoint_every=10)
    first, _ = train_two_stage(cfg, data, pre, s1, Schedule(steps=0), vocab, lex)
    frozen = [{g: h for g, h in c.checksums.items() if g != "complexity_embeddings"} for c in first.checkpoints]
    m_hashes = [c.checksums["complexity_embeddings"] for c in first.checkpoints]
    ok = len(frozen) == 6 and all(f == frozen[0] for f in frozen)
    record_property("detail", f"{len(frozen)} checkpoints, frozen groups identical={ok}, "
                              f"M changed at {len(set(m_hashes))} of them")
    assert ok
    assert len(set(m_hashes)) == len(m_hashes)


def test_criterion_6_rerank_and_beam(desk, quick_generator, record_property):
    rng = random.Random(6)
    mismatches = 0
    for level_of, wanted, texts in random_rerank_lists(rng, 1000):
        lex = load_lexicon(level_of.items(), list("ABCD"))
        cands = [Candidate([], t, 0.0) for t in texts]
        got = rerank(cands, GenerationRequest(("x",), tuple(sorted(wanted))), lex)
        idx, best = brute_best(texts, wanted, level_of, lex.punctuation)
        mismatches += got is not cands[idx] or rerank_score(got.text, wanted, lex) != float(best)
    beam_diff = 0
    for ex in desk["test"][:100]:
        req = GenerationRequest.from_example(ex)
        g = greedy_decode(quick_generator, req)
        (b,) = beam_decode(quick_generator, req, 1)
        beam_diff += g.ids != b.ids
    record_property("detail", f"rerank mismatches {mismatches}/1000, beam1 != greedy on {beam_diff}/100")
    assert mismatches == 0 and beam_diff == 0


@pytest.mark.skipif(os.environ.get("LEXCTRL_SKIP_SLOW") == "1", reason="LEXCTRL_SKIP_SLOW=1")
def test_criterion_7_desk_replication(record_property):
    cfg = ExperimentConfig(size=DESK_SIZE, seeds=[0, 1, 2], decoders=["greedy"])
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    print("\n" + render_table(report))
    k2s, prompt, ce = (averaged_metrics(report, v) for v in ("k2s", "prompt", "ce"))
    ref = report["reference"]
    record_property("detail", (
        f"F1 ce={ce['f1']:.4f} k2s={k2s['f1']:.4f}; R ce={ce['recall']:.4f} k2s={k2s['recall']:.4f}; "
        f"ACC ce={ce['acc']:.4f} prompt={prompt['acc']:.4f}; {elapsed / 60:.1f} min"))
    assert all(ref[k] == 1.0 for k in ("kc", "acc", "precision", "recall", "f1"))
    assert ce["f1"] > k2s["f1"]
    assert ce["recall"] > k2s["recall"]
    assert ce["acc"] >= prompt["acc"] - 0.02
    assert elapsed <= 30 * 60


def test_criterion_8_bleu_and_diversity(desk, record_property):
    rng = random.Random(8)
    refs = [ex.sentence for ex in desk["test"][:100]]
    cands = []
    for r in refs:
        words = r.split()
        cands.append(" ".join(w if rng.random() < 0.75 else rng.choice(words) for w in words))
    worst = 0.0
    for n in (2, 4):
        expect = corpus_bleu([[r.split()] for r in refs], [c.split() for c in cands], weights=tuple([1 / n] * n))
        worst = max(worst, abs(bleu_n(cands, refs, n) - expect))
    exact = all(
        (distinct_n(cands, n), entropy_n(cands, n)) == brute_distinct_entropy(cands, n) for n in (1, 2, 3, 4)
    )
    record_property("detail", f"max BLEU diff {worst:.2e}; distinct/entropy exact={exact}")
    assert worst < 1e-6 and exact


def test_criterion_9_round_trips(desk, quick_generator, tmp_path, record_property):
    vocab = desk["vocab"]
    bad_bpe = sum(vocab.decode(vocab.encode(ex.sentence).ids) != ex.sentence for ex in desk["examples"])

    path = tmp_path / "data.jsonl"
    write_dataset(desk["examples"], path)
    raw = path.read_bytes()
    back = read_dataset(path)
    write_dataset(back, tmp_path / "again.jsonl")
    data_ok = back == desk["examples"] and (tmp_path / "again.jsonl").read_bytes() == raw

    gen = quick_generator
    ck_path = tmp_path / "model.json"
    save_checkpoint(ck_path, gen.model, gen.vocab, gen.table, gen.lexicon, step=150)
    ck = load_checkpoint(ck_path)
    params_ok = all(torch.equal(ck.model.state_dict()[k], v) for k, v in gen.model.state_dict().items())
    save_checkpoint(tmp_path / "model2.json", ck.model, ck.vocab, ck.table, ck.lexicon, step=ck.step)
    ck_ok = params_ok and (tmp_path / "model2.json").read_bytes() == ck_path.read_bytes()
    record_property("detail", f"BPE mismatches {bad_bpe}/{len(desk['examples'])}, dataset ok={data_ok}, "
                              f"checkpoint ok={ck_ok}")
    assert bad_bpe == 0 and data_ok and ck_ok
