import math

import pytest
import torch

from lexctrl.model import ModelConfig, build_model
from lexctrl.training import (
    Schedule,
    TrainingDiverged,
    group_checksums,
    is_complexity_param,
    make_batches,
    train,
    train_two_stage,
    with_complexity_embeddings,
)
from lexctrl.model import encode_example

from conftest import tiny_config


def _state(model):
    return {k: v.clone() for k, v in model.state_dict().items()}


def test_schedule_shape():
    s = Schedule(lr=1e-3, warmup=10)
    assert s.lr_at(1) == pytest.approx(1e-4)
    assert s.lr_at(10) == pytest.approx(1e-3)
    assert s.lr_at(40) == pytest.approx(1e-3 * math.sqrt(10 / 40))
    assert Schedule(lr=1e-3, warmup=0).lr_at(1) == pytest.approx(1e-3)


def test_batches_respect_token_budget(small_data, vocab, lex):
    enc = [encode_example(ex, vocab, lex, "ce") for ex in small_data]
    batches = make_batches(enc, vocab, lex, 256)
    assert sum(len(b) for b in batches) == len(small_data)
    for b in batches:
        width = max(b.src_ids.shape[1], b.tgt_in_ids.shape[1])
        assert len(b) == 1 or width * len(b) <= 256


def test_loss_goes_down(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "ce")
    res = train(cfg, small_data[:100], Schedule(steps=200, lr=3e-3, warmup=20, max_tokens=512), vocab, lex)
    first = sum(res.losses[:10]) / 10
    last = sum(res.losses[-10:]) / 10
    assert last < first
    assert len(res.losses) == 200 and res.steps == 200


def test_same_seed_is_bit_identical(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "prompt")
    sched = Schedule(steps=30, lr=2e-3, warmup=5, max_tokens=512, seed=4)
    a = train(cfg, small_data[:80], sched, vocab, lex)
    b = train(cfg, small_data[:80], sched, vocab, lex)
    assert a.losses == b.losses
    for k, v in a.model.state_dict().items():
        assert torch.equal(v, b.model.state_dict()[k])


def test_zero_lr_leaves_parameters(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "ce")
    init = build_model(cfg, seed=0)
    before = _state(init)
    res = train(cfg, small_data[:50], Schedule(steps=10, lr=0.0, warmup=0, max_tokens=512), vocab, lex, init=init)
    for k, v in res.model.state_dict().items():
        assert torch.equal(v, before[k])


def test_checkpoints_and_validation(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "k2s")
    sched = Schedule(steps=20, lr=1e-3, warmup=5, max_tokens=512, checkpoint_every=5, eval_every=10)
    seen = []
    res = train(cfg, small_data[:50], sched, vocab, lex, valid=small_data[50:70],
                on_checkpoint=lambda step, m: seen.append(step))
    assert [c.step for c in res.checkpoints] == [5, 10, 15, 20] == seen
    assert [s for s, _ in res.valid_losses] == [10, 20, 20]
    assert res.checkpoints[1].valid_loss is not None


def test_divergence_is_reported(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "ce")
    model = build_model(cfg)
    with torch.no_grad():
        model.output_projection.weight.fill_(float("nan"))
    with pytest.raises(TrainingDiverged):
        train(cfg, small_data[:10], Schedule(steps=3, max_tokens=512), vocab, lex, init=model)


def test_empty_dataset_rejected(vocab, lex):
    with pytest.raises(ValueError):
        train(tiny_config(vocab, lex), [], Schedule(steps=1), vocab, lex)


def test_with_complexity_embeddings_copies_weights(vocab, lex):
    prompt = build_model(tiny_config(vocab, lex, "prompt"), seed=3)
    ce = with_complexity_embeddings(prompt)
    assert ce.variant == "ce"
    assert torch.count_nonzero(ce.complexity_embeddings.weight) == 0
    for k, v in prompt.state_dict().items():
        assert torch.equal(ce.state_dict()[k], v)


def test_stage_one_only_moves_m(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "prompt")
    pre = train(cfg, small_data[:80], Schedule(steps=20, lr=2e-3, warmup=5, max_tokens=512), vocab, lex).model
    before = _state(pre)
    s1 = Schedule(steps=25, lr=5e-3, warmup=5, max_tokens=512, checkpoint_every=5)
    first, second = train_two_stage(cfg, small_data[:80], pre, s1, Schedule(steps=0), vocab, lex)
    after = first.model.state_dict()
    assert not torch.equal(after["complexity_embeddings.weight"], torch.zeros_like(after["complexity_embeddings.weight"]))
    for k, v in before.items():
        assert torch.equal(after[k], v), k
    assert second.steps == 0
    frozen = [{g: h for g, h in c.checksums.items() if g != "complexity_embeddings"} for c in first.checkpoints]
    assert len(frozen) == 5 and all(f == frozen[0] for f in frozen)
    assert len({c.checksums["complexity_embeddings"] for c in first.checkpoints}) == 5


def test_stage_one_empty_equals_plain_training(small_data, vocab, lex):
    cfg = tiny_config(vocab, lex, "ce")
    pre = build_model(cfg, seed=2)
    sched = Schedule(steps=15, lr=2e-3, warmup=3, max_tokens=512, seed=1)
    _, second = train_two_stage(cfg, small_data[:60], pre, Schedule(steps=0), sched, vocab, lex)
    plain = train(cfg, small_data[:60], sched, vocab, lex, init=with_complexity_embeddings(pre))
    assert second.losses == plain.losses
    for k, v in plain.model.state_dict().items():
        assert torch.equal(second.model.state_dict()[k], v)


def test_checksums_detect_changes(vocab, lex):
    m = build_model(tiny_config(vocab, lex), seed=0)
    a = group_checksums(m)
    with torch.no_grad():
        m.decoder_layers[0].ffn.fc1.bias[0] += 1
    b = group_checksums(m)
    assert [g for g in a if a[g] != b[g]] == ["decoder_layers.0.ffn"]
    assert is_complexity_param("complexity_embeddings.weight")
