"""Teacher-forced training: Adam with warmup and inverse-sqrt decay."""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import torch

from .lexicon import ComplexityLexicon
from .model import (
    Batch,
    ModelConfig,
    Seq2SeqTransformer,
    batch_loss,
    build_model,
    collate,
    encode_example,
    parameter_group,
)
from .tokenizer import BpeVocab

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Schedule:
    steps: int = 1000
    lr: float = 3e-4
    warmup: int = 4000
    max_tokens: int = 8192
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-9
    clip_norm: float = 0.0
    checkpoint_every: int = 0
    eval_every: int = 0
    seed: int = 0

    def lr_at(self, step: int) -> float:
        """Learning rate for 1-based ``step``."""
        if self.warmup <= 0:
            return self.lr
        if step <= self.warmup:
            return self.lr * step / self.warmup
        return self.lr * math.sqrt(self.warmup / step)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class Checkpoint:
    step: int
    checksums: dict[str, str]
    train_loss: float
    valid_loss: float | None = None


@dataclass
class TrainResult:
    model: Seq2SeqTransformer
    losses: list[float] = field(default_factory=list)
    valid_losses: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[Checkpoint] = field(default_factory=list)
    optimizer_state: dict | None = None
    steps: int = 0


def group_checksums(model: Seq2SeqTransformer) -> dict[str, str]:
    """SHA-256 of the raw bytes of every parameter group."""
    hashes: dict[str, hashlib._Hash] = {}
    for name, p in model.named_parameters():
        h = hashes.setdefault(parameter_group(name), hashlib.sha256())
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return {k: h.hexdigest() for k, h in hashes.items()}


def make_batches(encoded: Sequence, vocab: BpeVocab, lex: ComplexityLexicon, max_tokens: int) -> list[Batch]:
    """Sort by length and cut into padded batches of at most ``max_tokens``."""
    order = sorted(range(len(encoded)), key=lambda i: (len(encoded[i][1][0]), len(encoded[i][0][0]), i))
    batches, chunk = [], []
    widest = 0
    for i in order:
        width = max(len(encoded[i][0][0]), len(encoded[i][1][0]))
        if chunk and max(widest, width) * (len(chunk) + 1) > max_tokens:
            batches.append(collate([encoded[j] for j in chunk], vocab, lex))
            chunk, widest = [], 0
        chunk.append(i)
        widest = max(widest, width)
    if chunk:
        batches.append(collate([encoded[j] for j in chunk], vocab, lex))
    return batches


@torch.no_grad()
def evaluate_loss(model: Seq2SeqTransformer, batches: Iterable[Batch]) -> float:
    was_training = model.training
    model.eval()
    total = 0.0
    count = 0
    for b in batches:
        n = b.num_tokens
        total += float(batch_loss(model, b)) * n
        count += n
    model.train(was_training)
    return total / max(count, 1)


def train(
    config: ModelConfig,
    dataset: Sequence,
    schedule: Schedule,
    vocab: BpeVocab,
    lex: ComplexityLexicon,
    init: Seq2SeqTransformer | None = None,
    valid: Sequence | None = None,
    trainable: Callable[[str], bool] | None = None,
    on_checkpoint: Callable[[int, Seq2SeqTransformer], None] | None = None,
) -> TrainResult:
    """Train from ``init`` (or a fresh seeded model) for ``schedule.steps`` updates.

    ``trainable`` selects parameters by name; the rest are frozen and never
    touched by the optimizer.
    """
    if not dataset:
        raise ValueError("training set is empty")
    torch.manual_seed(schedule.seed)
    rng = random.Random(schedule.seed)
    if init is None:
        model = build_model(config, seed=schedule.seed)
    else:
        model = init
    model.train()

    encoded = [encode_example(ex, vocab, lex, config.variant) for ex in dataset]
    batches = make_batches(encoded, vocab, lex, schedule.max_tokens)
    valid_batches = None
    if valid:
        valid_batches = make_batches(
            [encode_example(ex, vocab, lex, config.variant) for ex in valid], vocab, lex, schedule.max_tokens
        )

    selected = [p for n, p in model.named_parameters() if trainable is None or trainable(n)]
    for n, p in model.named_parameters():
        p.requires_grad_(trainable is None or trainable(n))
    result = TrainResult(model=model)
    if not selected or schedule.steps <= 0:
        result.checkpoints.append(Checkpoint(0, group_checksums(model), float("nan")))
        for p in model.parameters():
            p.requires_grad_(True)
        return result
    opt = torch.optim.Adam(selected, lr=schedule.lr, betas=schedule.betas, eps=schedule.eps)

    order: list[int] = []
    for step in range(1, schedule.steps + 1):
        if not order:
            order = list(range(len(batches)))
            rng.shuffle(order)
        batch = batches[order.pop()]
        for g in opt.param_groups:
            g["lr"] = schedule.lr_at(step)
        opt.zero_grad(set_to_none=True)
        loss = batch_loss(model, batch)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(f"non-finite loss {value} at step {step} (lr={schedule.lr_at(step):.3g})")
        loss.backward()
        if schedule.clip_norm > 0:
            torch.nn.utils.clip_grad_norm_(selected, schedule.clip_norm)
        opt.step()
        result.losses.append(value)

        if valid_batches and schedule.eval_every and step % schedule.eval_every == 0:
            vl = evaluate_loss(model, valid_batches)
            result.valid_losses.append((step, vl))
            log.info("step %d train %.4f valid %.4f", step, value, vl)
        if schedule.checkpoint_every and step % schedule.checkpoint_every == 0:
            vl = result.valid_losses[-1][1] if result.valid_losses and result.valid_losses[-1][0] == step else None
            result.checkpoints.append(Checkpoint(step, group_checksums(model), value, vl))
            if on_checkpoint is not None:
                on_checkpoint(step, model)

    if valid_batches:
        result.valid_losses.append((schedule.steps, evaluate_loss(model, valid_batches)))
    for p in model.parameters():
        p.requires_grad_(True)
    model.eval()
    result.steps = schedule.steps
    result.optimizer_state = opt.state_dict()
    return result


def with_complexity_embeddings(model: Seq2SeqTransformer) -> Seq2SeqTransformer:
    """A CE copy of ``model``; ``M`` is zero unless ``model`` already had one."""
    if model.complexity_embeddings is not None:
        out = build_model(model.config)
        out.load_state_dict(model.state_dict())
        return out.to(next(model.parameters()).dtype)
    cfg = ModelConfig(**{**model.config.to_dict(), "variant": "ce"})
    out = build_model(cfg).to(next(model.parameters()).dtype)
    state = out.state_dict()
    state.update(model.state_dict())
    out.load_state_dict(state)
    with torch.no_grad():
        out.complexity_embeddings.weight.zero_()
    return out


def is_complexity_param(name: str) -> bool:
    return name.startswith("complexity_embeddings")


def train_two_stage(
    config: ModelConfig,
    dataset: Sequence,
    pretrained: Seq2SeqTransformer,
    stage1: Schedule,
    stage2: Schedule,
    vocab: BpeVocab,
    lex: ComplexityLexicon,
    valid: Sequence | None = None,
) -> tuple[TrainResult, TrainResult]:
    """Fit only ``M`` with everything else frozen, then fine-tune everything."""
    model = with_complexity_embeddings(pretrained)
    cfg = ModelConfig(**{**config.to_dict(), "variant": "ce"})
    first = train(cfg, dataset, stage1, vocab, lex, init=model, valid=valid, trainable=is_complexity_param)
    second = train(cfg, dataset, stage2, vocab, lex, init=first.model, valid=valid)
    return first, second
