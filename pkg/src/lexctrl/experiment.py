"""End-to-end comparison of input variants and decoding strategies."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from statistics import mean
from typing import Sequence

from .corpus import build_dataset, default_grammar, split_dataset
from .decode import GenerationRequest, Generator, beam_decode, greedy_decode, masked_decode
from .metrics import ConstraintReport, evaluate
from .model import ModelConfig
from .rerank import rerank
from .tokenizer import build_complexity_table, train_bpe
from .training import Schedule, train

log = logging.getLogger(__name__)

DECODERS = ("greedy", "masked", "rerank")
METRIC_KEYS = ("kc", "acc", "precision", "recall", "f1", "bleu2", "bleu4",
               "distinct1", "distinct2", "entropy2", "entropy4")


@dataclass
class ExperimentConfig:
    size: int = 10000
    data_seed: int = 0
    grammar_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])
    threshold: float = 0.9
    num_merges: int = 800
    split: list[float] = field(default_factory=lambda: [0.90, 0.08, 0.02])
    variants: list[str] = field(default_factory=lambda: ["k2s", "prompt", "ce"])
    decoders: list[str] = field(default_factory=lambda: list(DECODERS))
    beam_size: int = 10
    max_len: int = 32
    stem: bool = True
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_width: int = 256
    max_positions: int = 64
    dropout: float = 0.0
    steps: int = 1500
    lr: float = 1e-3
    warmup: int = 200
    max_tokens: int = 2048

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def decode_all(gen: Generator, requests: Sequence[GenerationRequest], decoder: str, beam_size: int = 10) -> list[str]:
    out = []
    for req in requests:
        if decoder == "greedy":
            out.append(greedy_decode(gen, req).text)
        elif decoder == "masked":
            out.append(masked_decode(gen, req).text)
        elif decoder == "rerank":
            nbest = beam_decode(gen, req, beam_size)
            out.append(rerank(nbest, req, gen.lexicon).text)
        else:
            raise ValueError(f"unknown decoder {decoder!r}")
    return out


def _rounded(report: ConstraintReport) -> dict:
    return {k: (None if v is None else round(v, 6)) for k, v in report.summary().items()}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Train every variant for every seed and score every decoder.

    The returned report holds no timing data, so identical configs give
    identical reports.
    """
    grammar = default_grammar(cfg.grammar_seed)
    lex = grammar.lexicon()
    examples = build_dataset(grammar, cfg.size, cfg.threshold, seed=cfg.data_seed, lex=lex)
    train_set, valid_set, test_set = split_dataset(examples, tuple(cfg.split))
    if not test_set:
        raise ValueError("test split is empty; increase size")
    corpus = [ex.sentence for ex in train_set]
    vocab = train_bpe(corpus, cfg.num_merges, [lv.name for lv in lex.levels])
    table = build_complexity_table(vocab, lex, corpus)
    requests = [GenerationRequest.from_example(ex, cfg.max_len) for ex in test_set]

    ref_report = evaluate(test_set, [ex.sentence for ex in test_set], lex, cfg.stem)
    cells = []
    for seed in cfg.seeds:
        for variant in cfg.variants:
            mcfg = ModelConfig(
                vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids,
                d_model=cfg.d_model, n_layers=cfg.n_layers, n_heads=cfg.n_heads,
                ffn_width=cfg.ffn_width, max_positions=cfg.max_positions,
                variant=variant, dropout=cfg.dropout,
            )
            sched = Schedule(steps=cfg.steps, lr=cfg.lr, warmup=cfg.warmup, max_tokens=cfg.max_tokens, seed=seed)
            t0 = time.perf_counter()
            result = train(mcfg, train_set, sched, vocab, lex, valid=valid_set)
            valid_loss = round(result.valid_losses[-1][1], 6) if result.valid_losses else None
            log.info("trained %s seed %d in %.1fs (valid loss %s)", variant, seed,
                     time.perf_counter() - t0, valid_loss)
            gen = Generator(result.model, vocab, table, lex)
            for decoder in cfg.decoders:
                hyps = decode_all(gen, requests, decoder, cfg.beam_size)
                report = evaluate(test_set, hyps, lex, cfg.stem)
                cells.append({
                    "variant": variant,
                    "decoder": decoder,
                    "seed": seed,
                    "valid_loss": valid_loss,
                    "metrics": _rounded(report),
                })

    averaged = []
    for variant in cfg.variants:
        for decoder in cfg.decoders:
            rows = [c["metrics"] for c in cells if c["variant"] == variant and c["decoder"] == decoder]
            avg = {}
            for k in METRIC_KEYS:
                vals = [r[k] for r in rows if r[k] is not None]
                avg[k] = round(mean(vals), 6) if vals else None
            averaged.append({"variant": variant, "decoder": decoder, "metrics": avg})

    return {
        "config": cfg.to_dict(),
        "dataset": {"train": len(train_set), "valid": len(valid_set), "test": len(test_set),
                    "vocab_size": len(vocab), "lexicon_size": len(lex)},
        "reference": _rounded(ref_report),
        "cells": cells,
        "averaged": averaged,
    }


def averaged_metrics(report: dict, variant: str, decoder: str = "greedy") -> dict:
    for row in report["averaged"]:
        if row["variant"] == variant and row["decoder"] == decoder:
            return row["metrics"]
    raise KeyError((variant, decoder))


_COLUMNS = (("K-C", "kc"), ("ACC", "acc"), ("P", "precision"), ("R", "recall"), ("F1", "f1"),
            ("B-2", "bleu2"), ("B-4", "bleu4"), ("D-1", "distinct1"), ("D-2", "distinct2"),
            ("E-2", "entropy2"), ("E-4", "entropy4"))
_PERCENT = {"kc", "acc", "precision", "recall", "f1", "bleu2", "bleu4", "distinct1", "distinct2"}


def render_table(report: dict) -> str:
    """Text table, one row per (variant, decoder), ratios in percent."""
    header = f"{'system':<16}" + "".join(f"{name:>8}" for name, _ in _COLUMNS)
    lines = [header, "-" * len(header)]

    def row(label, metrics):
        cells = []
        for _, key in _COLUMNS:
            v = metrics.get(key)
            if v is None:
                cells.append(f"{'-':>8}")
            else:
                cells.append(f"{100 * v if key in _PERCENT else v:>8.2f}")
        return f"{label:<16}" + "".join(cells)

    lines.append(row("reference", report["reference"]))
    for r in report["averaged"]:
        lines.append(row(f"{r['variant']}/{r['decoder']}", r["metrics"]))
    return "\n".join(lines) + "\n"
