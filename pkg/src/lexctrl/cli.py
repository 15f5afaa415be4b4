"""Command-line entry point: ``lexctrl <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import build_dataset, default_grammar, read_dataset, split_dataset, write_dataset
from .decode import GenerationRequest, Candidate, beam_decode, greedy_decode, masked_decode
from .experiment import ExperimentConfig, render_table, run_experiment
from .lexicon import read_lexicon, write_lexicon
from .metrics import evaluate
from .model import VARIANTS, ModelConfig
from .rerank import rerank, rerank_score
from .tokenizer import build_complexity_table, train_bpe
from .training import Schedule, train

log = logging.getLogger("lexctrl")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _settings(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    merged.update({k: v for k, v in _load_config(getattr(args, "config", None)).items() if k in defaults})
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _csv(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


# -- subcommands -------------------------------------------------------------


def cmd_lexicon(args) -> int:
    grammar = default_grammar(args.grammar_seed, num_levels=args.num_levels)
    write_lexicon(grammar.lexicon(), args.out)
    print(f"wrote {len(grammar.lexicon())} entries to {args.out}")
    return 0


def cmd_corpus(args) -> int:
    grammar = default_grammar(args.grammar_seed)
    lex = grammar.lexicon()
    examples = build_dataset(grammar, args.size, args.threshold, seed=args.seed, lex=lex)
    train_set, valid_set, test_set = split_dataset(examples)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(train_set, out / "train.jsonl")
    write_dataset(valid_set, out / "valid.jsonl")
    write_dataset(test_set, out / "test.jsonl")
    write_lexicon(lex, out / "lexicon.tsv")
    print(f"train {len(train_set)} valid {len(valid_set)} test {len(test_set)} -> {out}")
    return 0


TRAIN_DEFAULTS = {
    "d_model": 64, "n_layers": 2, "n_heads": 2, "ffn_width": 256, "max_positions": 64,
    "dropout": 0.0, "steps": 1500, "lr": 1e-3, "warmup": 200, "max_tokens": 2048,
    "num_merges": 800, "checkpoint_every": 0,
}


def cmd_train(args) -> int:
    s = _settings(args, TRAIN_DEFAULTS)
    data = Path(args.data_dir)
    lex = read_lexicon(data / "lexicon.tsv")
    train_set = read_dataset(data / "train.jsonl")
    valid_path = data / "valid.jsonl"
    valid_set = read_dataset(valid_path) if valid_path.exists() else None
    corpus = [ex.sentence for ex in train_set]
    vocab = train_bpe(corpus, s["num_merges"], [lv.name for lv in lex.levels])
    table = build_complexity_table(vocab, lex, corpus)
    cfg = ModelConfig(
        vocab_size=len(vocab), num_complexity_ids=lex.num_complexity_ids,
        d_model=s["d_model"], n_layers=s["n_layers"], n_heads=s["n_heads"], ffn_width=s["ffn_width"],
        max_positions=s["max_positions"], variant=args.variant, dropout=s["dropout"],
    )
    sched = Schedule(steps=s["steps"], lr=s["lr"], warmup=s["warmup"], max_tokens=s["max_tokens"],
                     checkpoint_every=s["checkpoint_every"], seed=args.seed)
    result = train(cfg, train_set, sched, vocab, lex, valid=valid_set)
    extra = {"seed": args.seed, "schedule": sched.to_dict(), "losses": result.losses,
             "valid_losses": result.valid_losses}
    save_checkpoint(args.out, result.model, vocab, table, lex, result.steps, result.optimizer_state, extra)
    last = result.valid_losses[-1][1] if result.valid_losses else float("nan")
    print(f"trained {args.variant} for {result.steps} steps; valid loss {last:.4f}; saved {args.out}")
    return 0


def _decode(gen, req: GenerationRequest, mode: str, beam_size: int) -> list[Candidate]:
    if mode == "greedy":
        return [greedy_decode(gen, req)]
    if mode == "masked":
        return [masked_decode(gen, req)]
    return beam_decode(gen, req, beam_size)


def cmd_generate(args) -> int:
    ck = load_checkpoint(args.model)
    gen = ck.generator()
    if args.dataset:
        lines = []
        for ex in read_dataset(args.dataset):
            req = GenerationRequest(ex.keywords, ex.levels, args.max_len)
            cands = _decode(gen, req, args.decode, args.beam_size)
            best = rerank(cands, req, gen.lexicon) if args.decode == "beam" else cands[0]
            lines.append(best.text)
        text = "\n".join(lines) + "\n"
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    if not args.keywords:
        raise ValueError("--keywords or --dataset is required")
    levels = _csv(args.levels) if args.levels else []
    req = GenerationRequest(tuple(_csv(args.keywords)), tuple(levels), args.max_len)
    for cand in _decode(gen, req, args.decode, args.beam_size):
        print(f"{cand.score:.6f}\t{cand.text}")
    return 0


def _read_nbest(path: str) -> list[Candidate]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        score, sep, text = line.partition("\t")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'score<TAB>text'")
        out.append(Candidate(ids=[], text=text, score=float(score)))
    return out


def cmd_rerank(args) -> int:
    if args.lexicon:
        lex = read_lexicon(args.lexicon)
    elif args.model:
        lex = load_checkpoint(args.model).lexicon
    else:
        lex = default_grammar(0).lexicon()
    raw = args.request
    obj = json.loads(Path(raw).read_text(encoding="utf-8") if Path(raw).is_file() else raw)
    req = GenerationRequest(tuple(obj["keywords"]), tuple(obj.get("levels", ())), int(obj.get("max_len", 32)))
    best = rerank(_read_nbest(args.nbest), req, lex)
    print(f"{rerank_score(best.text, req.levels, lex):.6f}\t{best.text}")
    return 0


def cmd_evaluate(args) -> int:
    lex = read_lexicon(args.lexicon)
    dataset = read_dataset(args.dataset)
    hyps = Path(args.hyps).read_text(encoding="utf-8").split("\n")
    if hyps and hyps[-1] == "":
        hyps.pop()
    report = evaluate(dataset, hyps, lex, stem=args.stem)
    d = report.to_dict()
    if not args.per_sample:
        d.pop("samples")
    print(json.dumps(d, indent=2))
    return 0


def cmd_experiment(args) -> int:
    file_cfg = _load_config(args.config)
    cfg_dict = ExperimentConfig().to_dict()
    cfg_dict.update(file_cfg)
    if args.seed is not None:
        cfg_dict["data_seed"] = args.seed
        cfg_dict["seeds"] = [args.seed]
    if args.seeds:
        cfg_dict["seeds"] = [int(s) for s in _csv(args.seeds)]
    for k in ("size", "steps"):
        if getattr(args, k) is not None:
            cfg_dict[k] = getattr(args, k)
    if args.decoders:
        cfg_dict["decoders"] = _csv(args.decoders)
    cfg = ExperimentConfig.from_dict(cfg_dict)
    report = run_experiment(cfg)
    table = render_table(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        (out / "table.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexctrl", description="Lexical-complexity-controlled sentence generation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("lexicon", help="write the synthetic graded lexicon")
    s.add_argument("--out", required=True)
    s.add_argument("--grammar-seed", type=int, default=0)
    s.add_argument("--num-levels", type=int, default=4)
    s.set_defaults(func=cmd_lexicon)

    s = sub.add_parser("corpus", help="build train/valid/test JSONL datasets")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=10000)
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--grammar-seed", type=int, default=0)
    s.set_defaults(func=cmd_corpus)

    s = sub.add_parser("train", help="train one model variant")
    s.add_argument("--variant", choices=VARIANTS, required=True)
    s.add_argument("--data-dir", required=True, help="directory written by 'corpus'")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--config", help="JSON file with training settings")
    s.add_argument("--seed", type=int, default=0)
    for key, val in TRAIN_DEFAULTS.items():
        s.add_argument("--" + key.replace("_", "-"), type=type(val), default=None, help=f"default {val}")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="decode with a trained checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--keywords", help="comma-separated keywords")
    s.add_argument("--levels", help="comma-separated level names")
    s.add_argument("--decode", choices=("greedy", "masked", "beam"), default="greedy")
    s.add_argument("--beam-size", type=int, default=10)
    s.add_argument("--max-len", type=int, default=32)
    s.add_argument("--dataset", help="decode every request of a JSONL dataset (beam output is reranked)")
    s.add_argument("--output", help="write dataset hypotheses here instead of stdout")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("rerank", help="pick the best line of an n-best file")
    s.add_argument("--nbest", required=True, help="file of 'score<TAB>text' lines")
    s.add_argument("--request", required=True, help="JSON object or file with keywords and levels")
    s.add_argument("--lexicon")
    s.add_argument("--model", help="take the lexicon from this checkpoint")
    s.set_defaults(func=cmd_rerank)

    s = sub.add_parser("evaluate", help="score hypotheses against a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--hyps", required=True, help="one hypothesis per line, aligned with the dataset")
    s.add_argument("--lexicon", required=True)
    s.add_argument("--stem", action=argparse.BooleanOptionalAction, default=True,
                   help="match keywords across s/es/ed/ing inflections")
    s.add_argument("--per-sample", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", help="run the variant x decoder comparison")
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", help="comma-separated training seeds")
    s.add_argument("--size", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--decoders", help="comma-separated subset of greedy,masked,rerank")
    s.add_argument("--config", help="JSON file with experiment settings")
    s.add_argument("--out", help="directory for report.json and table.txt")
    s.set_defaults(func=cmd_experiment)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"lexctrl {args.command}: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
