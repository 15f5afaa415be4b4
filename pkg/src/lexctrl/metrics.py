"""Constraint-satisfaction metrics (K-C, ACC, P/R/F1) and generation quality.

Constraint metrics are averages of per-sample ratios. They are accumulated
as exact fractions and rounded to float once, so the result does not depend
on summation order.

Word-level policy: ACC runs over the words of the generated sentence with
punctuation excluded from numerator and denominator; ``<out>`` words count
as violations and never contribute a level to P/R/F1.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .lexicon import ComplexityLexicon, LevelLike, split_words

STEM_SUFFIXES = ("ing", "ed", "es", "s")


class MetricError(ValueError):
    pass


def _stem_forms(word: str) -> set[str]:
    forms = {word}
    for suf in STEM_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 2:
            forms.add(word[: -len(suf)])
    return forms


def keyword_in(keyword: str, words: Sequence[str], stem: bool = True) -> bool:
    """Whole-word, case-insensitive match; with ``stem`` also across s/es/ed/ing."""
    k = keyword.lower()
    lowered = [w.lower() for w in words]
    if k in lowered:
        return True
    if not stem:
        return False
    kf = _stem_forms(k)
    return any(kf & _stem_forms(w) for w in lowered)


@dataclass(frozen=True)
class SampleCounts:
    kw_hits: int   # count^C1
    m: int         # keywords given
    in_level: int  # count^C2
    t: int         # non-punctuation words generated
    level_hits: int  # count^C3
    n: int         # levels requested
    g: int         # lexical levels present in the generation


def content_words(sentence: str, lex: ComplexityLexicon) -> list[str]:
    return [w for w in split_words(sentence) if not lex.is_punctuation(w)]


def present_levels(words: Iterable[str], lex: ComplexityLexicon) -> set[int]:
    lexical = range(1, lex.num_levels + 1)
    return {i for i in (lex.id_of_word(w) for w in words) if i in lexical}


def _level_ids(levels: Iterable[LevelLike], lex: ComplexityLexicon) -> set[int]:
    return {lv.id for lv in lex.resolve_levels(levels)}


def sample_counts(
    keywords: Sequence[str],
    levels: Iterable[LevelLike],
    sentence: str,
    lex: ComplexityLexicon,
    stem: bool = True,
) -> SampleCounts:
    all_words = split_words(sentence)
    words = [w for w in all_words if not lex.is_punctuation(w)]
    wanted = _level_ids(levels, lex)
    got = present_levels(words, lex)
    return SampleCounts(
        kw_hits=sum(keyword_in(k, all_words, stem) for k in keywords),
        m=len(keywords),
        in_level=sum(lex.id_of_word(w) in wanted for w in words),
        t=len(words),
        level_hits=len(got & wanted),
        n=len(wanted),
        g=len(got),
    )


def _mean(fracs: Sequence[Fraction]) -> float:
    if not fracs:
        raise MetricError("no samples")
    return float(sum(fracs, Fraction(0)) / len(fracs))


def keyword_metric(samples: Sequence[tuple[Sequence[str], str]], stem: bool = True) -> float:
    """K-C: mean fraction of keywords found in each generated sentence."""
    fracs = []
    for keywords, sentence in samples:
        if not keywords:
            raise MetricError("sample with no keywords")
        words = split_words(sentence)
        hits = sum(keyword_in(k, words, stem) for k in keywords)
        fracs.append(Fraction(hits, len(keywords)))
    return _mean(fracs)


def accuracy_metric(samples: Sequence[tuple[Iterable[LevelLike], str]], lex: ComplexityLexicon) -> float:
    """ACC: mean share of generated words whose level is among the requested ones."""
    fracs = []
    for levels, sentence in samples:
        wanted = _level_ids(levels, lex)
        words = content_words(sentence, lex)
        if not words:
            raise MetricError(f"generated sentence has no words: {sentence!r}")
        fracs.append(Fraction(sum(lex.id_of_word(w) in wanted for w in words), len(words)))
    return _mean(fracs)


def level_prf_metric(
    samples: Sequence[tuple[Iterable[LevelLike], str]], lex: ComplexityLexicon
) -> tuple[float, float, float]:
    """Level precision, recall and F1, each averaged per sample.

    A generation with no lexical level at all contributes 0 to P and F1.
    """
    ps, rs, fs = [], [], []
    for levels, sentence in samples:
        wanted = _level_ids(levels, lex)
        if not wanted:
            raise MetricError("sample with no requested levels")
        got = present_levels(content_words(sentence, lex), lex)
        hit = len(got & wanted)
        ps.append(Fraction(hit, len(got)) if got else Fraction(0))
        rs.append(Fraction(hit, len(wanted)))
        fs.append(Fraction(2 * hit, len(wanted) + len(got)))
    return _mean(ps), _mean(rs), _mean(fs)


def exact_acc_f1(sentence: str, levels: Iterable[LevelLike], lex: ComplexityLexicon) -> tuple[Fraction, Fraction]:
    """Per-sentence ACC and F1 as fractions; an empty sentence scores ACC 0."""
    wanted = _level_ids(levels, lex)
    words = content_words(sentence, lex)
    acc = Fraction(sum(lex.id_of_word(w) in wanted for w in words), len(words)) if words else Fraction(0)
    got = present_levels(words, lex)
    f1 = Fraction(2 * len(got & wanted), len(wanted) + len(got)) if wanted or got else Fraction(0)
    return acc, f1


def sentence_acc_f1(sentence: str, levels: Iterable[LevelLike], lex: ComplexityLexicon) -> tuple[float, float]:
    acc, f1 = exact_acc_f1(sentence, levels, lex)
    return float(acc), float(f1)


# -- generation quality ------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _tok(s) -> list[str]:
    return s.split() if isinstance(s, str) else list(s)


def bleu_n(candidates: Sequence, references: Sequence, n: int = 4) -> float:
    """Corpus BLEU with uniform weights over 1..n-grams, one reference each, no smoothing."""
    if len(candidates) != len(references):
        raise MetricError("candidates and references differ in length")
    if not candidates:
        raise MetricError("empty corpus")
    if n < 1:
        raise MetricError("n must be >= 1")
    matches = [0] * n
    totals = [0] * n
    hyp_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        c, r = _tok(cand), _tok(ref)
        hyp_len += len(c)
        ref_len += len(r)
        for k in range(1, n + 1):
            cc = Counter(_ngrams(c, k))
            rc = Counter(_ngrams(r, k))
            matches[k - 1] += sum(min(v, rc[g]) for g, v in cc.items())
            totals[k - 1] += max(0, len(c) - k + 1)
    if min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / n
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def _corpus_ngrams(candidates: Sequence, n: int) -> Counter:
    if n < 1:
        raise MetricError("n must be >= 1")
    counts: Counter = Counter()
    for cand in candidates:
        counts.update(_ngrams(_tok(cand), n))
    if not counts:
        raise MetricError(f"no {n}-grams in candidate set")
    return counts


def distinct_n(candidates: Sequence, n: int) -> float:
    counts = _corpus_ngrams(candidates, n)
    return len(counts) / sum(counts.values())


def entropy_n(candidates: Sequence, n: int) -> float:
    counts = _corpus_ngrams(candidates, n)
    total = sum(counts.values())
    # fsum: exact sum of the terms, independent of n-gram order
    return -math.fsum(f / total * math.log(f / total) for f in counts.values())


# -- reports -----------------------------------------------------------------


@dataclass
class ConstraintReport:
    kc: float
    acc: float
    precision: float
    recall: float
    f1: float
    bleu2: float | None = None
    bleu4: float | None = None
    distinct1: float | None = None
    distinct2: float | None = None
    entropy2: float | None = None
    entropy4: float | None = None
    num_samples: int = 0
    settings: dict = field(default_factory=dict)
    samples: list[SampleCounts] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintReport":
        d = dict(d)
        d["samples"] = [SampleCounts(**s) for s in d.get("samples", [])]
        return cls(**d)

    def summary(self) -> dict:
        keys = ("kc", "acc", "precision", "recall", "f1", "bleu2", "bleu4",
                "distinct1", "distinct2", "entropy2", "entropy4")
        return {k: getattr(self, k) for k in keys}


def _maybe(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def constraint_scores(keywords_levels_hyps, lex: ComplexityLexicon, stem: bool = True):
    """(kc, acc, p, r, f1, per-sample counts) for ``(keywords, levels, hyp)`` triples.

    Generations without any word get ACC 0 instead of raising, so a report
    can still be produced for a degenerate system.
    """
    rows = [sample_counts(k, l, h, lex, stem) for k, l, h in keywords_levels_hyps]
    if not rows:
        raise MetricError("no samples")
    kc = _mean([Fraction(s.kw_hits, s.m) for s in rows])
    acc = _mean([Fraction(s.in_level, s.t) if s.t else Fraction(0) for s in rows])
    p = _mean([Fraction(s.level_hits, s.g) if s.g else Fraction(0) for s in rows])
    r = _mean([Fraction(s.level_hits, s.n) for s in rows])
    f1 = _mean([Fraction(2 * s.level_hits, s.n + s.g) for s in rows])
    return kc, acc, p, r, f1, rows


def evaluate(dataset, generations: Sequence[str], lex: ComplexityLexicon, stem: bool = True) -> ConstraintReport:
    """Score generations against the requests and references of ``dataset``."""
    if len(dataset) != len(generations):
        raise MetricError(f"{len(dataset)} examples but {len(generations)} generations")
    kc, acc, p, r, f1, rows = constraint_scores(
        [(ex.keywords, ex.levels, h) for ex, h in zip(dataset, generations)], lex, stem
    )
    refs = [ex.sentence for ex in dataset]
    return ConstraintReport(
        kc=kc, acc=acc, precision=p, recall=r, f1=f1,
        bleu2=_maybe(bleu_n, generations, refs, 2),
        bleu4=_maybe(bleu_n, generations, refs, 4),
        distinct1=_maybe(distinct_n, generations, 1),
        distinct2=_maybe(distinct_n, generations, 2),
        entropy2=_maybe(entropy_n, generations, 2),
        entropy4=_maybe(entropy_n, generations, 4),
        num_samples=len(rows),
        settings={"stem": stem, "acc_unit": "word", "punctuation_in_acc": False},
        samples=rows,
    )
