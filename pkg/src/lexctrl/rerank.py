"""Pick the N-best candidate that best meets the requested levels."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .lexicon import ComplexityLexicon
from .metrics import exact_acc_f1


def exact_score(text: str, levels, lex: ComplexityLexicon) -> Fraction:
    acc, f1 = exact_acc_f1(text, levels, lex)
    return acc + f1


def rerank_score(text: str, levels, lex: ComplexityLexicon) -> float:
    """ACC + F1 of ``text`` against ``levels``, in [0, 2]."""
    return float(exact_score(text, levels, lex))


def rerank(candidates: Sequence, request, lex: ComplexityLexicon):
    """Return the candidate with the largest ACC + F1 for ``request.levels``.

    Strictly larger scores replace the incumbent, so the earliest maximal
    candidate wins; if every score is 0 the first candidate is returned.
    """
    if not candidates:
        raise ValueError("rerank needs at least one candidate")
    best = candidates[0]
    best_score = exact_score(best.text, request.levels, lex)
    for cand in candidates[1:]:
        s = exact_score(cand.text, request.levels, lex)
        if s > best_score:
            best, best_score = cand, s
    return best
