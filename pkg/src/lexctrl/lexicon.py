"""Graded vocabulary: word -> complexity level, level word sets and the id layout.

Complexity ids follow a fixed layout for a lexicon with ``U_lex`` lexical
levels::

    0            punctuation
    1 .. U_lex   lexical levels, easiest first
    U_lex + 1    <out>  (word not in the lexicon)
    U_lex + 2    special tokens (<s>, </s>, <pad>, <unk>, <sep>)

so the complexity-embedding matrix has ``U_lex + 3`` rows.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

DEFAULT_PUNCTUATION = frozenset(
    list(".,;:!?\"'()[]{}-") + ["...", "--"] + list("。，、；：！？“”‘’（）《》…")
)

PUNCT_ID = 0

_WORD_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+)*|\S")


class LexiconError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ComplexityLevel:
    id: int
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class AllowedWordSet:
    words: frozenset
    levels: frozenset

    def __contains__(self, word):
        return word.lower() in self.words

    def __len__(self):
        return len(self.words)


def split_words(text: str) -> list[str]:
    """Split a sentence into words, detaching punctuation marks."""
    return _WORD_RE.findall(text)


LevelLike = Union[ComplexityLevel, str, int]


@dataclass(frozen=True)
class ComplexityLexicon:
    entries: Mapping[str, ComplexityLevel]
    levels: tuple[ComplexityLevel, ...]
    punctuation: frozenset = field(default=DEFAULT_PUNCTUATION)

    def __post_init__(self):
        names = [lv.name for lv in self.levels]
        if len(set(names)) != len(names):
            raise LexiconError(f"duplicate level names in inventory: {names}")
        if [lv.id for lv in self.levels] != list(range(1, len(self.levels) + 1)):
            raise LexiconError("lexical level ids must be contiguous from 1")

    # -- id layout ---------------------------------------------------------

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def punct_level(self) -> ComplexityLevel:
        return ComplexityLevel(PUNCT_ID, "<punct>")

    @property
    def out_level(self) -> ComplexityLevel:
        return ComplexityLevel(self.num_levels + 1, "<out>")

    @property
    def special_level(self) -> ComplexityLevel:
        return ComplexityLevel(self.num_levels + 2, "<special>")

    @property
    def out_id(self) -> int:
        return self.num_levels + 1

    @property
    def special_id(self) -> int:
        return self.num_levels + 2

    @property
    def num_complexity_ids(self) -> int:
        return self.num_levels + 3

    # -- lookups -----------------------------------------------------------

    def level(self, level: LevelLike) -> ComplexityLevel:
        """Resolve a level given by object, name or lexical id."""
        if isinstance(level, ComplexityLevel):
            if level not in self.levels:
                raise LexiconError(f"level {level!r} is not a lexical level of this lexicon")
            return level
        if isinstance(level, int):
            if 1 <= level <= self.num_levels:
                return self.levels[level - 1]
            raise LexiconError(f"no lexical level with id {level}")
        for lv in self.levels:
            if lv.name == level:
                return lv
        raise LexiconError(f"unknown level name {level!r}")

    def resolve_levels(self, levels: Iterable[LevelLike]) -> list[ComplexityLevel]:
        """Resolve and deduplicate, ascending by id."""
        return sorted({self.level(lv) for lv in levels})

    def level_of_word(self, word: str) -> ComplexityLevel:
        w = word.lower()
        lv = self.entries.get(w)
        if lv is not None:
            return lv
        if word in self.punctuation:
            return self.punct_level
        return self.out_level

    def id_of_word(self, word: str) -> int:
        return self.level_of_word(word).id

    def is_punctuation(self, word: str) -> bool:
        return word in self.punctuation and word.lower() not in self.entries

    def words_of_level(self, level: LevelLike) -> frozenset:
        lv = self.level(level)
        return frozenset(w for w, l in self.entries.items() if l == lv)

    def allowed_word_set(self, levels: Iterable[LevelLike]) -> AllowedWordSet:
        wanted = frozenset(self.resolve_levels(levels))
        words = frozenset(w for w, lv in self.entries.items() if lv in wanted)
        return AllowedWordSet(words=words, levels=wanted)

    def __contains__(self, word):
        return word.lower() in self.entries

    def __len__(self):
        return len(self.entries)


def load_lexicon(
    records: Iterable[tuple[str, str]],
    levels: Sequence[str],
    punctuation: Iterable[str] | None = None,
) -> ComplexityLexicon:
    """Build a lexicon from ``(word, level_name)`` records.

    ``levels`` is the ordered level inventory, easiest first. A word listed
    twice with different levels is rejected; exact duplicates are tolerated.
    """
    inventory = tuple(ComplexityLevel(i + 1, name) for i, name in enumerate(levels))
    by_name = {lv.name: lv for lv in inventory}
    if len(by_name) != len(inventory):
        raise LexiconError(f"duplicate level names in inventory: {list(levels)}")
    entries: dict[str, ComplexityLevel] = {}
    for word, level_name in records:
        if level_name not in by_name:
            raise LexiconError(f"unknown level name {level_name!r} for word {word!r}")
        w = word.strip().lower()
        if not w:
            raise LexiconError("empty word in lexicon records")
        lv = by_name[level_name]
        prev = entries.get(w)
        if prev is not None and prev != lv:
            raise LexiconError(
                f"word {w!r} listed at conflicting levels {prev.name} and {lv.name}"
            )
        entries[w] = lv
    punct = DEFAULT_PUNCTUATION if punctuation is None else frozenset(punctuation)
    return ComplexityLexicon(entries=entries, levels=inventory, punctuation=punct)


def lexicon_coverage(lex: ComplexityLexicon, corpus: Iterable[str | Sequence[str]]) -> float:
    """Fraction of lexicon words that occur at least once in ``corpus``."""
    if not lex.entries:
        raise LexiconError("coverage of an empty lexicon is undefined")
    seen = set()
    for sent in corpus:
        words = split_words(sent) if isinstance(sent, str) else sent
        seen.update(w.lower() for w in words)
    return len(seen & lex.entries.keys()) / len(lex.entries)


# -- file format -------------------------------------------------------------


def format_lexicon(lex: ComplexityLexicon) -> str:
    lines = ["#levels: " + ",".join(lv.name for lv in lex.levels)]
    if lex.punctuation != DEFAULT_PUNCTUATION:
        lines.append("#punctuation: " + " ".join(sorted(lex.punctuation)))
    for word in sorted(lex.entries, key=lambda w: (lex.entries[w].id, w)):
        lines.append(f"{word}\t{lex.entries[word].name}")
    return "\n".join(lines) + "\n"


def parse_lexicon(text: str) -> ComplexityLexicon:
    levels = None
    punctuation = None
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#levels:"):
            levels = [s.strip() for s in line[len("#levels:"):].split(",") if s.strip()]
            continue
        if line.startswith("#punctuation:"):
            punctuation = line[len("#punctuation:"):].split()
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LexiconError(f"line {lineno}: expected 'word<TAB>level', got {line!r}")
        records.append((parts[0], parts[1].strip()))
    if levels is None:
        raise LexiconError("lexicon file lacks a '#levels:' header")
    return load_lexicon(records, levels, punctuation)


def read_lexicon(path: str | Path) -> ComplexityLexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


def write_lexicon(lex: ComplexityLexicon, path: str | Path) -> None:
    Path(path).write_text(format_lexicon(lex), encoding="utf-8")
