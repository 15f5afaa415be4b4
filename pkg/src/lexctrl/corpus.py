"""Synthetic graded language and the keyword-to-sentence dataset pipeline.

Sentences come from part-of-speech templates. Function-word slots hold
first-level words only; content slots hold words of every level. Each
sentence first draws the set of levels it will use (the easiest level is
always present through its function words) and then fills content slots so
every drawn level appears at least once.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lexicon import ComplexityLexicon, load_lexicon, split_words

CONTENT_SLOTS = ("NOUN", "ADJ", "VERB", "VERB3", "ADV")

DEFAULT_TEMPLATES = (
    "DET NOUN VERB3 DET NOUN .",
    "DET ADJ NOUN VERB3 DET NOUN .",
    "PPL VERB DET ADJ NOUN .",
    "PSG VERB3 DET NOUN .",
    "DET ADJ NOUN VERB3 ADV .",
    "DET NOUN VERB3 DET ADJ NOUN PREP DET NOUN .",
    "DET NOUN PREP DET NOUN VERB3 DET NOUN ADV .",
    "PPL VERB DET NOUN CONJ DET ADJ NOUN VERB3 DET NOUN .",
    "DET ADJ NOUN VERB3 DET NOUN , CONJ PPL VERB DET ADJ NOUN PREP DET NOUN .",
    "DET ADJ ADJ NOUN VERB3 DET ADJ NOUN PREP DET ADJ NOUN CONJ PPL VERB DET NOUN ADV .",
    "DET ADJ NOUN PREP DET NOUN VERB3 DET ADJ NOUN , CONJ PPL VERB DET ADJ NOUN PREP DET NOUN ADV .",
)

FUNCTION_WORDS = {
    "DET": ["the", "a", "this", "that", "every", "my"],
    "PREP": ["in", "on", "near", "with", "under", "for"],
    "CONJ": ["and", "but", "so", "while"],
    "PSG": ["he", "she", "it"],
    "PPL": ["we", "they", "you"],
}

# real words seeded into the first two levels; the rest are generated
SEED_WORDS = {
    0: {"NOUN": ["tree", "water", "dog", "house"], "VERB": ["need", "like", "want"], "ADJ": ["big", "good"]},
    1: {"NOUN": ["peach", "light", "garden"], "VERB": ["carry", "follow"], "ADJ": ["quiet"]},
}

_ONSETS = list("bdfgklmnprtvz") + ["br", "dr", "gl", "pl", "tr", "st"]
_VOWELS = list("aeiou")
_CODAS = ["", "", "", "n", "m", "l", "r", "k"]


class CorpusError(ValueError):
    pass


@dataclass
class SyntheticGrammar:
    templates: list[list[str]]
    slot_words: dict[str, dict[str, list[str]]]
    levels: list[str]
    seed: int = 0
    extra_level_prob: float = 0.35

    def __post_init__(self):
        if not self.templates:
            raise CorpusError("grammar has no templates")
        for tpl in self.templates:
            for slot in tpl:
                if slot in self.slot_words and not any(self.slot_words[slot].values()):
                    raise CorpusError(f"slot {slot!r} has no words")

    def content_slots(self, template: Sequence[str]) -> list[int]:
        return [i for i, s in enumerate(template) if s in CONTENT_SLOTS]

    def function_words(self) -> set[str]:
        out = set()
        for slot, by_level in self.slot_words.items():
            if slot not in CONTENT_SLOTS:
                for words in by_level.values():
                    out.update(words)
        return out

    def lexicon(self, punctuation: Iterable[str] | None = None) -> ComplexityLexicon:
        records = []
        for by_level in self.slot_words.values():
            for level, words in by_level.items():
                records.extend((w, level) for w in words)
        return load_lexicon(records, self.levels, punctuation)


def _pseudo_words(rng: random.Random, count: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        n_syll = rng.choice((2, 2, 3))
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n_syll - 1))
        word += rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
        if word in taken or word.endswith("s"):
            continue
        taken.add(word)
        taken.add(word + "s")
        out.append(word)
    return out


def default_grammar(
    seed: int = 0,
    num_levels: int = 4,
    nouns: int = 40,
    adjectives: int = 20,
    verbs: int = 20,
    adverbs: int = 10,
) -> SyntheticGrammar:
    """The default four-level language, a little over 400 words."""
    rng = random.Random(seed)
    levels = [chr(ord("A") + i) for i in range(num_levels)]
    taken = {w for ws in FUNCTION_WORDS.values() for w in ws}
    for by_pos in SEED_WORDS.values():
        for ws in by_pos.values():
            taken.update(ws)
            taken.update(w + "s" for w in ws)
    sizes = {"NOUN": nouns, "ADJ": adjectives, "VERB": verbs, "ADV": adverbs}
    slot_words: dict[str, dict[str, list[str]]] = {s: {} for s in CONTENT_SLOTS}
    for li, level in enumerate(levels):
        for pos, size in sizes.items():
            seeded = list(SEED_WORDS.get(li, {}).get(pos, []))
            words = seeded + _pseudo_words(rng, size - len(seeded), taken)
            if pos == "ADV":
                words = [w + "ly" for w in words]
            slot_words[pos][level] = words
        slot_words["VERB3"][level] = [v + "s" for v in slot_words["VERB"][level]]
    for slot, words in FUNCTION_WORDS.items():
        slot_words[slot] = {levels[0]: list(words)}
    return SyntheticGrammar(
        templates=[t.split() for t in DEFAULT_TEMPLATES],
        slot_words=slot_words,
        levels=levels,
        seed=seed,
    )


def _fill(grammar: SyntheticGrammar, rng: random.Random) -> str:
    template = rng.choice(grammar.templates)
    content = grammar.content_slots(template)
    chosen = [grammar.levels[0]] + [lv for lv in grammar.levels[1:] if rng.random() < grammar.extra_level_prob]
    while len(chosen) > max(1, len(content)):
        chosen.pop(rng.randrange(1, len(chosen)))
    # first |chosen| content slots get distinct levels, the rest any chosen level
    order = content[:]
    rng.shuffle(order)
    slot_level = {}
    for k, pos in enumerate(order):
        slot_level[pos] = chosen[k] if k < len(chosen) else rng.choice(chosen)
    words = []
    for i, slot in enumerate(template):
        if slot not in grammar.slot_words:
            words.append(slot)
            continue
        by_level = grammar.slot_words[slot]
        level = slot_level.get(i, grammar.levels[0])
        pool = by_level.get(level) or by_level[next(iter(by_level))]
        words.append(rng.choice(pool))
    return " ".join(words)


def generate_corpus(grammar: SyntheticGrammar, n: int, seed: int | None = None) -> list[str]:
    if n < 0:
        raise CorpusError("n must be >= 0")
    if not grammar.slot_words:
        raise CorpusError("grammar has no slot words")
    rng = random.Random(grammar.seed if seed is None else seed)
    return [_fill(grammar, rng) for _ in range(n)]


def in_lexicon_fraction(sentence: str, lex: ComplexityLexicon) -> float:
    words = [w for w in split_words(sentence) if not lex.is_punctuation(w)]
    if not words:
        return 0.0
    return sum(w in lex for w in words) / len(words)


def select_sentences(sentences: Sequence[str], lex: ComplexityLexicon, threshold: float) -> list[str]:
    """Keep sentences whose share of in-lexicon words is at least ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise CorpusError("threshold must lie in [0, 1]")
    return [s for s in sentences if in_lexicon_fraction(s, lex) >= threshold]


def keyword_count(num_words: int) -> int:
    return min(5, max(1, math.ceil(num_words / 5)))


def extract_keywords(
    sentence: str,
    lex: ComplexityLexicon,
    seed: int | random.Random = 0,
    stopwords: Iterable[str] = (),
) -> list[str]:
    """Sample 1-5 distinct in-lexicon words of ``sentence``, kept in sentence order.

    The count grows with sentence length (punctuation marks included) and is
    capped by the number of eligible words.
    """
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    stop = {w.lower() for w in stopwords}
    tokens = split_words(sentence)
    eligible: list[str] = []
    for w in tokens:
        if lex.is_punctuation(w):
            continue
        lw = w.lower()
        if lw in lex and lw not in stop and lw not in eligible:
            eligible.append(lw)
    if not eligible:
        raise CorpusError(f"no eligible keyword in sentence {sentence!r}")
    k = min(keyword_count(len(tokens)), len(eligible))
    picks = sorted(rng.sample(range(len(eligible)), k))
    return [eligible[i] for i in picks]


def annotate_levels(sentence: str, lex: ComplexityLexicon) -> set:
    lexical = set(lex.levels)
    return {lv for lv in map(lex.level_of_word, split_words(sentence)) if lv in lexical}


@dataclass(frozen=True)
class Example:
    keywords: tuple[str, ...]
    levels: tuple[str, ...]
    sentence: str
    token_levels: tuple[int, ...] = field(default=())

    def to_json(self) -> str:
        obj = {
            "keywords": list(self.keywords),
            "levels": list(self.levels),
            "sentence": self.sentence,
            "token_levels": list(self.token_levels),
        }
        return json.dumps(obj, ensure_ascii=False)


def make_example(sentence: str, lex: ComplexityLexicon, rng: random.Random, stopwords: Iterable[str] = ()) -> Example:
    keywords = extract_keywords(sentence, lex, rng, stopwords)
    levels = sorted(annotate_levels(sentence, lex))
    return Example(
        keywords=tuple(keywords),
        levels=tuple(lv.name for lv in levels),
        sentence=sentence,
        token_levels=tuple(lex.id_of_word(w) for w in split_words(sentence)),
    )


def build_dataset(
    grammar: SyntheticGrammar,
    n: int,
    threshold: float = 0.9,
    seed: int = 0,
    lex: ComplexityLexicon | None = None,
) -> list[Example]:
    """Generate, select, extract keywords and annotate levels."""
    lex = lex or grammar.lexicon()
    rng = random.Random(seed)
    sentences = generate_corpus(grammar, n, seed=rng.randrange(2**32))
    kept = select_sentences(sentences, lex, threshold)
    stop = grammar.function_words()
    return [make_example(s, lex, rng, stop) for s in kept]


def split_dataset(
    examples: Sequence[Example], ratios: tuple[float, float, float] = (0.90, 0.08, 0.02)
) -> tuple[list[Example], list[Example], list[Example]]:
    n = len(examples)
    n_train = int(round(n * ratios[0]))
    n_valid = int(round(n * ratios[1]))
    train = list(examples[:n_train])
    valid = list(examples[n_train : n_train + n_valid])
    test = list(examples[n_train + n_valid :])
    return train, valid, test


class DatasetFormatError(ValueError):
    pass


def write_dataset(examples: Iterable[Example], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            f.write(ex.to_json())
            f.write("\n")


def _parse_example(obj, lineno: int) -> Example:
    if not isinstance(obj, Mapping):
        raise DatasetFormatError(f"line {lineno}: expected a JSON object")
    try:
        keywords, levels, sentence, token_levels = (
            obj["keywords"], obj["levels"], obj["sentence"], obj["token_levels"],
        )
    except KeyError as e:
        raise DatasetFormatError(f"line {lineno}: missing field {e.args[0]!r}") from None
    ok = (
        isinstance(keywords, list) and all(isinstance(k, str) for k in keywords)
        and isinstance(levels, list) and all(isinstance(k, str) for k in levels)
        and isinstance(sentence, str)
        and isinstance(token_levels, list)
        and all(isinstance(t, int) and not isinstance(t, bool) for t in token_levels)
    )
    if not ok:
        raise DatasetFormatError(f"line {lineno}: field of wrong type")
    return Example(tuple(keywords), tuple(levels), sentence, tuple(token_levels))


def read_dataset(path: str | Path) -> list[Example]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"line {lineno}: {e.msg}") from None
            out.append(_parse_example(obj, lineno))
    return out
