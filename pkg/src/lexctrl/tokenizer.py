"""Word-internal BPE and the token-id -> complexity-id lookup table.

Words are whitespace-separated. Each word is split into characters with an
end-of-word marker glued to the last one (``tree`` -> ``t r e e</w>``); merges
never cross word boundaries, so every token belongs to exactly one word.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .lexicon import ComplexityLexicon, PUNCT_ID

EOW = "</w>"
BOS, EOS, PAD, UNK, SEP = "<s>", "</s>", "<pad>", "<unk>", "<sep>"
BASE_SPECIALS = (PAD, BOS, EOS, UNK, SEP)


def level_token(name: str) -> str:
    return f"<z:{name}>"


class TokenizerError(ValueError):
    pass


def _word_symbols(word: str) -> list[str]:
    syms = list(word)
    syms[-1] = syms[-1] + EOW
    return syms


def _merge_pair(syms: list[str], a: str, b: str) -> list[str]:
    out = []
    i = 0
    n = len(syms)
    while i < n:
        if i < n - 1 and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


@dataclass
class Encoding:
    ids: list[int]
    word_index: list[int]

    def __len__(self):
        return len(self.ids)

    def groups(self) -> list[list[int]]:
        out: list[list[int]] = []
        for tid, w in zip(self.ids, self.word_index):
            if w == len(out):
                out.append([])
            out[w].append(tid)
        return out


class BpeVocab:
    """Sub-word vocabulary with ordered merge rules and level tokens."""

    def __init__(self, tokens: Sequence[str], merges: Sequence[tuple[str, str]], level_names: Sequence[str]):
        self.tokens = list(tokens)
        self.merges = [tuple(m) for m in merges]
        self.level_names = list(level_names)
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise TokenizerError("duplicate token strings in vocabulary")
        specials = list(BASE_SPECIALS) + [level_token(n) for n in self.level_names]
        missing = [s for s in specials if s not in self.token_to_id]
        if missing:
            raise TokenizerError(f"vocabulary lacks special tokens {missing}")
        self.special_tokens = specials
        self.special_ids = {s: self.token_to_id[s] for s in specials}
        self.pad_id = self.token_to_id[PAD]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]
        self.unk_id = self.token_to_id[UNK]
        self.sep_id = self.token_to_id[SEP]
        self.level_token_ids = {n: self.token_to_id[level_token(n)] for n in self.level_names}
        self._cache: dict[str, list[int]] = {}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return (
            isinstance(other, BpeVocab)
            and self.tokens == other.tokens
            and self.merges == other.merges
            and self.level_names == other.level_names
        )

    def is_special(self, tid: int) -> bool:
        return self.tokens[tid] in self.special_ids

    def ends_word(self, tid: int) -> bool:
        return self.tokens[tid].endswith(EOW)

    # -- encoding ----------------------------------------------------------

    def _apply_merges(self, word: str) -> list[str]:
        syms = _word_symbols(word)
        if len(syms) < 2:
            return syms
        # one pass per rule, in rule order; rules whose pair is absent are skipped
        for a, b in self.merges:
            if len(syms) < 2:
                break
            present = False
            for i in range(len(syms) - 1):
                if syms[i] == a and syms[i + 1] == b:
                    present = True
                    break
            if present:
                syms = _merge_pair(syms, a, b)
        return syms

    def encode_word(self, word: str) -> list[int]:
        cached = self._cache.get(word)
        if cached is None:
            cached = [self.token_to_id.get(s, self.unk_id) for s in self._apply_merges(word)]
            self._cache[word] = cached
        return list(cached)

    def encode(self, sentence: str) -> Encoding:
        ids: list[int] = []
        index: list[int] = []
        for w, word in enumerate(sentence.split()):
            pieces = self.encode_word(word)
            ids.extend(pieces)
            index.extend([w] * len(pieces))
        return Encoding(ids, index)

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        parts = []
        for tid in ids:
            tok = self.tokens[tid]
            if tok in self.special_ids:
                if skip_special and tid != self.unk_id:
                    continue
                parts.append(tok + " ")
            elif tok.endswith(EOW):
                parts.append(tok[: -len(EOW)] + " ")
            else:
                parts.append(tok)
        return "".join(parts).strip()

    def decode_words(self, ids: Iterable[int]) -> list[str]:
        return self.decode(ids).split()

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = ["#bpe-vocab v1", "#levels: " + ",".join(self.level_names)]
        lines.append("#specials: " + " ".join(self.special_tokens))
        lines.append("#tokens")
        lines.extend(f"{t}\t{i}" for i, t in enumerate(self.tokens))
        lines.append("#merges")
        lines.extend(f"{a}\t{b}" for a, b in self.merges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BpeVocab":
        lines = text.splitlines()
        if not lines or lines[0] != "#bpe-vocab v1":
            raise TokenizerError("not a v1 BPE vocab file")
        level_names: list[str] = []
        tokens: list[str] = []
        merges: list[tuple[str, str]] = []
        section = None
        for lineno, line in enumerate(lines[1:], 2):
            if line == "#tokens" and section is None or line == "#merges" and section == "#tokens":
                section = line
            elif section is None and line.startswith("#levels:"):
                level_names = [s for s in line[len("#levels:"):].strip().split(",") if s]
            elif section is None and line.startswith("#specials:"):
                continue
            elif section == "#tokens":
                tok, _, idx = line.rpartition("\t")
                if int(idx) != len(tokens):
                    raise TokenizerError(f"line {lineno}: token ids must be dense and ordered")
                tokens.append(tok)
            elif section == "#merges":
                a, sep, b = line.partition("\t")
                if not sep:
                    raise TokenizerError(f"line {lineno}: malformed merge rule {line!r}")
                merges.append((a, b))
            else:
                raise TokenizerError(f"line {lineno}: unexpected content {line!r}")
        return cls(tokens, merges, level_names)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BpeVocab":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def train_bpe(corpus: Sequence[str], num_merges: int, level_names: Sequence[str] = ()) -> BpeVocab:
    """Learn ``num_merges`` merge rules from ``corpus``.

    The most frequent adjacent pair is merged first; ties go to the
    lexicographically smallest pair. A pair whose concatenation is already a
    token (a special or an earlier merge result) is never merged, so every
    token has exactly one producing rule. Stops early when no pair is left.
    """
    if not corpus:
        raise TokenizerError("cannot train BPE on an empty corpus")
    if num_merges < 0:
        raise TokenizerError("num_merges must be >= 0")
    specials = list(BASE_SPECIALS) + [level_token(n) for n in level_names]

    word_freq = Counter(w for sent in corpus for w in sent.split())
    words = {w: _word_symbols(w) for w in sorted(word_freq)}
    alphabet = sorted({s for syms in words.values() for s in syms})

    merges: list[tuple[str, str]] = []
    known = set(alphabet) | set(specials)
    while len(merges) < num_merges:
        pairs: Counter = Counter()
        for w, syms in words.items():
            f = word_freq[w]
            for i in range(len(syms) - 1):
                pairs[(syms[i], syms[i + 1])] += f
        candidates = [(-c, p) for p, c in pairs.items() if p[0] + p[1] not in known]
        if not candidates:
            break
        _, best = min(candidates)
        merges.append(best)
        known.add(best[0] + best[1])
        for w, syms in words.items():
            if len(syms) > 1:
                words[w] = _merge_pair(syms, *best)

    tokens = specials + alphabet + [a + b for a, b in merges]
    return BpeVocab(tokens, merges, level_names)


@dataclass
class ComplexityTable:
    """Total token-id -> complexity-id lookup used for predicted tokens."""

    table: np.ndarray
    ambiguous: frozenset = frozenset()

    def __len__(self):
        return len(self.table)

    def __getitem__(self, tid):
        return int(self.table[tid])

    def __eq__(self, other):
        return isinstance(other, ComplexityTable) and np.array_equal(self.table, other.table)

    def lookup(self, ids: Sequence[int]) -> list[int]:
        return complexity_ids_for(self, ids)

    def to_text(self) -> str:
        return "".join(f"{i}\t{int(c)}\n" for i, c in enumerate(self.table))

    @classmethod
    def from_text(cls, text: str) -> "ComplexityTable":
        vals = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            i, _, c = line.partition("\t")
            if int(i) != len(vals):
                raise TokenizerError(f"line {lineno}: complexity table ids must be dense")
            vals.append(int(c))
        return cls(np.asarray(vals, dtype=np.int64))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ComplexityTable":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def build_complexity_table(
    vocab: BpeVocab, lex: ComplexityLexicon, corpus: Iterable[str] | None = None
) -> ComplexityTable:
    """Assign every token id a complexity id.

    Specials get the special id, level tokens the id of their level. Other
    tokens take the majority complexity id of the words they occur in over
    ``corpus`` (or over the lexicon headwords and punctuation marks when no
    corpus is given); ties and never-seen tokens get the ``<out>`` id.
    """
    votes: dict[int, Counter] = defaultdict(Counter)
    if corpus is None:
        word_freq = Counter(list(lex.entries) + sorted(lex.punctuation))
    else:
        word_freq = Counter(w for sent in corpus for w in sent.split())
    for word, f in sorted(word_freq.items()):
        cid = lex.id_of_word(word)
        for tid in vocab.encode_word(word):
            votes[tid][cid] += f

    table = np.full(len(vocab), lex.out_id, dtype=np.int64)
    ambiguous = set()
    for tid in range(len(vocab)):
        tok = vocab.tokens[tid]
        if tok in vocab.special_ids:
            table[tid] = lex.special_id
            continue
        counts = votes.get(tid)
        if not counts:
            if tok.endswith(EOW) and tok[: -len(EOW)] in lex.punctuation:
                table[tid] = PUNCT_ID
            continue
        if len(counts) > 1:
            ambiguous.add(tid)
        ranked = counts.most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            table[tid] = lex.out_id
        else:
            table[tid] = ranked[0][0]
    for name, tid in vocab.level_token_ids.items():
        table[tid] = lex.level(name).id
    return ComplexityTable(table, frozenset(ambiguous))


def complexity_ids_for(table: ComplexityTable, ids: Sequence[int]) -> list[int]:
    n = len(table.table)
    out = []
    for tid in ids:
        if not 0 <= tid < n:
            raise TokenizerError(f"token id {tid} out of range for vocabulary of size {n}")
        out.append(int(table.table[tid]))
    return out


def word_complexity_ids(encoding: Encoding, words: Sequence[str], lex: ComplexityLexicon) -> list[int]:
    """Context-exact complexity ids: each sub-word takes its source word's level."""
    per_word = [lex.id_of_word(w) for w in words]
    return [per_word[w] for w in encoding.word_index]
