"""Greedy, masked (controlled) and beam decoding with complexity-id feedback.

At inference the complexity id of a predicted token is unknown, so every
strategy looks it up in the static :class:`ComplexityTable` and feeds the
``(token id, complexity id)`` pair into the next decoder step.

Ties in an argmax go to the lowest token id; beam candidates are ordered by
``(-score, hypothesis index, token id)``, so width-1 beam search and greedy
decoding coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import torch

from .lexicon import ComplexityLexicon
from .model import build_input_sequence
from .tokenizer import BpeVocab, ComplexityTable, complexity_ids_for


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    keywords: tuple[str, ...]
    levels: tuple[str, ...] = ()
    max_len: int = 32

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        object.__setattr__(self, "levels", tuple(self.levels))
        if not 1 <= len(self.keywords) <= 5:
            raise DecodeError(f"expected 1-5 keywords, got {len(self.keywords)}")
        if self.max_len < 1:
            raise DecodeError("max_len must be >= 1")

    @classmethod
    def from_example(cls, ex, max_len: int = 32) -> "GenerationRequest":
        return cls(tuple(ex.keywords), tuple(ex.levels), max_len)


@dataclass
class Candidate:
    ids: list[int]
    text: str
    score: float
    finished: bool = True

    @property
    def length(self) -> int:
        return len(self.ids)


@dataclass
class Generator:
    """A trained model together with the tables it was trained with."""

    model: object
    vocab: BpeVocab
    table: ComplexityTable
    lexicon: ComplexityLexicon

    @property
    def variant(self) -> str:
        return self.model.variant


@dataclass
class _Context:
    gen: Generator
    memory: torch.Tensor
    src_mask: torch.Tensor
    trace: Optional[list] = None

    def next_logprobs(self, prefixes: Sequence[Sequence[int]]) -> torch.Tensor:
        """Log-probabilities of the next token for each prefix, shape (B, V)."""
        gen = self.gen
        length = len(prefixes[0])
        ids = torch.tensor([[gen.vocab.bos_id, *p] for p in prefixes], dtype=torch.long)
        special = gen.lexicon.special_id
        cids = torch.tensor(
            [[special, *complexity_ids_for(gen.table, p)] for p in prefixes], dtype=torch.long
        )
        if self.trace is not None:
            self.trace.append((ids.tolist(), cids.tolist()))
        b = len(prefixes)
        memory = self.memory.expand(b, -1, -1)
        src_mask = self.src_mask.expand(b, -1)
        with torch.no_grad():
            logits = gen.model.decode(memory, src_mask, ids, cids)[:, length, :]
        return torch.log_softmax(logits.double(), dim=-1)


def _start(gen: Generator, request: GenerationRequest, trace) -> _Context:
    src, src_c = build_input_sequence(request.keywords, request.levels, gen.vocab, gen.lexicon, gen.variant)
    src_ids = torch.tensor([src], dtype=torch.long)
    src_cids = torch.tensor([src_c], dtype=torch.long)
    mask = torch.ones_like(src_ids, dtype=torch.bool)
    with torch.no_grad():
        memory = gen.model.encode(src_ids, src_cids, mask)
    return _Context(gen, memory, mask, trace)


def _candidate(gen: Generator, ids: list[int], score: float) -> Candidate:
    eos = gen.vocab.eos_id
    finished = bool(ids) and ids[-1] == eos
    body = ids[:-1] if finished else ids
    return Candidate(ids=list(ids), text=gen.vocab.decode(body), score=score, finished=finished)


def greedy_decode(gen: Generator, request: GenerationRequest, trace: list | None = None) -> Candidate:
    """Argmax decoding until ``</s>`` or ``request.max_len`` tokens.

    If ``trace`` is a list, the decoder inputs of every step are appended to it.
    """
    ctx = _start(gen, request, trace)
    prefix: list[int] = []
    score = 0.0
    for _ in range(request.max_len):
        logp = ctx.next_logprobs([prefix])[0]
        tok = int(torch.argmax(logp))
        score += float(logp[tok])
        prefix.append(tok)
        if tok == gen.vocab.eos_id:
            break
    return _candidate(gen, prefix, score)


# -- controlled decoding -----------------------------------------------------


@dataclass
class _TrieNode:
    children: dict[int, "_TrieNode"] = field(default_factory=dict)
    # fewest further tokens needed to finish a word from here
    to_finish: int = 0


class WordTrie:
    """Token-level prefix tree over the encodings of the permitted words."""

    def __init__(self, encodings: Sequence[Sequence[int]]):
        self.root = _TrieNode()
        self.words = 0
        for enc in encodings:
            if not enc:
                continue
            node = self.root
            for tid in enc[:-1]:
                node = node.children.setdefault(tid, _TrieNode())
            # the final piece of a word always returns to the root
            node.children[enc[-1]] = self.root
            self.words += 1
        self._finish_costs(self.root, set())

    def _finish_costs(self, node: _TrieNode, seen: set) -> int:
        if id(node) in seen:
            return node.to_finish
        seen.add(id(node))
        costs = []
        for child in node.children.values():
            costs.append(1 if child is self.root else 1 + self._finish_costs(child, seen))
        node.to_finish = 0 if node is self.root else min(costs)
        return node.to_finish

    def step(self, node: _TrieNode, tid: int) -> _TrieNode:
        return node.children[tid]

    def allowed(self, node: _TrieNode, remaining: int) -> list[int]:
        """Tokens from ``node`` that still leave room to finish the word."""
        out = []
        for tid, child in node.children.items():
            need = 1 if child is self.root else 1 + child.to_finish
            if need <= remaining:
                out.append(tid)
        return out


def permitted_words(request: GenerationRequest, lex: ComplexityLexicon) -> set[str]:
    """Words of the requested levels, punctuation marks and the keywords."""
    words = set(lex.allowed_word_set(request.levels).words)
    words.update(lex.punctuation)
    words.update(k.lower() for k in request.keywords)
    return words


def build_word_trie(request: GenerationRequest, gen: Generator) -> WordTrie:
    words = sorted(permitted_words(request, gen.lexicon))
    encs = []
    for w in words:
        enc = gen.vocab.encode_word(w)
        if gen.vocab.unk_id not in enc:
            encs.append(enc)
    return WordTrie(encs)


def masked_decode(gen: Generator, request: GenerationRequest, trace: list | None = None) -> Candidate:
    """Greedy decoding with every token outside the permitted words masked out.

    A token is permitted when it extends the current word towards some word
    of the requested levels, a punctuation mark or a keyword. ``</s>`` is
    permitted at word boundaries after at least one word.
    """
    trie = build_word_trie(request, gen)
    if not trie.root.children:
        raise DecodeError("no token is permitted for this request")
    ctx = _start(gen, request, trace)
    eos = gen.vocab.eos_id
    node = trie.root
    prefix: list[int] = []
    score = 0.0
    for step in range(request.max_len):
        logp = ctx.next_logprobs([prefix])[0]
        allowed = trie.allowed(node, request.max_len - step)
        if node is trie.root and prefix:
            allowed.append(eos)
        if not allowed:
            break
        mask = torch.full_like(logp, float("-inf"))
        idx = torch.tensor(sorted(allowed), dtype=torch.long)
        mask[idx] = 0.0
        masked = torch.log_softmax(logp + mask, dim=-1)
        tok = int(torch.argmax(masked))
        score += float(masked[tok])
        prefix.append(tok)
        if tok == eos:
            break
        node = trie.step(node, tok)
    return _candidate(gen, prefix, score)


# -- beam search -------------------------------------------------------------


def beam_search(
    next_logprobs: Callable[[list[list[int]]], torch.Tensor],
    eos_id: int,
    beam: int,
    max_len: int,
    alpha: float = 1.0,
) -> list[tuple[list[int], float, bool]]:
    """Length-normalised beam search over a next-token log-probability function.

    Returns up to ``beam`` hypotheses ``(tokens, raw score, finished)`` sorted
    by ``raw score / len**alpha``, best first.
    """
    if beam < 1:
        raise DecodeError("beam width must be >= 1")
    live: list[tuple[list[int], float]] = [([], 0.0)]
    done: list[tuple[list[int], float, bool]] = []
    for _ in range(max_len):
        logp = next_logprobs([p for p, _ in live])
        scores = torch.tensor([s for _, s in live], dtype=logp.dtype)[:, None] + logp
        flat = scores.reshape(-1)
        vocab = logp.shape[1]
        # stable sort: ties keep the earlier hypothesis and the lower token id
        order = torch.sort(flat, descending=True, stable=True).indices[:beam].tolist()
        nxt = []
        for j in order:
            s = float(flat[j])
            if s == float("-inf"):
                break
            i, tok = divmod(j, vocab)
            seq = live[i][0] + [tok]
            if tok == eos_id:
                done.append((seq, s, True))
            else:
                nxt.append((seq, s))
        live = nxt
        if len(done) >= beam or not live:
            break
    else:
        done.extend((p, s, False) for p, s in live)
    done.sort(key=lambda h: -h[1] / (len(h[0]) ** alpha))
    return done[:beam]


def beam_decode(gen: Generator, request: GenerationRequest, n: int = 10, alpha: float = 1.0,
                trace: list | None = None) -> list[Candidate]:
    if n < 1:
        raise DecodeError("beam width must be >= 1")
    ctx = _start(gen, request, trace)
    hyps = beam_search(ctx.next_logprobs, gen.vocab.eos_id, n, request.max_len, alpha)
    return [_candidate(gen, seq, score) for seq, score, _ in hyps]
