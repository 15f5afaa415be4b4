"""Encoder-decoder transformer with complexity embeddings.

Every input position is represented as ``tok + pos + com``: a token
embedding, a learned position embedding and, for the CE variant, a row of
the complexity-embedding matrix ``M`` selected by the token's complexity id.
The same lookup tables serve encoder and decoder.

Three variants share this code:

* ``k2s``    -- keywords only on the source side, no ``M``
* ``prompt`` -- keywords, ``<sep>`` and one level token per requested level
* ``ce``     -- as ``prompt`` plus complexity embeddings on both sides
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .lexicon import ComplexityLexicon, LevelLike
from .tokenizer import BpeVocab, word_complexity_ids

VARIANTS = ("k2s", "prompt", "ce")


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    num_complexity_ids: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_width: int = 256
    max_positions: int = 64
    variant: str = "ce"
    dropout: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d_model % self.n_heads:
            raise ModelError("d_model must be divisible by n_heads")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    src_ids: torch.Tensor      # (B, S)
    src_cids: torch.Tensor     # (B, S)
    tgt_in_ids: torch.Tensor   # (B, T) decoder input, starts with <s>
    tgt_in_cids: torch.Tensor  # (B, T)
    tgt_out_ids: torch.Tensor  # (B, T) prediction targets, ends with </s>
    src_mask: torch.Tensor     # (B, S) True at real tokens
    tgt_mask: torch.Tensor     # (B, T) True at real tokens

    def __len__(self):
        return self.src_ids.shape[0]

    @property
    def num_tokens(self) -> int:
        return int(self.tgt_mask.sum())

    def select(self, index) -> "Batch":
        return Batch(*(getattr(self, f)[index] for f in self.__dataclass_fields__))


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x):
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, query, key, mask):
        # mask: bool, broadcastable to (B, 1, Lq, Lk); True = may attend
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(key))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~mask, float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        out = (attn @ v).transpose(1, 2).reshape(query.shape)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, width: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(d_model, width)
        self.fc2 = nn.Linear(width, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.dropout(F.relu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_width, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        x = self.norm1(x + self.dropout(self.self_attn(x, x, mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_width, cfg.dropout)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        x = self.norm1(x + self.dropout(self.self_attn(x, x, self_mask)))
        x = self.norm2(x + self.dropout(self.cross_attn(x, memory, cross_mask)))
        return self.norm3(x + self.dropout(self.ffn(x)))


class Seq2SeqTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.token_embeddings = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.position_embeddings = nn.Embedding(cfg.max_positions, cfg.d_model)
        if cfg.variant == "ce":
            self.complexity_embeddings = nn.Embedding(cfg.num_complexity_ids, cfg.d_model)
        else:
            self.complexity_embeddings = None
        self.encoder_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.decoder_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_layers))
        self.output_projection = nn.Linear(cfg.d_model, cfg.vocab_size)
        self.dropout = nn.Dropout(cfg.dropout)

    @property
    def variant(self) -> str:
        return self.config.variant

    def embed(self, ids: torch.Tensor, cids: torch.Tensor) -> torch.Tensor:
        if ids.shape != cids.shape:
            raise ModelError(f"token ids {tuple(ids.shape)} and complexity ids {tuple(cids.shape)} differ in shape")
        length = ids.shape[-1]
        if length > self.config.max_positions:
            raise ModelError(f"sequence of length {length} exceeds max_positions={self.config.max_positions}")
        pos = torch.arange(length, device=ids.device)
        x = self.token_embeddings(ids) + self.position_embeddings(pos)
        if self.complexity_embeddings is not None:
            x = x + self.complexity_embeddings(cids)
        return x

    def encode(self, src_ids, src_cids, src_mask):
        mask = src_mask[:, None, None, :]
        x = self.dropout(self.embed(src_ids, src_cids))
        for layer in self.encoder_layers:
            x = layer(x, mask)
        return x

    def decode(self, memory, src_mask, tgt_ids, tgt_cids):
        t = tgt_ids.shape[1]
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_ids.device).tril()
        self_mask = causal[None, None, :, :]
        cross_mask = src_mask[:, None, None, :]
        x = self.dropout(self.embed(tgt_ids, tgt_cids))
        for layer in self.decoder_layers:
            x = layer(x, memory, self_mask, cross_mask)
        return self.output_projection(x)

    def forward(self, batch: Batch) -> torch.Tensor:
        if batch.src_ids.shape[0] != batch.tgt_in_ids.shape[0]:
            raise ModelError("source and target batch sizes differ")
        memory = self.encode(batch.src_ids, batch.src_cids, batch.src_mask)
        return self.decode(memory, batch.src_mask, batch.tgt_in_ids, batch.tgt_in_cids)


def init_parameters(model: Seq2SeqTransformer, seed: int) -> None:
    """Seeded scaled-uniform init; ``M`` starts at zero."""
    gen = torch.Generator().manual_seed(seed)
    d = model.config.d_model
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.startswith("complexity_embeddings"):
                p.zero_()
            elif "norm" in name:
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                p.zero_()
            elif "embeddings" in name:
                bound = math.sqrt(3.0 / d)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)
            else:
                bound = 1.0 / math.sqrt(p.shape[1])
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)


def build_model(cfg: ModelConfig, seed: int = 0, dtype=torch.float32) -> Seq2SeqTransformer:
    model = Seq2SeqTransformer(cfg).to(dtype)
    init_parameters(model, seed)
    return model


def parameter_group(name: str) -> str:
    """Group a parameter name by its top-level module, layers kept apart."""
    parts = name.split(".")
    if parts[0] in ("encoder_layers", "decoder_layers"):
        return ".".join(parts[:3])
    return parts[0]


def loss_fn(logits: torch.Tensor, tgt_ids: torch.Tensor, tgt_mask: torch.Tensor) -> torch.Tensor:
    """Mean token negative log-likelihood over non-pad positions."""
    if logits.shape[:2] != tgt_ids.shape or tgt_ids.shape != tgt_mask.shape:
        raise ModelError("logits, targets and mask shapes do not align")
    n = int(tgt_mask.sum())
    if n == 0:
        raise ModelError("every target position is padding")
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, tgt_ids.unsqueeze(-1)).squeeze(-1)
    return nll.masked_select(tgt_mask).sum() / n


def batch_loss(model: Seq2SeqTransformer, batch: Batch) -> torch.Tensor:
    return loss_fn(model(batch), batch.tgt_out_ids, batch.tgt_mask)


def gradients(model: Seq2SeqTransformer, batch: Batch) -> dict[str, torch.Tensor]:
    """Gradient of the batch loss for every parameter, by reverse-mode autodiff."""
    params = dict(model.named_parameters())
    loss = batch_loss(model, batch)
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g
        for (name, p), g in zip(params.items(), grads)
    }


# -- input construction ------------------------------------------------------


def build_input_sequence(
    keywords: Sequence[str],
    levels: Sequence[LevelLike],
    vocab: BpeVocab,
    lex: ComplexityLexicon,
    variant: str,
) -> tuple[list[int], list[int]]:
    """Source ids and complexity ids: keywords, then ``<sep>`` and level tokens.

    Level tokens follow in ascending level order. ``k2s`` has keywords only.
    """
    if not keywords:
        raise ModelError("at least one keyword is required")
    text = " ".join(keywords)
    enc = vocab.encode(text)
    ids = list(enc.ids)
    cids = word_complexity_ids(enc, text.split(), lex)
    if variant == "k2s":
        return ids, cids
    resolved = lex.resolve_levels(levels)
    if not resolved:
        raise ModelError(f"variant {variant!r} needs at least one level")
    ids.append(vocab.sep_id)
    cids.append(lex.special_id)
    for lv in resolved:
        ids.append(vocab.level_token_ids[lv.name])
        cids.append(lv.id)
    return ids, cids


def build_target_sequence(sentence: str, vocab: BpeVocab, lex: ComplexityLexicon) -> tuple[list[int], list[int]]:
    """Target ids with ``</s>`` appended and context-exact complexity ids."""
    enc = vocab.encode(sentence)
    cids = word_complexity_ids(enc, sentence.split(), lex)
    return list(enc.ids) + [vocab.eos_id], cids + [lex.special_id]


def collate(
    pairs: Sequence[tuple[tuple[list[int], list[int]], tuple[list[int], list[int]]]],
    vocab: BpeVocab,
    lex: ComplexityLexicon,
) -> Batch:
    """Right-pad ``((src, src_c), (tgt, tgt_c))`` pairs into a batch."""
    b = len(pairs)
    s_len = max(len(src[0]) for src, _ in pairs)
    t_len = max(len(tgt[0]) for _, tgt in pairs)
    pad, special = vocab.pad_id, lex.special_id
    src_ids = torch.full((b, s_len), pad, dtype=torch.long)
    src_cids = torch.full((b, s_len), special, dtype=torch.long)
    tin = torch.full((b, t_len), pad, dtype=torch.long)
    tin_c = torch.full((b, t_len), special, dtype=torch.long)
    tout = torch.full((b, t_len), pad, dtype=torch.long)
    src_mask = torch.zeros((b, s_len), dtype=torch.bool)
    tgt_mask = torch.zeros((b, t_len), dtype=torch.bool)
    for i, ((s, sc), (t, tc)) in enumerate(pairs):
        if len(s) != len(sc) or len(t) != len(tc):
            raise ModelError("complexity ids must align with token ids")
        src_ids[i, : len(s)] = torch.tensor(s)
        src_cids[i, : len(s)] = torch.tensor(sc)
        src_mask[i, : len(s)] = True
        # decoder input: <s> followed by the target shifted right
        tin[i, 0] = vocab.bos_id
        tin_c[i, 0] = special
        tin[i, 1 : len(t)] = torch.tensor(t[:-1], dtype=torch.long)
        tin_c[i, 1 : len(t)] = torch.tensor(tc[:-1], dtype=torch.long)
        tout[i, : len(t)] = torch.tensor(t)
        tgt_mask[i, : len(t)] = True
    return Batch(src_ids, src_cids, tin, tin_c, tout, src_mask, tgt_mask)


def encode_example(ex, vocab: BpeVocab, lex: ComplexityLexicon, variant: str):
    src = build_input_sequence(ex.keywords, ex.levels, vocab, lex, variant)
    tgt = build_target_sequence(ex.sentence, vocab, lex)
    return src, tgt
