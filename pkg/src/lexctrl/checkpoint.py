"""Checkpoint container: one JSON document, tensors as base64 little-endian bytes.

A checkpoint carries everything ``generate`` needs: model config, parameters,
optimizer state, step count, BPE vocabulary, complexity table and lexicon.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .decode import Generator
from .lexicon import ComplexityLexicon, format_lexicon, parse_lexicon
from .model import ModelConfig, Seq2SeqTransformer
from .tokenizer import BpeVocab, ComplexityTable

FORMAT = "lexctrl-checkpoint"
VERSION = 1

_DTYPES = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.int64: "int64",
    torch.int32: "int32",
    torch.bool: "bool",
}


class CheckpointError(ValueError):
    pass


def encode_tensor(t: torch.Tensor) -> dict:
    t = t.detach().cpu().contiguous()
    if t.dtype not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {t.dtype}")
    arr = t.numpy()
    raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    return {"__tensor__": _DTYPES[t.dtype], "shape": list(t.shape), "data": base64.b64encode(raw).decode("ascii")}


def decode_tensor(d: dict) -> torch.Tensor:
    dtype = np.dtype(d["__tensor__"]).newbyteorder("<")
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype=dtype).reshape(d["shape"])
    return torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))


def _to_jsonable(obj: Any):
    if isinstance(obj, torch.Tensor):
        return encode_tensor(obj)
    if isinstance(obj, dict):
        # optimizer state uses int keys
        return {"__dict__": [[_to_jsonable(k), _to_jsonable(v)] for k, v in obj.items()]}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(x) for x in obj]
    return obj


def _from_jsonable(obj: Any):
    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return decode_tensor(obj)
        if "__dict__" in obj:
            return {_from_jsonable(k): _from_jsonable(v) for k, v in obj["__dict__"]}
        return {k: _from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_jsonable(x) for x in obj]
    return obj


@dataclass
class LoadedCheckpoint:
    config: ModelConfig
    model: Seq2SeqTransformer
    vocab: BpeVocab
    table: ComplexityTable
    lexicon: ComplexityLexicon
    step: int
    optimizer_state: dict | None
    extra: dict

    def generator(self) -> Generator:
        return Generator(self.model, self.vocab, self.table, self.lexicon)


def checkpoint_document(
    model: Seq2SeqTransformer,
    vocab: BpeVocab,
    table: ComplexityTable,
    lexicon: ComplexityLexicon,
    step: int = 0,
    optimizer_state: dict | None = None,
    extra: dict | None = None,
) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "step": step,
        "parameters": {k: encode_tensor(v) for k, v in model.state_dict().items()},
        "optimizer": None if optimizer_state is None else _to_jsonable(optimizer_state),
        "vocab": vocab.to_text(),
        "complexity_table": table.to_text(),
        "lexicon": format_lexicon(lexicon),
        "extra": extra or {},
    }


def save_checkpoint(path: str | Path, model, vocab, table, lexicon, step=0, optimizer_state=None, extra=None) -> None:
    doc = checkpoint_document(model, vocab, table, lexicon, step, optimizer_state, extra)
    Path(path).write_text(json.dumps(doc, sort_keys=False), encoding="utf-8")


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(**doc["config"])
    state = {k: decode_tensor(v) for k, v in doc["parameters"].items()}
    dtype = next(iter(state.values())).dtype if state else torch.float32
    model = Seq2SeqTransformer(cfg).to(dtype)
    model.load_state_dict(state)
    model.eval()
    opt = doc.get("optimizer")
    return LoadedCheckpoint(
        config=cfg,
        model=model,
        vocab=BpeVocab.from_text(doc["vocab"]),
        table=ComplexityTable.from_text(doc["complexity_table"]),
        lexicon=parse_lexicon(doc["lexicon"]),
        step=doc["step"],
        optimizer_state=None if opt is None else _from_jsonable(opt),
        extra=doc.get("extra", {}),
    )
