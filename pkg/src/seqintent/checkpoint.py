"""Versioned binary checkpoint container for trained predictors.

Layout (all integers little-endian):

    bytes 0..3    magic b"SQNT"
    u32           format version (currently 1)
    32 bytes      sha256 of the training vocabulary
    u32 + utf8    model kind tag ("recurrent" | "ngram")
    u32 + utf8    metadata JSON (intention index, hyperparameters, ...)
    u32           tensor count
    per tensor:   u32 + utf8 name, u32 ndim, u64 x ndim shape, float64 data

Tensors are stored as raw little-endian float64, so a save/load round trip
reproduces bitwise-identical predictions.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .corpus import ActionVocabulary
from .ngram import NgramPredictor
from .recurrent import PARAM_KEYS, RecurrentPredictor

MAGIC = b"SQNT"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


class CorruptCheckpoint(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class VocabularyMismatch(CheckpointError):
    pass


def _model_tensors(model) -> dict[str, np.ndarray]:
    if model.kind == "recurrent":
        return {k: model.params[k] for k in PARAM_KEYS}
    if model.kind == "ngram":
        return {"bigram": model.bigram, "unigram": model.unigram}
    raise CheckpointError(f"cannot serialize model kind {model.kind!r}")


def save_model(model) -> bytes:
    meta = {
        "intention": model.intention,
        "vocab_size": model.vocab_size,
        "metadata": model.metadata,
    }
    if model.kind == "ngram":
        meta["epsilon"] = model.epsilon
    out = [MAGIC, struct.pack("<I", VERSION), model.vocab_hash]

    def put_str(s: str):
        raw = s.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)

    put_str(model.kind)
    put_str(json.dumps(meta, sort_keys=True))
    tensors = _model_tensors(model)
    out.append(struct.pack("<I", len(tensors)))
    for name, tensor in tensors.items():
        put_str(name)
        out.append(struct.pack("<I", tensor.ndim))
        out.append(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        out.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_model(data: bytes, vocabulary: ActionVocabulary | None = None):
    """Reconstruct a predictor from checkpoint bytes.

    Passing the inference-time vocabulary enforces the hash binding; loading
    a checkpoint trained on a different vocabulary raises VocabularyMismatch.
    """
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptCheckpoint("bad magic bytes: not a predictor checkpoint")
    version = r.u32()
    if version != VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, expected {VERSION}")
    vocab_hash = r.take(32)
    if vocabulary is not None and vocabulary.sha256() != vocab_hash:
        raise VocabularyMismatch("checkpoint was trained on a different vocabulary")
    kind = r.string()
    try:
        meta = json.loads(r.string())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable metadata: {exc.msg}") from None
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.string()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = r.take(8 * count)
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if r.pos != len(data):
        raise CorruptCheckpoint(f"{len(data) - r.pos} trailing bytes after tensor table")

    intention = int(meta.get("intention", 0))
    metadata = meta.get("metadata", {})
    if kind == "recurrent":
        missing = [k for k in PARAM_KEYS if k not in tensors]
        if missing:
            raise CorruptCheckpoint(f"missing tensors: {missing}")
        return RecurrentPredictor(tensors, intention, vocab_hash, metadata)
    if kind == "ngram":
        if "bigram" not in tensors or "unigram" not in tensors:
            raise CorruptCheckpoint("missing count tables")
        return NgramPredictor(
            tensors["bigram"],
            tensors["unigram"],
            epsilon=float(meta.get("epsilon", 0.0)),
            intention=intention,
            vocab_hash=vocab_hash,
            metadata=metadata,
        )
    raise CorruptCheckpoint(f"unknown model kind {kind!r}")
