"""Versioned binary model checkpoints.

Layout, all little-endian:

    bytes 0..3   magic "VBTM"
    bytes 4..7   u32 format version (currently 1)
    bytes 8..63  model configuration, 7 x i64: input_dim, model_dim, heads,
                 head_dim, ffn_dim, seed, n_embedding_layers (0 = none)
    then, for each trainable tensor in declaration order:
                 u32 ndim, ndim x u32 shape, then the f32 payload

Tensor names are implied by the declaration order, so the file stays
self-describing given its configuration block. Malformed files raise a
distinct error per failure mode (magic, version, truncation, corruption).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (BadMagicError, CorruptFileError, TruncatedFileError,
                     UnsupportedVersionError)
from .network import ModelConfig, ModelParams, param_shapes

MAGIC = b"VBTM"
VERSION = 1

_HEADER = struct.Struct("<4sI")
_CONFIG = struct.Struct("<7q")
_NDIM = struct.Struct("<I")


def save_checkpoint(path, params: ModelParams) -> None:
    """Write the parameters as float32 in declaration order."""
    cfg = params.config
    parts = [_HEADER.pack(MAGIC, VERSION),
             _CONFIG.pack(cfg.input_dim, cfg.model_dim, cfg.heads,
                          cfg.head_dim, cfg.ffn_dim, cfg.seed,
                          cfg.n_embedding_layers or 0)]
    for name in param_shapes(cfg):
        arr = params.tensors[name]
        parts.append(_NDIM.pack(arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(
                f"checkpoint ends early: wanted {n} bytes at offset "
                f"{self.pos}, file has {len(self.blob)}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def load_checkpoint(path) -> ModelParams:
    """Read a checkpoint back into float64 parameters."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    magic, version = _HEADER.unpack(r.take(_HEADER.size))
    if magic != MAGIC:
        raise BadMagicError(f"not a checkpoint file (magic {magic!r})")
    if version != VERSION:
        raise UnsupportedVersionError(
            f"checkpoint version {version}, supported: {VERSION}")
    fields = _CONFIG.unpack(r.take(_CONFIG.size))
    try:
        cfg = ModelConfig(input_dim=fields[0], model_dim=fields[1],
                          heads=fields[2], head_dim=fields[3],
                          ffn_dim=fields[4], seed=fields[5],
                          n_embedding_layers=fields[6] or None)
    except ValueError as exc:
        raise CorruptFileError(f"invalid configuration block: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    for name, expected in param_shapes(cfg).items():
        (ndim,) = _NDIM.unpack(r.take(_NDIM.size))
        if ndim != len(expected):
            raise CorruptFileError(
                f"{name}: {ndim} dimensions, expected {len(expected)}")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        if shape != expected:
            raise CorruptFileError(
                f"{name}: shape {shape}, expected {expected}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = r.take(4 * count)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float64)
    if r.pos != len(blob):
        raise CorruptFileError(
            f"{len(blob) - r.pos} trailing bytes after the last tensor")
    try:
        return ModelParams(cfg, tensors)
    except ValueError as exc:
        raise CorruptFileError(str(exc)) from exc
