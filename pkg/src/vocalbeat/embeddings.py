"""Precomputed SSL hidden states: the SSLB container and layer combination.

SSLB is the bit-exact contract between the embedding exporter and this
toolkit. Layout (little-endian):

    magic "SSLB" | u32 version=1 | u32 n_layers | u32 n_frames | u32 dim
    | f32 fps | payload: f32, [layer][frame][dim] order

Layer 0 of a multi-layer tensor is the convolutional front output; layers
1..L are encoder layers. A single-layer file doubles as a plain feature
dump (spectral front end, or a distilled model's final layer).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, CorruptFileError, TruncatedFileError,
                     UnsupportedVersionError)
from .spectral import FeatureSequence

MAGIC = b"SSLB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


@dataclass(frozen=True)
class EmbeddingTensor:
    """Stacked per-layer hidden states, shape (n_layers, n_frames, dim)."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError("embedding data must have shape (layers, frames, dim)")
        if not np.all(np.isfinite(data)):
            raise ValueError("embedding entries must be finite")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "data", data)

    @property
    def n_layers(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


def write_embeddings(path, e: EmbeddingTensor) -> None:
    header = _HEADER.pack(MAGIC, VERSION, e.n_layers, e.n_frames, e.dim,
                          np.float32(e.fps))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(e.data.astype("<f4", copy=False).tobytes())


def read_embeddings(path) -> EmbeddingTensor:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the {_HEADER.size}-byte header")
    magic, version, n_layers, n_frames, dim, fps = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}, expected {VERSION}")
    expected = n_layers * n_frames * dim * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise CorruptFileError(
            f"{path}: {len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_layers, n_frames, dim)
    return EmbeddingTensor(data, float(fps))


def write_features(path, f: FeatureSequence) -> None:
    """Dump a plain feature matrix as a single-layer SSLB file."""
    write_embeddings(path, EmbeddingTensor(f.frames[None, :, :].astype(np.float32),
                                           f.fps))


def layer_combine(e: EmbeddingTensor, weights) -> FeatureSequence:
    """Weighted sum of layers: out[n, d] = sum_l w[l] * e[l, n, d].

    Weights are raw and learnable; no normalization is applied (trained
    values drift around their all-ones initialization).
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != e.n_layers:
        raise ValueError(f"{w.size} weights for {e.n_layers} layers")
    combined = np.einsum("l,lnd->nd", w, e.data.astype(np.float64))
    return FeatureSequence(combined, e.fps)


def report_layer_weights(weights) -> dict:
    """(layer index, weight) pairs in ascending layer order, JSON-ready."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    return {"layers": [{"layer": i, "weight": float(v)} for i, v in enumerate(w)]}
