"""Writer for the SSLB embedding container.

The layout is fixed: a little-endian header ``magic "SSLB", u32 version,
u32 n_layers, u32 n_frames, u32 dim, f32 fps`` followed by the payload as
float32 in C order, layer-major.  Readers elsewhere depend on these bytes,
so the writer is duplicated here rather than imported.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SSLB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


def write_sslb(path: str, layers: np.ndarray, fps: float) -> None:
    """Write a (n_layers, n_frames, dim) float array to ``path``."""
    arr = np.ascontiguousarray(layers, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3-d layer stack, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("embeddings contain non-finite values")
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    n_layers, n_frames, dim = arr.shape
    header = _HEADER.pack(MAGIC, VERSION, n_layers, n_frames, dim, float(fps))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())
