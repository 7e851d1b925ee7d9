"""WAV loading and resampling for model input.

The upstream SSL models were trained on 16 kHz speech, so everything is
resampled to that rate.  Amplitudes are passed through as decoded; the
models' feature extractors were fit on raw waveforms and renormalizing
here would shift the embeddings.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioDecodeError

TARGET_SAMPLE_RATE = 16_000

def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:  # offset binary
        return (data.astype(np.float32) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float32) / 2.0**15
    if data.dtype == np.int32:
        return data.astype(np.float32) / 2.0**31
    return data.astype(np.float32)


def load_wav(path: str) -> tuple[np.ndarray, int]:
    """Read a WAV file as float32 mono in [-1, 1], returning (samples, rate)."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise AudioDecodeError(f"no such file: {path}") from None
    except Exception as exc:
        raise AudioDecodeError(f"cannot read {path}: {exc}") from exc
    samples = _to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioDecodeError(f"{path} contains no samples")
    return samples, int(rate)


def to_model_rate(samples: np.ndarray, rate: int) -> np.ndarray:
    """Resample to TARGET_SAMPLE_RATE with a polyphase filter."""
    if rate == TARGET_SAMPLE_RATE:
        return samples.astype(np.float32, copy=False)
    if rate <= 0:
        raise AudioDecodeError(f"invalid sample rate {rate}")
    ratio = Fraction(TARGET_SAMPLE_RATE, rate).limit_denominator(1000)
    out = resample_poly(samples, ratio.numerator, ratio.denominator,
                        window=("kaiser", 8.0))
    return out.astype(np.float32)
