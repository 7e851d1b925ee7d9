"""Builders shared across test modules: tones, beat grids, raw WAV bytes."""

import struct

import numpy as np

from vocalbeat.audio import Waveform
from vocalbeat.beats import BeatAnnotation


def sine(freq: float, seconds: float, sample_rate: int = 44100,
         amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return Waveform(amplitude * np.sin(2.0 * np.pi * freq * t), sample_rate)


def beat_grid(period: float, count: int, start: float = 0.0) -> BeatAnnotation:
    return BeatAnnotation(start + period * np.arange(count))


HUMP_OFFSETS = np.arange(-3, 4)
HUMP_VALUES = np.array([0.1, 0.25, 0.5, 0.95, 0.5, 0.25, 0.1])


def hump_train(n_frames: int, period: int, floor: float = 0.05,
               noise_sigma: float = 0.0, rng=None,
               start: int = 0) -> np.ndarray:
    """Synthetic beat activations: one peaked hump per beat on a low floor.

    The hump mirrors what a trained network emits around a beat (targets are
    1 at the beat frame, 0.5 on the neighbors), rather than a one-frame
    spike, which no network trained on those targets would produce.
    """
    a = np.full(n_frames, floor)
    for center in range(start, n_frames, period):
        for off, val in zip(HUMP_OFFSETS, HUMP_VALUES):
            i = center + off
            if 0 <= i < n_frames:
                a[i] = max(a[i], val)
    if noise_sigma > 0.0:
        a = a + (rng or np.random.default_rng()).normal(0.0, noise_sigma,
                                                        n_frames)
    return np.clip(a, 0.001, 0.999)


def write_wav_24bit(path, samples: np.ndarray, sample_rate: int) -> None:
    """Hand-rolled 24-bit PCM RIFF writer (scipy only reads this depth)."""
    ints = np.clip(np.round(np.asarray(samples) * 2 ** 23),
                   -(2 ** 23), 2 ** 23 - 1).astype(np.int64)
    payload = b"".join(int(v & 0xFFFFFF).to_bytes(3, "little") for v in ints)
    byte_rate = sample_rate * 3
    fmt = struct.pack("<4sIHHIIHH", b"fmt ", 16, 1, 1, sample_rate,
                      byte_rate, 3, 24)
    data = struct.pack("<4sI", b"data", len(payload)) + payload
    riff = struct.pack("<4sI4s", b"RIFF", 4 + len(fmt) + len(data), b"WAVE")
    with open(path, "wb") as fh:
        fh.write(riff + fmt + data)
