"""Multi-resolution log-mel front end.

Three STFT window sizes share one hop and one center alignment, so their
frames are time-synchronous and can be stacked with their half-wave
rectified first differences into a single feature matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform

DEFAULT_WINDOW_SIZES = (1024, 2048, 4096)
DEFAULT_FPS = 100.0
DEFAULT_N_MELS = 80
DEFAULT_FMIN = 30.0
DEFAULT_FMAX = 17000.0
LOG_OFFSET = 1e-6


@dataclass(frozen=True)
class FeatureSequence:
    """N x D feature matrix with its frame rate."""

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("frames must be a non-empty N x D matrix")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature entries must be finite")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = DEFAULT_N_MELS,
                   fmin: float = DEFAULT_FMIN, fmax: float = DEFAULT_FMAX) -> np.ndarray:
    """Triangular mel filters (peak 1) over rfft bins, shape (n_mels, n_fft//2 + 1)."""
    if fmax > sample_rate / 2:
        raise ValueError("fmax exceeds the Nyquist frequency")
    centers_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        left, center, right = centers_hz[m], centers_hz[m + 1], centers_hz[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_band_edges(n_mels: int = DEFAULT_N_MELS, fmin: float = DEFAULT_FMIN,
                   fmax: float = DEFAULT_FMAX) -> np.ndarray:
    """(n_mels, 2) support edges in Hz of each triangular filter."""
    centers_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return np.stack([centers_hz[:-2], centers_hz[2:]], axis=1)


def _frame_count(n_samples: int, hop: int) -> int:
    return 1 + (n_samples - 1) // hop


def log_mel(w: Waveform, window_size: int, fps: float = DEFAULT_FPS,
            n_mels: int = DEFAULT_N_MELS, fmin: float = DEFAULT_FMIN,
            fmax: float = DEFAULT_FMAX) -> FeatureSequence:
    """Log-magnitude mel spectrogram with centered Hann framing.

    Frame i is centered at i*hop where hop = sample_rate / fps (must be an
    integer number of samples); magnitudes pass through an ``n_mels``
    triangular filterbank spanning ``fmin``..``fmax`` Hz, then
    log10(mel + 1e-6).
    """
    if window_size < 2:
        raise ValueError("window_size must be at least 2 samples")
    hop_f = w.sample_rate / fps
    hop = int(round(hop_f))
    if abs(hop_f - hop) > 1e-9 or hop < 1:
        raise ValueError(f"fps {fps} does not divide sample rate {w.sample_rate} "
                         "into an integral hop")
    n = _frame_count(w.samples.size, hop)
    half = window_size // 2
    padded = np.pad(w.samples, (half, window_size))
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window_size) / window_size)
    starts = np.arange(n) * hop
    frames = padded[starts[:, None] + np.arange(window_size)[None, :]]
    spec = np.abs(np.fft.rfft(frames * window, axis=1))
    fb = mel_filterbank(w.sample_rate, window_size, n_mels, fmin, fmax)
    mel = spec @ fb.T
    return FeatureSequence(np.log10(mel + LOG_OFFSET), fps)


def first_diff(f: FeatureSequence, rectify: bool = True) -> FeatureSequence:
    """First-order time difference; half-wave rectified by default.

    out[0] is the zero vector; out[i] = f[i] - f[i-1], clamped at zero when
    ``rectify`` is set (onset convention: energy rises matter, decays do not).
    """
    diff = np.zeros_like(f.frames)
    if f.n_frames > 1:
        d = f.frames[1:] - f.frames[:-1]
        diff[1:] = np.maximum(d, 0.0) if rectify else d
    return FeatureSequence(diff, f.fps)


def stack_features(parts: list[FeatureSequence]) -> FeatureSequence:
    """Concatenate feature matrices along the feature axis."""
    if not parts:
        raise ValueError("need at least one feature sequence")
    fps = parts[0].fps
    n = parts[0].n_frames
    for p in parts[1:]:
        if p.fps != fps:
            raise ValueError(f"fps mismatch: {p.fps} != {fps}")
        if p.n_frames != n:
            raise ValueError(f"frame count mismatch: {p.n_frames} != {n}")
    return FeatureSequence(np.concatenate([p.frames for p in parts], axis=1), fps)


def spectral_features(w: Waveform,
                      window_sizes: tuple[int, ...] = DEFAULT_WINDOW_SIZES,
                      fps: float = DEFAULT_FPS, n_mels: int = DEFAULT_N_MELS,
                      rectify: bool = True) -> FeatureSequence:
    """The full ablation front end: per window size, log-mel plus its first
    difference, all stacked (3 windows x 80 x 2 = 480 dims by default)."""
    parts = []
    for size in window_sizes:
        mel = log_mel(w, size, fps=fps, n_mels=n_mels)
        parts.append(mel)
        parts.append(first_diff(mel, rectify=rectify))
    n = min(p.n_frames for p in parts)
    parts = [FeatureSequence(p.frames[:n], p.fps) for p in parts]
    return stack_features(parts)
