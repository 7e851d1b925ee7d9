"""Audio loading, energy normalization, and silence-based vocal segmentation.

Vocal tracks are normalized so the global RMS is one, then split into voiced
segments wherever a frame-wise RMS stays below a threshold for long enough.
Beat annotations are remapped into segment-local time; beats falling inside a
removed silent run are dropped, since no vocal evidence exists there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .beats import BeatAnnotation, as_beat_times
from .errors import AudioReadError, DegenerateInputError, UnsupportedAudioError

DEFAULT_RMS_THRESHOLD = 0.01
DEFAULT_MIN_SILENCE_SECONDS = 8.0
DEFAULT_RMS_WINDOW_SECONDS = 0.1
DEFAULT_RMS_HOP_SECONDS = 0.01


@dataclass(frozen=True)
class Waveform:
    """Mono sample sequence plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class RmsSeries:
    """Frame-wise RMS values on a regular hop grid."""

    values: np.ndarray
    hop_seconds: float
    window_seconds: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        if self.hop_seconds <= 0 or self.window_seconds <= 0:
            raise ValueError("hop and window must be positive")
        if np.any(values < 0):
            raise ValueError("RMS values must be non-negative")


@dataclass(frozen=True)
class VocalSegment:
    """A voiced excerpt with its offset in the source track and local beats."""

    waveform: Waveform
    source_offset_seconds: float
    beats: BeatAnnotation

    def __post_init__(self):
        if self.source_offset_seconds < 0:
            raise ValueError("source offset must be non-negative")
        if len(self.beats) and self.beats.times[-1] > self.waveform.duration + 1e-9:
            raise ValueError("segment-local beats must lie within the segment")


def load_audio(path) -> Waveform:
    """Load a RIFF/WAVE file as a mono waveform scaled to [-1, 1].

    Accepts 16/24/32-bit integer and 32-bit float PCM with one or two
    channels. Stereo is downmixed by arithmetic mean.
    """
    path = Path(path)
    if not path.exists():
        raise AudioReadError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise AudioReadError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32, so one scale fits both.
        samples = data / 2147483648.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudioError(
            f"{path}: unsupported sample encoding {data.dtype}; "
            "expected 16/24/32-bit integer or 32-bit float"
        )
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise UnsupportedAudioError(
                f"{path}: {samples.shape[1]} channels; expected 1 or 2"
            )
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioReadError(f"{path}: zero-length audio")
    return Waveform(samples, int(rate))


def save_audio(path, w: Waveform) -> None:
    """Write a waveform as 32-bit float WAV (no clipping of normalized audio)."""
    wavfile.write(str(path), w.sample_rate, w.samples.astype(np.float32))


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Resample with a windowed-sinc polyphase filter (Kaiser, ~80 dB stopband)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return w
    ratio = Fraction(target_rate, w.sample_rate)
    out = resample_poly(w.samples, ratio.numerator, ratio.denominator,
                        window=("kaiser", 8.0))
    return Waveform(out, target_rate)


def normalize_rms(w: Waveform) -> Waveform:
    """Divide every sample by the global RMS so the output RMS is 1.0."""
    rms = math.sqrt(float(np.mean(np.square(w.samples))))
    if rms == 0.0:
        raise DegenerateInputError("cannot RMS-normalize an all-zero waveform")
    return Waveform(w.samples / rms, w.sample_rate)


def frame_rms(w: Waveform,
              window_seconds: float = DEFAULT_RMS_WINDOW_SECONDS,
              hop_seconds: float = DEFAULT_RMS_HOP_SECONDS) -> RmsSeries:
    """Frame-wise RMS: values[i] covers samples in [i*hop, i*hop + window)."""
    if not hop_seconds > 0 or window_seconds < hop_seconds:
        raise ValueError("require window >= hop > 0")
    window = int(round(window_seconds * w.sample_rate))
    hop = int(round(hop_seconds * w.sample_rate))
    if w.samples.size < window:
        raise ValueError("waveform shorter than one RMS window")
    n = (w.samples.size - window) // hop + 1
    csum = np.concatenate(([0.0], np.cumsum(np.square(w.samples))))
    starts = np.arange(n) * hop
    sums = csum[starts + window] - csum[starts]
    values = np.sqrt(np.maximum(sums, 0.0) / window)
    return RmsSeries(values, hop_seconds, window_seconds)


def _silent_runs(values: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximal runs [a, b] (inclusive frame indices) with values < threshold."""
    silent = values < threshold
    if not silent.any():
        return []
    runs = []
    start = None
    for i, flag in enumerate(silent):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, silent.size - 1))
    return runs


def split_silence(w: Waveform,
                  beats: BeatAnnotation | None = None,
                  rms_threshold: float = DEFAULT_RMS_THRESHOLD,
                  min_silence_seconds: float = DEFAULT_MIN_SILENCE_SECONDS,
                  window_seconds: float = DEFAULT_RMS_WINDOW_SECONDS,
                  hop_seconds: float = DEFAULT_RMS_HOP_SECONDS) -> list[VocalSegment]:
    """Split a track into voiced segments at long silent runs.

    A silent run is a maximal stretch of frames whose RMS stays below
    ``rms_threshold``. Runs whose covered time span lasts at least
    ``min_silence_seconds`` are removed; shorter ones are kept inside their
    surrounding segment. Beats inside a removed run are dropped; retained
    beats are shifted into segment-local time.

    Expects ``w`` to be RMS-normalized already, so the threshold is a
    fraction of the track's average energy.
    """
    beats = BeatAnnotation() if beats is None else BeatAnnotation(as_beat_times(beats))
    duration = w.duration
    window = int(round(window_seconds * w.sample_rate))
    if w.samples.size < window:
        return [VocalSegment(w, 0.0, beats)]

    series = frame_rms(w, window_seconds, hop_seconds)
    n_frames = series.values.size

    # A run of silent frames [a, b] covers [a*hop, b*hop + window); that span
    # is both the duration tested against min_silence and the region removed.
    removals: list[tuple[float, float]] = []
    for a, b in _silent_runs(series.values, rms_threshold):
        start = a * hop_seconds
        end = b * hop_seconds + window_seconds
        if b == n_frames - 1:
            end = duration  # absorb the sub-window tail
        if a == 0:
            start = 0.0
        end = min(end, duration)
        if end - start >= min_silence_seconds:
            removals.append((start, end))

    # Merge overlapping removals (a handful of voiced frames sandwiched
    # between long silences does not constitute a segment).
    merged: list[list[float]] = []
    for start, end in removals:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    # Complement of the removals = voiced segments.
    spans: list[tuple[float, float]] = []
    cursor = 0.0
    for start, end in merged:
        if start > cursor:
            spans.append((cursor, start))
        cursor = end
    if cursor < duration:
        spans.append((cursor, duration))

    segments = []
    for start, end in spans:
        i0 = int(round(start * w.sample_rate))
        i1 = int(round(end * w.sample_rate))
        if i1 <= i0:
            continue
        seg_wave = Waveform(w.samples[i0:i1], w.sample_rate)
        is_last = end >= duration
        if is_last:
            keep = (beats.times >= start) & (beats.times <= end)
        else:
            keep = (beats.times >= start) & (beats.times < end)
        local = np.minimum(beats.times[keep] - start, seg_wave.duration)
        segments.append(VocalSegment(seg_wave, start, BeatAnnotation(local)))
    return segments
