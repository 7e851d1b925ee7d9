"""Beat annotations and their on-disk text format.

A beat annotation is a strictly increasing sequence of times in seconds.
Ground truth and predictions share this type. The text format is UTF-8,
one beat time per line; an optional whitespace-separated second column
(beat position within the bar) is parsed and ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BeatFileError


@dataclass(frozen=True)
class BeatAnnotation:
    """Strictly increasing, non-negative beat times in seconds."""

    times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "times", times)
        if times.size:
            if not np.all(np.isfinite(times)):
                raise ValueError("beat times must be finite")
            if times[0] < 0:
                raise ValueError("beat times must be non-negative")
            if np.any(np.diff(times) <= 0):
                raise ValueError("beat times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.times.size)

    def shifted(self, offset: float) -> "BeatAnnotation":
        return BeatAnnotation(self.times + offset)


def as_beat_times(beats) -> np.ndarray:
    """Coerce a BeatAnnotation or array-like into a validated times array."""
    if isinstance(beats, BeatAnnotation):
        return beats.times
    return BeatAnnotation(np.asarray(beats, dtype=np.float64)).times


def load_beats(path) -> BeatAnnotation:
    """Read a beat annotation text file (one time per line, seconds)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BeatFileError(f"cannot read beat file {path}: {exc}") from exc
    times = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        first = line.split()[0]
        try:
            times.append(float(first))
        except ValueError as exc:
            raise BeatFileError(
                f"{path}:{lineno}: expected a beat time in seconds, got {first!r}"
            ) from exc
    try:
        return BeatAnnotation(np.array(times))
    except ValueError as exc:
        raise BeatFileError(f"{path}: {exc}") from exc


def save_beats(path, beats: BeatAnnotation) -> None:
    """Write a beat annotation as text, one time per line, LF endings."""
    times = as_beat_times(beats)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in times:
            fh.write(f"{t:.6f}\n")
