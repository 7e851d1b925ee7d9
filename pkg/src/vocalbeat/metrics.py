"""Beat-tracking evaluation: F-measure, Cemgil, P-score, Goto, and the
phase-inclusive wrapper that also scores against offbeat-shifted references.

Empty-input conventions, used by every scalar metric: both sides empty
scores 1, exactly one side empty scores 0. Scores that need a reference
inter-beat interval (p_score, goto, offbeat_shift) require at least two
reference beats and raise ValueError below that.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .beats import BeatAnnotation, as_beat_times

DEFAULT_F_MEASURE_TOL = 0.07
DEFAULT_CEMGIL_SIGMA = 0.04
DEFAULT_P_SCORE_WINDOW = 0.2
DEFAULT_GOTO_PHASE_THRESHOLD = 0.35
DEFAULT_GOTO_MU = 0.2
DEFAULT_GOTO_SIGMA = 0.2

METRIC_NAMES = ("f_measure", "p_score", "cemgil", "goto")


def _empty_convention(ref: np.ndarray, est: np.ndarray) -> float | None:
    if ref.size == 0 and est.size == 0:
        return 1.0
    if ref.size == 0 or est.size == 0:
        return 0.0
    return None


def f_measure(ref, est, tol: float = DEFAULT_F_MEASURE_TOL) -> float:
    """F-measure with maximum one-to-one matching within the tolerance.

    Both lists are walked once in time order; each reference beat takes the
    earliest still-unmatched estimate inside its window. With equal-width
    windows that earliest-first rule yields a maximum-cardinality matching,
    so the score equals the exhaustive-search optimum.
    F = 2TP / (2TP + FP + FN).
    """
    ref, est = as_beat_times(ref), as_beat_times(est)
    trivial = _empty_convention(ref, est)
    if trivial is not None:
        return trivial
    tp = 0
    j = 0
    for r in ref:
        while j < est.size and est[j] < r - tol:
            j += 1
        if j < est.size and est[j] <= r + tol:
            tp += 1
            j += 1
    fp = est.size - tp
    fn = ref.size - tp
    return 2.0 * tp / (2.0 * tp + fp + fn)


def cemgil(ref, est, sigma: float = DEFAULT_CEMGIL_SIGMA) -> float:
    """Gaussian accuracy at each reference beat's nearest estimate,
    normalized by the mean of the two beat counts."""
    ref, est = as_beat_times(ref), as_beat_times(est)
    trivial = _empty_convention(ref, est)
    if trivial is not None:
        return trivial
    nearest = np.min(np.abs(ref[:, None] - est[None, :]), axis=1)
    acc = np.exp(-(nearest ** 2) / (2.0 * sigma ** 2)).sum()
    return float(acc / ((ref.size + est.size) / 2.0))


def p_score(ref, est, window_fraction: float = DEFAULT_P_SCORE_WINDOW) -> float:
    """Pair count within a tolerance of window_fraction times the median
    reference inter-beat interval, normalized by the larger beat count."""
    ref, est = as_beat_times(ref), as_beat_times(est)
    trivial = _empty_convention(ref, est)
    if trivial is not None:
        return trivial
    if ref.size < 2:
        raise ValueError("p_score needs at least 2 reference beats "
                         "to define an inter-beat interval")
    tol = window_fraction * float(np.median(np.diff(ref)))
    hits = int((np.abs(ref[:, None] - est[None, :]) <= tol).sum())
    return min(1.0, hits / max(ref.size, est.size))


def _goto_errors(ref: np.ndarray, est: np.ndarray) -> np.ndarray:
    """Per-reference-beat normalized error.

    Each beat owns a window reaching halfway to its neighbors (boundary
    beats reuse their single adjacent interval on the open side). Exactly
    one estimate inside the window gives error = offset / half-interval on
    the offset's side; zero or multiple estimates give the sentinel 1.
    """
    n = ref.size
    prev_half = np.empty(n)
    next_half = np.empty(n)
    prev_half[1:] = 0.5 * np.diff(ref)
    next_half[:-1] = 0.5 * np.diff(ref)
    prev_half[0] = next_half[0]
    next_half[-1] = prev_half[-1]
    errors = np.ones(n)
    for i in range(n):
        lo, hi = ref[i] - prev_half[i], ref[i] + next_half[i]
        inside = est[(est >= lo) & (est < hi)]
        if inside.size != 1:
            continue
        offset = float(inside[0] - ref[i])
        errors[i] = offset / (prev_half[i] if offset < 0 else next_half[i])
    return errors


def goto(ref, est, phase_threshold: float = DEFAULT_GOTO_PHASE_THRESHOLD,
         mu: float = DEFAULT_GOTO_MU,
         sigma_thresh: float = DEFAULT_GOTO_SIGMA) -> float:
    """Binary continuity score.

    1 iff some maximal run of consecutively correct beats (normalized error
    magnitude below phase_threshold) spans at least 25% of the reference
    time span with mean absolute error below mu and signed-error standard
    deviation below sigma_thresh.
    """
    ref, est = as_beat_times(ref), as_beat_times(est)
    if ref.size < 2:
        raise ValueError("goto needs at least 2 reference beats")
    if est.size == 0:
        return 0.0
    errors = _goto_errors(ref, est)
    correct = np.abs(errors) < phase_threshold
    span = ref[-1] - ref[0]
    i = 0
    while i < ref.size:
        if not correct[i]:
            i += 1
            continue
        j = i
        while j + 1 < ref.size and correct[j + 1]:
            j += 1
        run = errors[i : j + 1]
        if (ref[j] - ref[i] >= 0.25 * span
                and np.mean(np.abs(run)) < mu
                and np.std(run) < sigma_thresh):
            return 1.0
        i = j + 1
    return 0.0


def offbeat_shift(ref) -> BeatAnnotation:
    """Midpoints of adjacent reference beats: the 180-degree shifted pulse."""
    times = as_beat_times(ref)
    if times.size < 2:
        raise ValueError("offbeat_shift needs at least 2 beats")
    return BeatAnnotation(0.5 * (times[:-1] + times[1:]))


def pi_metric(metric, ref, est) -> float:
    """Phase-inclusive score: the better of the plain reference and its
    offbeat-shifted version."""
    plain = metric(ref, est)
    shifted = metric(offbeat_shift(ref), est)
    return max(plain, shifted)


@dataclass
class MetricReport:
    """Per-track scores plus unweighted means across tracks."""

    tracks: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"tracks": self.tracks, "aggregate": self.aggregate}

    def to_csv(self) -> str:
        cols = ["track_id"] + list(METRIC_NAMES)
        cols += [f"pi_{m}" for m in METRIC_NAMES]
        cols += ["compute_seconds"]
        lines = [",".join(cols)]
        for t in self.tracks:
            cells = [str(t["track_id"])]
            cells += [f"{t[c]:.6f}" for c in cols[1:-1]]
            cells.append("" if t.get("compute_seconds") is None
                         else f"{t['compute_seconds']:.6f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _score_track(ref, est) -> dict:
    scores: dict = {}
    fns = {"f_measure": f_measure, "p_score": p_score, "cemgil": cemgil,
           "goto": goto}
    fallback = False
    for name, fn in fns.items():
        scores[name] = float(fn(ref, est))
    for name, fn in fns.items():
        try:
            scores[f"pi_{name}"] = float(pi_metric(fn, ref, est))
        except ValueError:
            # shifted reference too short for this metric; keep the plain
            # score so pi >= plain still holds
            scores[f"pi_{name}"] = scores[name]
            fallback = True
    if fallback:
        scores["pi_fallback"] = True
    return scores


def evaluate_corpus(pairs, track_ids=None, max_workers: int = 1) -> MetricReport:
    """Score every (ref, est[, compute_seconds]) item and average.

    Aggregation is max-then-mean: the phase-inclusive maximum is taken per
    track, then all scores are averaged unweighted across tracks. Scoring
    runs on up to ``max_workers`` threads; results keep input order.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty corpus")
    if track_ids is None:
        track_ids = [f"track_{i:04d}" for i in range(len(pairs))]
    if len(track_ids) != len(pairs):
        raise ValueError("one track id per pair required")
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            scored = list(pool.map(lambda it: _score_track(it[0], it[1]),
                                   pairs))
    else:
        scored = [_score_track(item[0], item[1]) for item in pairs]
    report = MetricReport()
    for tid, item, scores in zip(track_ids, pairs, scored):
        seconds = item[2] if len(item) > 2 else None
        entry = {"track_id": tid}
        entry.update(scores)
        entry["compute_seconds"] = (None if seconds is None
                                    else float(seconds))
        report.tracks.append(entry)
    keys = list(METRIC_NAMES) + [f"pi_{m}" for m in METRIC_NAMES]
    report.aggregate = {k: float(np.mean([t[k] for t in report.tracks]))
                        for k in keys}
    timed = [t["compute_seconds"] for t in report.tracks
             if t.get("compute_seconds") is not None]
    report.aggregate["mean_compute_seconds"] = (
        float(np.mean(timed)) if timed else None)
    report.aggregate["n_tracks"] = len(report.tracks)
    return report
