"""Offline beat decoder: tempo/phase lattice HMM with Viterbi.

States are (interval, phase) pairs: the interval tau is the beat length in
frames, the phase counts frames since the last beat. Within a beat the
phase advances deterministically; at the last phase the chain jumps to
phase 0 of some interval, with tempo changes penalized by
exp(-lambda * |ln(tau'/tau)|). Frames whose activation is high reward the
small set of beat states near phase 0; everything else rewards non-beat
states. The Viterbi path's phase-0 frames are the decoded beats.

The per-frame update is two vectorized steps: a one-slot shift for the
deterministic phase advance and a dense (n_tempi x n_tempi) max-product for
the beat boundaries, so decoding stays fast even with thousands of states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beats import BeatAnnotation

ACTIVATION_CLAMP = 1e-12

DEFAULT_MIN_BPM = 55.0
DEFAULT_MAX_BPM = 215.0
DEFAULT_TRANSITION_LAMBDA = 100.0
DEFAULT_OBSERVATION_LAMBDA = 16.0


@dataclass(frozen=True)
class DecoderConfig:
    fps: float = 100.0
    min_bpm: float = DEFAULT_MIN_BPM
    max_bpm: float = DEFAULT_MAX_BPM
    transition_lambda: float = DEFAULT_TRANSITION_LAMBDA
    observation_lambda: float = DEFAULT_OBSERVATION_LAMBDA

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if not 0 < self.min_bpm <= self.max_bpm:
            raise ValueError("need 0 < min_bpm <= max_bpm")
        if self.transition_lambda <= 0 or self.observation_lambda <= 0:
            raise ValueError("lambdas must be positive")


@dataclass(frozen=True)
class DecoderStateSpace:
    """Immutable lattice: all (tau, phase) states, ordered by tau then phase."""

    config: DecoderConfig
    intervals: np.ndarray        # (n_tempi,) int, beat length in frames
    state_interval: np.ndarray   # (n_states,) int
    state_phase: np.ndarray      # (n_states,) int
    first_state: np.ndarray      # (n_tempi,) index of (tau, 0)
    last_state: np.ndarray       # (n_tempi,) index of (tau, tau-1)
    is_beat: np.ndarray = field(repr=False)  # (n_states,) bool

    @property
    def n_states(self) -> int:
        return self.state_phase.size

    @property
    def n_tempi(self) -> int:
        return self.intervals.size


def build_state_space(cfg: DecoderConfig) -> DecoderStateSpace:
    """Enumerate intervals allowed by the tempo range at cfg.fps.

    Beat states of an interval tau are the phases below
    max(1, round(tau / observation_lambda)), rounding half up.
    """
    tau_min = int(np.ceil(60.0 * cfg.fps / cfg.max_bpm))
    tau_max = int(np.floor(60.0 * cfg.fps / cfg.min_bpm))
    if tau_min > tau_max:
        raise ValueError(
            f"empty tempo range: bpm [{cfg.min_bpm}, {cfg.max_bpm}] at "
            f"{cfg.fps} fps admits no whole-frame beat interval")
    intervals = np.arange(tau_min, tau_max + 1)
    state_interval = np.repeat(intervals, intervals)
    state_phase = np.concatenate([np.arange(t) for t in intervals])
    first_state = np.concatenate([[0], np.cumsum(intervals)[:-1]])
    last_state = np.cumsum(intervals) - 1
    beat_width = np.maximum(
        1, np.floor(state_interval / cfg.observation_lambda + 0.5))
    return DecoderStateSpace(config=cfg, intervals=intervals,
                             state_interval=state_interval,
                             state_phase=state_phase,
                             first_state=first_state, last_state=last_state,
                             is_beat=state_phase < beat_width)


def _clamped(activations: np.ndarray) -> np.ndarray:
    a = np.asarray(activations, dtype=np.float64).reshape(-1)
    return np.clip(a, ACTIVATION_CLAMP, 1.0 - ACTIVATION_CLAMP)


def _observation_pair(a: np.ndarray, lam: float):
    """Per-frame (beat, non-beat) log densities for clamped activations."""
    log_beat = np.log(a)
    if lam > 1.0:
        log_nonbeat = np.log((1.0 - a) / (lam - 1.0))
    else:  # every state is a beat state; the non-beat column is unused
        log_nonbeat = np.full_like(a, -np.inf)
    return log_beat, log_nonbeat


def observation_logprobs(activation: float,
                         space: DecoderStateSpace) -> np.ndarray:
    """Per-state log density of one frame's activation."""
    a = _clamped(np.array([activation]))
    log_beat, log_nonbeat = _observation_pair(
        a, space.config.observation_lambda)
    return np.where(space.is_beat, log_beat[0], log_nonbeat[0])


def transition_logprobs(space: DecoderStateSpace,
                        cfg: DecoderConfig | None = None) -> np.ndarray:
    """Dense (n_tempi x n_tempi) boundary matrix B[i, j] = log P(tau_i -> tau_j).

    Interior transitions are not represented: every non-boundary state
    advances to the next phase with probability 1 (log 0).
    """
    cfg = space.config if cfg is None else cfg
    tau = space.intervals.astype(np.float64)
    weights = np.exp(-cfg.transition_lambda
                     * np.abs(np.log(tau[None, :] / tau[:, None])))
    weights /= weights.sum(axis=1, keepdims=True)
    return np.log(weights)


def viterbi(space: DecoderStateSpace, activations,
            transitions: np.ndarray | None = None, *,
            observations=None) -> np.ndarray:
    """Most probable state path under a uniform initial distribution.

    ``observations`` optionally overrides the activation-derived
    per-frame (log_beat, log_nonbeat) score pair; ties always resolve to
    the lower state index. Returns state indices, one per frame.
    """
    a = _clamped(activations)
    n = a.size
    if n < 1:
        raise ValueError("need at least one frame")
    if transitions is None:
        transitions = transition_logprobs(space)
    if observations is None:
        log_beat, log_nonbeat = _observation_pair(
            a, space.config.observation_lambda)
    else:
        log_beat, log_nonbeat = (np.asarray(o, dtype=np.float64).reshape(-1)
                                 for o in observations)
        if log_beat.size != n or log_nonbeat.size != n:
            raise ValueError("observation override length mismatch")

    is_beat = space.is_beat
    first, last = space.first_state, space.last_state
    n_tempi = space.n_tempi

    def frame_obs(t: int) -> np.ndarray:
        return np.where(is_beat, log_beat[t], log_nonbeat[t])

    delta = np.full(space.n_states, -np.log(space.n_states))
    delta += frame_obs(0)
    boundary_choice = np.empty((n, n_tempi), dtype=np.int16)

    for t in range(1, n):
        scores = delta[last][:, None] + transitions
        boundary_choice[t] = np.argmax(scores, axis=0)
        entry = scores[boundary_choice[t], np.arange(n_tempi)]
        shifted = np.empty_like(delta)
        shifted[1:] = delta[:-1]
        shifted[first] = entry
        delta = shifted + frame_obs(t)

    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(n - 1, 0, -1):
        s = path[t]
        if space.state_phase[s] > 0:
            path[t - 1] = s - 1
        else:
            tempo_idx = np.searchsorted(first, s)
            path[t - 1] = last[boundary_choice[t, tempo_idx]]
    return path


def decode_beats(activations, fps: float,
                 cfg: DecoderConfig | None = None) -> BeatAnnotation:
    """Beats at the frames where the Viterbi path sits at phase 0."""
    if cfg is None:
        cfg = DecoderConfig(fps=fps)
    if cfg.fps != fps:
        raise ValueError(f"decoder configured for {cfg.fps} fps, "
                         f"activations are {fps} fps")
    space = build_state_space(cfg)
    path = viterbi(space, activations)
    frames = np.flatnonzero(space.state_phase[path] == 0)
    return BeatAnnotation(frames.astype(np.float64) / fps)
