"""From-scratch trainer for the activation network.

Adam with bias correction, batches of fixed-length excerpts sampled with
probability proportional to file length, an 80/20 train/validation split,
and early stopping on validation loss. Only the network parameters (and the
layer-combination weights on the SSL path) are updated; front ends are
fixed feature extractors and never see gradients.
"""

from __future__ import annotations

import json
import time

import numpy as np

from .embeddings import EmbeddingTensor
from .network import (ModelConfig, ModelParams, backward, bce_with_logits,
                      forward, init_model, make_targets)
from .spectral import FeatureSequence

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LR = 5e-5
DEFAULT_BATCH_SIZE = 10
DEFAULT_EXCERPT_SECONDS = 15.0
DEFAULT_BATCHES_PER_EPOCH = 200


class AdamState:
    """Per-tensor first/second moment estimates plus the step counter."""

    def __init__(self, m: dict[str, np.ndarray], v: dict[str, np.ndarray],
                 step: int = 0):
        self.m = m
        self.v = v
        self.step = step

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.tensors.items()},
                   {k: np.zeros_like(a) for k, a in params.tensors.items()})


def adam_step(params: ModelParams, grads: dict[str, np.ndarray],
              state: AdamState, lr: float = DEFAULT_LR,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS):
    """One bias-corrected Adam update, applied in place.

    Returns (params, state) for call-site chaining.
    """
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name, p in params.tensors.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def _track_array(features):
    """(array, fps, n_frames) for a FeatureSequence or EmbeddingTensor."""
    if isinstance(features, FeatureSequence):
        return features.frames, features.fps, features.n_frames
    if isinstance(features, EmbeddingTensor):
        return features.data, features.fps, features.n_frames
    raise TypeError("corpus features must be FeatureSequence or "
                    "EmbeddingTensor")


def _slice_track(features, start: int, stop: int):
    if isinstance(features, FeatureSequence):
        return FeatureSequence(features.frames[start:stop], features.fps)
    return EmbeddingTensor(
        np.ascontiguousarray(features.data[:, start:stop]), features.fps)


def sample_excerpt(corpus, excerpt_seconds: float = DEFAULT_EXCERPT_SECONDS,
                   rng: np.random.Generator | None = None):
    """Draw one training excerpt.

    The file is chosen with probability proportional to its frame count,
    the start uniformly over valid positions. Files shorter than the
    excerpt are returned whole (the batch assembler pads them). Returns
    (features slice, target slice).
    """
    if not corpus:
        raise ValueError("empty corpus")
    if rng is None:
        rng = np.random.default_rng()
    lengths = np.array([_track_array(f)[2] for f, _ in corpus], dtype=float)
    cum = np.cumsum(lengths)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    i = min(i, len(corpus) - 1)
    features, beats = corpus[i]
    _, fps, n = _track_array(features)
    want = int(round(excerpt_seconds * fps))
    if n <= want:
        start, stop = 0, n
    else:
        start = int(rng.integers(0, n - want + 1))
        stop = start + want
    targets = make_targets(beats, n, fps)[start:stop]
    return _slice_track(features, start, stop), targets


def _pad_to(arr: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad the frame axis to n rows (axis 1 for layered input)."""
    frame_axis = 0 if arr.ndim <= 2 else 1
    if arr.shape[frame_axis] == n:
        return arr
    pad = [(0, 0)] * arr.ndim
    pad[frame_axis] = (0, n - arr.shape[frame_axis])
    return np.pad(arr, pad)


def batch_loss_and_grads(params: ModelParams, batch):
    """Mean loss and mean gradients over a list of (features, targets).

    Items are zero-padded to the longest item; padded frames are masked out
    of both loss and gradients, so padding never changes the result.
    """
    max_len = max(_track_array(f)[2] for f, _ in batch)
    total = {k: np.zeros_like(a) for k, a in params.tensors.items()}
    loss_sum = 0.0
    for features, targets in batch:
        arr, _, n = _track_array(features)
        loss, grads = backward(params, _pad_to(np.asarray(arr, float), max_len),
                               _pad_to(np.asarray(targets, float), max_len),
                               n_valid=n)
        loss_sum += loss
        for k in total:
            total[k] += grads[k]
    scale = 1.0 / len(batch)
    for k in total:
        total[k] *= scale
    return loss_sum * scale, total


def validation_loss(params: ModelParams, items) -> float:
    """Mean of per-file BCE over whole files (no excerpting)."""
    if not items:
        raise ValueError("empty validation set")
    losses = []
    for features, beats in items:
        arr, fps, n = _track_array(features)
        logits, _ = forward(params, arr)
        losses.append(bce_with_logits(logits, make_targets(beats, n, fps)))
    return float(np.mean(losses))


def split_corpus(corpus, val_fraction: float = 0.2,
                 rng: np.random.Generator | None = None):
    """Seeded random split; both sides are guaranteed non-empty."""
    if len(corpus) < 2:
        raise ValueError("need at least 2 files to split")
    if rng is None:
        rng = np.random.default_rng()
    perm = rng.permutation(len(corpus))
    n_train = int(round((1.0 - val_fraction) * len(corpus)))
    n_train = min(max(n_train, 1), len(corpus) - 1)
    train_items = [corpus[i] for i in perm[:n_train]]
    val_items = [corpus[i] for i in perm[n_train:]]
    return train_items, val_items


def train(corpus, model_cfg: ModelConfig, epochs: int = 100,
          early_stop_patience: int = 20, *, lr: float = DEFAULT_LR,
          batch_size: int = DEFAULT_BATCH_SIZE,
          excerpt_seconds: float = DEFAULT_EXCERPT_SECONDS,
          batches_per_epoch: int = DEFAULT_BATCHES_PER_EPOCH,
          val_fraction: float = 0.2, seed: int | None = None,
          val_corpus=None, log_path=None):
    """Train from scratch; returns (best-validation params, history).

    ``corpus`` is a list of (features, beats). Without an explicit
    ``val_corpus`` it is split 80/20 with the run seed. ``early_stop_patience``
    is the number of consecutive non-improving validation epochs tolerated:
    patience 0 stops right at the first epoch that fails to improve.
    History entries carry epoch (1-based), train_loss, val_loss and
    wall_seconds; with ``log_path`` each entry is also appended as a JSON
    line as soon as the epoch finishes.
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    rng = np.random.default_rng(model_cfg.seed if seed is None else seed)
    if val_corpus is None:
        train_items, val_items = split_corpus(corpus, val_fraction, rng)
    else:
        train_items, val_items = list(corpus), list(val_corpus)
    if not train_items or not val_items:
        raise ValueError("both splits must be non-empty")

    params = init_model(model_cfg)
    state = AdamState.for_params(params)
    history: list[dict] = []
    best_val = np.inf
    best = params.copy()
    bad = 0
    log = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, epochs + 1):
            t0 = time.perf_counter()
            losses = []
            for _ in range(batches_per_epoch):
                batch = [sample_excerpt(train_items, excerpt_seconds, rng)
                         for _ in range(batch_size)]
                loss, grads = batch_loss_and_grads(params, batch)
                adam_step(params, grads, state, lr)
                losses.append(loss)
            val = validation_loss(params, val_items)
            entry = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                     "val_loss": val,
                     "wall_seconds": time.perf_counter() - t0}
            history.append(entry)
            if log:
                log.write(json.dumps(entry) + "\n")
                log.flush()
            if val < best_val:
                best_val = val
                best = params.copy()
                bad = 0
            else:
                bad += 1
                if bad > early_stop_patience:
                    break
    finally:
        if log:
            log.close()
    return best, history
