"""Beat-activation network: linear multi-head self-attention, from scratch.

One pre-layer-norm encoder block (four heads by default) over projected
input features, followed by a position-wise feed-forward block and a final
linear layer that emits one logit per frame; the sigmoid of a logit is the
beat salience of that frame.

Attention uses the kernel trick: with phi(x) = elu(x) + 1,

    out_i = sum_j phi(q_i).phi(k_j) v_j / sum_j phi(q_i).phi(k_j)

evaluated through the factorization S = sum_j phi(k_j) v_j^T and
z = sum_j phi(k_j), so cost and memory stay linear in the sequence length
and no N x N matrix is ever materialized. Gradients for every trainable
tensor are computed analytically (no autodiff dependency), including the
layer-combination weights when the input is a stack of SSL layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .beats import as_beat_times

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    """Shape and seed of the activation network."""

    input_dim: int
    model_dim: int = 768
    heads: int = 4
    head_dim: int = 192
    ffn_dim: int = 1024
    seed: int = 0
    n_embedding_layers: int | None = None  # set for the SSL path (L+1 layers)

    def __post_init__(self):
        dims = (self.input_dim, self.model_dim, self.heads, self.head_dim,
                self.ffn_dim)
        if any(d <= 0 for d in dims):
            raise ValueError("all model dimensions must be positive")
        if self.heads * self.head_dim != self.model_dim:
            raise ValueError(
                f"heads*head_dim = {self.heads * self.head_dim} "
                f"must equal model_dim = {self.model_dim}")
        if self.n_embedding_layers is not None and self.n_embedding_layers < 1:
            raise ValueError("n_embedding_layers must be >= 1 when set")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Trainable tensors in declaration (checkpoint) order."""
    d, h, hd, f = cfg.model_dim, cfg.heads, cfg.head_dim, cfg.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "w_in": (cfg.input_dim, d), "b_in": (d,),
        "ln1_g": (d,), "ln1_b": (d,),
        "w_q": (h, d, hd), "b_q": (h, hd),
        "w_k": (h, d, hd), "b_k": (h, hd),
        "w_v": (h, d, hd), "b_v": (h, hd),
        "w_o": (d, d), "b_o": (d,),
        "ln2_g": (d,), "ln2_b": (d,),
        "w_ff1": (d, f), "b_ff1": (f,),
        "w_ff2": (f, d), "b_ff2": (d,),
        "w_out": (d,), "b_out": (1,),
    }
    if cfg.n_embedding_layers is not None:
        shapes["layer_weights"] = (cfg.n_embedding_layers,)
    return shapes


# fan_in/fan_out used for the uniform Xavier bound of each weight matrix
_XAVIER_FANS = {
    "w_in": lambda c: (c.input_dim, c.model_dim),
    "w_q": lambda c: (c.model_dim, c.head_dim),
    "w_k": lambda c: (c.model_dim, c.head_dim),
    "w_v": lambda c: (c.model_dim, c.head_dim),
    "w_o": lambda c: (c.model_dim, c.model_dim),
    "w_ff1": lambda c: (c.model_dim, c.ffn_dim),
    "w_ff2": lambda c: (c.ffn_dim, c.model_dim),
    "w_out": lambda c: (c.model_dim, 1),
}


class ModelParams:
    """All trainable tensors of the network, keyed by name."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        expected = param_shapes(config)
        if list(tensors) != list(expected):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape}, "
                                 f"expected {shape}")
            if not np.all(np.isfinite(tensors[name])):
                raise ValueError(f"{name}: non-finite values")
        self.config = config
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config,
                           {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config,
                           {k: v.astype(dtype) for k, v in self.tensors.items()})


def init_model(cfg: ModelConfig) -> ModelParams:
    """Seed-deterministic initialization.

    Linear weights are uniform in +-sqrt(6 / (fan_in + fan_out)); biases and
    layer-norm offsets start at zero, gains at one. Layer-combination
    weights start at one.
    """
    rng = np.random.default_rng(cfg.seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name in _XAVIER_FANS:
            fan_in, fan_out = _XAVIER_FANS[name](cfg)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif name in ("ln1_g", "ln2_g", "layer_weights"):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams(cfg, tensors)


def positional_encoding(n: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal absolute positions: sin on even dims, cos on odd dims."""
    pos = np.arange(n, dtype=dtype)[:, None]
    idx = np.arange(0, dim, 2, dtype=dtype)
    angles = pos / np.power(10000.0, idx / dim)
    pe = np.empty((n, dim), dtype=dtype)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return pe


def _phi(x: np.ndarray) -> np.ndarray:
    """elu(x) + 1: strictly positive kernel feature map."""
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def _phi_grad_from_value(phi_x: np.ndarray) -> np.ndarray:
    # phi'(x) = 1 for x > 0 (where phi > 1) and exp(x) = phi(x) for x <= 0
    return np.minimum(phi_x, 1.0)


def _attention_from_features(qp: np.ndarray, kp: np.ndarray, v: np.ndarray,
                             n_valid: int | None = None):
    """Factorized attention on already-mapped features.

    qp, kp, v: (..., N, d) with matching leading axes. Only the first
    ``n_valid`` key/value rows enter the sums; query rows beyond n_valid
    still produce (meaningless) outputs and are masked by the caller.
    """
    m = qp.shape[-2] if n_valid is None else n_valid
    kv = np.matmul(np.swapaxes(kp[..., :m, :], -1, -2), v[..., :m, :])
    z = kp[..., :m, :].sum(axis=-2)
    num = np.matmul(qp, kv)
    den = np.matmul(qp, z[..., None])[..., 0]
    return num / den[..., None], kv, z, den


def linear_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                     n_valid: int | None = None) -> np.ndarray:
    """Non-causal linear attention for one head.

    Applies phi = elu + 1 to queries and keys, then evaluates the
    normalized kernel attention through its linear factorization.
    """
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    if q.shape != k.shape or q.shape[-2] != v.shape[-2]:
        raise ValueError("q, k, v shapes disagree")
    out, _, _, _ = _attention_from_features(_phi(q), _phi(k), v, n_valid)
    return out


def _as_model_input(params: ModelParams, x) -> np.ndarray:
    cfg = params.config
    arr = getattr(x, "frames", None)
    if arr is None:
        arr = getattr(x, "data", None)
    if arr is None:
        arr = x
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != cfg.input_dim:
            raise ValueError(f"feature dim {arr.shape[1]} != input_dim "
                             f"{cfg.input_dim}")
        return arr
    if arr.ndim == 3:
        if cfg.n_embedding_layers is None:
            raise ValueError("model was not configured for layered input")
        if arr.shape[0] != cfg.n_embedding_layers:
            raise ValueError(f"{arr.shape[0]} layers != configured "
                             f"{cfg.n_embedding_layers}")
        if arr.shape[2] != cfg.input_dim:
            raise ValueError(f"embedding dim {arr.shape[2]} != input_dim "
                             f"{cfg.input_dim}")
        return arr
    raise ValueError("input must be (N, D) features or (L, N, D) layers")


def _layer_norm_stats(x, gain, bias):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return gain * xhat + bias, xhat, inv


def _layer_norm_backward(dy, xhat, inv, gain):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    mean1 = dxhat.mean(axis=1, keepdims=True)
    mean2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv * (dxhat - mean1 - xhat * mean2)
    return dx, dgain, dbias


def forward(params: ModelParams, x, n_valid: int | None = None):
    """Run the network; returns (logits, activations), one value per frame.

    ``x`` is an (N, input_dim) feature matrix (FeatureSequence accepted) or
    an (L, N, input_dim) layer stack combined with the model's layer
    weights. When ``n_valid`` is given, rows beyond it are treated as batch
    padding: they are excluded from the attention sums so they cannot
    influence valid frames.

    Inference path: intermediates are released as soon as possible, so peak
    extra memory stays at a few N x model_dim buffers.
    """
    t = params.tensors
    arr = _as_model_input(params, x)
    if arr.ndim == 3:
        arr = np.einsum("l,lnd->nd", t["layer_weights"], arr)
    n = arr.shape[0]

    h = arr @ t["w_in"]
    del arr
    h += t["b_in"]
    h += positional_encoding(n, params.config.model_dim)

    a1, _, _ = _layer_norm_stats(h, t["ln1_g"], t["ln1_b"])
    q = np.matmul(a1, t["w_q"]) + t["b_q"][:, None, :]
    k = np.matmul(a1, t["w_k"]) + t["b_k"][:, None, :]
    v = np.matmul(a1, t["w_v"]) + t["b_v"][:, None, :]
    del a1
    qp = _phi(q)
    del q
    kp = _phi(k)
    del k
    out, _, _, _ = _attention_from_features(qp, kp, v, n_valid)
    del qp, kp, v
    cat = np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(n, -1)
    del out
    proj = cat @ t["w_o"]
    del cat
    proj += t["b_o"]
    h += proj
    del proj

    a2, _, _ = _layer_norm_stats(h, t["ln2_g"], t["ln2_b"])
    g = a2 @ t["w_ff1"]
    del a2
    g += t["b_ff1"]
    np.maximum(g, 0.0, out=g)
    f = g @ t["w_ff2"]
    del g
    f += t["b_ff2"]
    h += f
    del f

    logits = h @ t["w_out"] + t["b_out"][0]
    del h
    return logits, expit(logits)


def _forward_cached(params: ModelParams, x, n_valid: int | None):
    """Forward pass that retains every intermediate needed by backward."""
    t = params.tensors
    arr = _as_model_input(params, x)
    cache: dict = {"n_valid": n_valid}
    if arr.ndim == 3:
        cache["layers"] = arr
        arr = np.einsum("l,lnd->nd", t["layer_weights"], arr)
    cache["x"] = arr
    n = arr.shape[0]

    h0 = arr @ t["w_in"] + t["b_in"] + positional_encoding(n, params.config.model_dim)
    a1, xhat1, inv1 = _layer_norm_stats(h0, t["ln1_g"], t["ln1_b"])
    q = np.matmul(a1, t["w_q"]) + t["b_q"][:, None, :]
    k = np.matmul(a1, t["w_k"]) + t["b_k"][:, None, :]
    v = np.matmul(a1, t["w_v"]) + t["b_v"][:, None, :]
    qp = _phi(q)
    kp = _phi(k)
    out, kv, z, den = _attention_from_features(qp, kp, v, n_valid)
    cat = np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(n, -1)
    h1 = h0 + cat @ t["w_o"] + t["b_o"]

    a2, xhat2, inv2 = _layer_norm_stats(h1, t["ln2_g"], t["ln2_b"])
    g = np.maximum(a2 @ t["w_ff1"] + t["b_ff1"], 0.0)
    h2 = h1 + g @ t["w_ff2"] + t["b_ff2"]
    logits = h2 @ t["w_out"] + t["b_out"][0]

    cache.update(a1=a1, xhat1=xhat1, inv1=inv1, qp=qp, kp=kp, v=v, kv=kv,
                 z=z, den=den, out=out, cat=cat, a2=a2, xhat2=xhat2,
                 inv2=inv2, g=g, h2=h2, logits=logits)
    return logits, cache


def bce_with_logits(logits: np.ndarray, targets: np.ndarray,
                    n_valid: int | None = None) -> float:
    """Numerically stable binary cross-entropy, averaged over (valid) frames.

    Per frame: max(z, 0) - z*y + log(1 + exp(-|z|)).
    """
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ValueError(f"{z.size} logits vs {y.size} targets")
    if n_valid is not None:
        z, y = z[:n_valid], y[:n_valid]
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def backward(params: ModelParams, x, targets: np.ndarray,
             n_valid: int | None = None):
    """Loss and exact analytic gradients for every trainable tensor.

    Returns (loss, grads) where grads mirrors ``params.tensors``. Padded
    frames (beyond ``n_valid``) contribute neither to the loss nor to any
    gradient.
    """
    t = params.tensors
    logits, cache = _forward_cached(params, x, n_valid)
    n = logits.shape[0]
    m = n if n_valid is None else n_valid
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.size != n:
        raise ValueError(f"{n} frames vs {y.size} targets")
    loss = bce_with_logits(logits, y, n_valid)

    grads = {name: np.zeros_like(arr) for name, arr in t.items()}

    dlogits = np.zeros(n)
    dlogits[:m] = (expit(logits[:m]) - y[:m]) / m

    # final linear
    grads["w_out"][:] = cache["h2"].T @ dlogits
    grads["b_out"][:] = dlogits.sum()
    dh2 = dlogits[:, None] * t["w_out"][None, :]

    # feed-forward block (pre-LN, residual)
    dh1 = dh2.copy()
    dg = dh2 @ t["w_ff2"].T
    grads["w_ff2"][:] = cache["g"].T @ dh2
    grads["b_ff2"][:] = dh2.sum(axis=0)
    dg *= cache["g"] > 0
    da2 = dg @ t["w_ff1"].T
    grads["w_ff1"][:] = cache["a2"].T @ dg
    grads["b_ff1"][:] = dg.sum(axis=0)
    dx2, dg2, db2 = _layer_norm_backward(da2, cache["xhat2"], cache["inv2"],
                                         t["ln2_g"])
    grads["ln2_g"][:] = dg2
    grads["ln2_b"][:] = db2
    dh1 += dx2

    # attention block (pre-LN, residual)
    dh0 = dh1.copy()
    dcat = dh1 @ t["w_o"].T
    grads["w_o"][:] = cache["cat"].T @ dh1
    grads["b_o"][:] = dh1.sum(axis=0)
    heads, head_dim = params.config.heads, params.config.head_dim
    dout = np.ascontiguousarray(
        dcat.reshape(n, heads, head_dim).transpose(1, 0, 2))

    qp, kp, v = cache["qp"], cache["kp"], cache["v"]
    kv, z, den, out = cache["kv"], cache["z"], cache["den"], cache["out"]
    dnum = dout / den[..., None]
    dden = -np.einsum("hnd,hnd->hn", dout, out) / den
    dqp = np.matmul(dnum, np.swapaxes(kv, -1, -2))
    dqp += dden[..., None] * z[:, None, :]
    dkv = np.matmul(np.swapaxes(qp, -1, -2), dnum)
    dz = np.einsum("hn,hnd->hd", dden, qp)
    dkp_v = np.matmul(v[:, :m], np.swapaxes(dkv, -1, -2)) + dz[:, None, :]
    dv_v = np.matmul(kp[:, :m], dkv)

    dq = dqp * _phi_grad_from_value(qp)
    dk_v = dkp_v * _phi_grad_from_value(kp[:, :m])

    a1 = cache["a1"]
    da1 = np.einsum("hne,hde->nd", dq, t["w_q"])
    da1[:m] += np.einsum("hne,hde->nd", dk_v, t["w_k"])
    da1[:m] += np.einsum("hne,hde->nd", dv_v, t["w_v"])
    grads["w_q"][:] = np.matmul(a1.T, dq)
    grads["b_q"][:] = dq.sum(axis=1)
    grads["w_k"][:] = np.matmul(a1[:m].T, dk_v)
    grads["b_k"][:] = dk_v.sum(axis=1)
    grads["w_v"][:] = np.matmul(a1[:m].T, dv_v)
    grads["b_v"][:] = dv_v.sum(axis=1)

    dx1, dg1, db1 = _layer_norm_backward(da1, cache["xhat1"], cache["inv1"],
                                         t["ln1_g"])
    grads["ln1_g"][:] = dg1
    grads["ln1_b"][:] = db1
    dh0 += dx1

    # input projection (positional encoding is constant)
    grads["w_in"][:] = cache["x"].T @ dh0
    grads["b_in"][:] = dh0.sum(axis=0)
    if "layers" in cache:
        dx = dh0 @ t["w_in"].T
        grads["layer_weights"][:] = np.einsum("nd,lnd->l", dx, cache["layers"])

    return loss, grads


def make_targets(beats, n_frames: int, fps: float) -> np.ndarray:
    """Frame-level training targets: 1 at each beat frame, 0.5 on its
    immediate neighbors (never overwriting a 1), 0 elsewhere."""
    times = as_beat_times(beats)
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if times.size and (times[0] < 0 or times[-1] > n_frames / fps + 1e-9):
        raise ValueError("beat outside the feature time range")
    y = np.zeros(n_frames)
    centers = np.minimum(np.floor(times * fps + 0.5).astype(int), n_frames - 1)
    for i in centers:
        for j in (i - 1, i + 1):
            if 0 <= j < n_frames:
                y[j] = max(y[j], 0.5)
    y[centers] = 1.0
    return y
