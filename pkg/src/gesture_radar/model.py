"""Tiny GRU classifier (16 units, 6-way softmax) with BPTT training.

Gate order everywhere is (update z, reset r, candidate n). The candidate uses
the reset gate after the recurrent affine term, with separate input and
recurrent biases::

    z  = sigmoid(W_z x + b_iz + U_z h + b_hz)
    r  = sigmoid(W_r x + b_ir + U_r h + b_hr)
    n  = tanh(W_n x + b_in + r * (U_n h + b_hn))
    h' = (1 - z) * n + z * h

which has 3 * (16*5 + 16*16 + 16 + 16) = 1104 parameters; the dense layer adds
6*16 + 6 = 102.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CLASS_NAMES, NUM_CLASSES, NUM_FEATURES, GestureClass, RadarConfig

log = logging.getLogger(__name__)

HIDDEN = 16
RECURRENT_PARAM_COUNT = 3 * (HIDDEN * NUM_FEATURES + HIDDEN * HIDDEN + 2 * HIDDEN)
DENSE_PARAM_COUNT = NUM_CLASSES * HIDDEN + NUM_CLASSES
TOTAL_PARAM_COUNT = RECURRENT_PARAM_COUNT + DENSE_PARAM_COUNT
LOG_FLOOR = 1e-12

# canonical tensor layout of the flat parameter vector and of weight files
PARAM_SHAPES = {
    "W": (3, HIDDEN, NUM_FEATURES),
    "U": (3, HIDDEN, HIDDEN),
    "b_i": (3, HIDDEN),
    "b_h": (3, HIDDEN),
    "W_d": (NUM_CLASSES, HIDDEN),
    "b_d": (NUM_CLASSES,),
}
RECURRENT_TENSORS = ("W", "U", "b_i", "b_h")


@dataclass
class GruParams:
    W: np.ndarray
    U: np.ndarray
    b_i: np.ndarray
    b_h: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray

    def __post_init__(self):
        for name, shape in PARAM_SHAPES.items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ValueError(f"{name} has shape {value.shape}, expected {shape}")
        assert self.count() == TOTAL_PARAM_COUNT == 1206

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_SHAPES}

    def count(self, names=None) -> int:
        return sum(getattr(self, n).size for n in (names or PARAM_SHAPES))

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_SHAPES])

    @classmethod
    def from_flat(cls, vector: np.ndarray) -> "GruParams":
        vector = np.asarray(vector)
        if vector.size != TOTAL_PARAM_COUNT:
            raise ValueError(f"expected {TOTAL_PARAM_COUNT} parameters, got {vector.size}")
        out, pos = {}, 0
        for name, shape in PARAM_SHAPES.items():
            size = math.prod(shape)
            out[name] = vector[pos : pos + size].reshape(shape).copy()
            pos += size
        return cls(**out)

    @classmethod
    def zeros(cls, dtype=np.float64) -> "GruParams":
        return cls(**{n: np.zeros(s, dtype=dtype) for n, s in PARAM_SHAPES.items()})

    def astype(self, dtype) -> "GruParams":
        return GruParams(**{n: a.astype(dtype) for n, a in self.arrays().items()})

    def copy(self) -> "GruParams":
        return self.astype(self.W.dtype)


def init_params(rng: np.random.Generator) -> GruParams:
    """Glorot-uniform input and dense weights, orthogonal recurrent weights, zero biases."""
    p = GruParams.zeros()
    lim = math.sqrt(6.0 / (NUM_FEATURES + HIDDEN))
    p.W[...] = rng.uniform(-lim, lim, size=p.W.shape)
    for g in range(3):
        q, r = np.linalg.qr(rng.normal(size=(HIDDEN, HIDDEN)))
        p.U[g] = q * np.sign(np.diag(r))
    lim = math.sqrt(6.0 / (HIDDEN + NUM_CLASSES))
    p.W_d[...] = rng.uniform(-lim, lim, size=p.W_d.shape)
    return p


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def gru_cell(x, h, p: GruParams):
    """One GRU step; ``x`` is ``[..., 5]`` and ``h`` is ``[..., 16]``."""
    z = sigmoid(x @ p.W[0].T + p.b_i[0] + h @ p.U[0].T + p.b_h[0])
    r = sigmoid(x @ p.W[1].T + p.b_i[1] + h @ p.U[1].T + p.b_h[1])
    n = np.tanh(x @ p.W[2].T + p.b_i[2] + r * (h @ p.U[2].T + p.b_h[2]))
    return (1.0 - z) * n + z * h


def forward(features, p: GruParams, h0=None, dtype=None):
    """Run the network over ``[T, 5]`` (or ``[B, T, 5]``) features.

    Returns ``(probs, hidden)`` with shapes ``[..., T, 6]`` and ``[..., T, 16]``;
    the last hidden row can be fed back as ``h0`` for streaming.
    """
    if dtype is not None:
        p = p.astype(dtype)
        features = np.asarray(features, dtype=dtype)
    else:
        features = np.asarray(features, dtype=p.W.dtype)
    T = features.shape[-2]
    if T < 1:
        raise ValueError("need at least one time step")
    lead = features.shape[:-2]
    h = np.zeros(lead + (HIDDEN,), dtype=features.dtype) if h0 is None else np.asarray(h0, dtype=features.dtype)
    hidden = np.empty(lead + (T, HIDDEN), dtype=features.dtype)
    for t in range(T):
        h = gru_cell(features[..., t, :], h, p)
        hidden[..., t, :] = h
    probs = softmax(hidden @ p.W_d.T + p.b_d)
    return probs, hidden


def loss(probs, labels, reduction: str = "mean_over_time") -> float:
    """Per-step cross-entropy reduced over time, then averaged over the batch."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    ce = -np.log(np.maximum(picked, LOG_FLOOR))
    per_seq = ce.mean(axis=-1) if reduction == "mean_over_time" else ce.sum(axis=-1)
    return float(np.mean(per_seq))


def loss_and_grad(features, labels, p: GruParams, reduction: str = "mean_over_time"):
    """Loss and exact BPTT gradients for a batch ``[B, T, 5]`` / ``[B, T]``."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim == 2:
        x, y = x[None], y[None]
    B, T, _ = x.shape

    hs = np.zeros((T + 1, B, HIDDEN))
    zs = np.empty((T, B, HIDDEN))
    rs = np.empty((T, B, HIDDEN))
    ns = np.empty((T, B, HIDDEN))
    qs = np.empty((T, B, HIDDEN))  # U_n h + b_hn
    xt = np.transpose(x, (1, 0, 2))
    ax = np.einsum("tbf,ghf->gtbh", xt, p.W) + p.b_i[:, None, None, :]
    for t in range(T):
        h = hs[t]
        ah = np.einsum("bk,ghk->gbh", h, p.U) + p.b_h[:, None, :]
        z = sigmoid(ax[0, t] + ah[0])
        r = sigmoid(ax[1, t] + ah[1])
        n = np.tanh(ax[2, t] + r * ah[2])
        hs[t + 1] = (1.0 - z) * n + z * h
        zs[t], rs[t], ns[t], qs[t] = z, r, n, ah[2]

    H = hs[1:]  # [T, B, 16]
    probs = softmax(H @ p.W_d.T + p.b_d)  # [T, B, 6]
    yt = y.T
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, yt[..., None], 1.0, axis=-1)
    picked = np.take_along_axis(probs, yt[..., None], axis=-1)[..., 0]
    ce = -np.log(np.maximum(picked, LOG_FLOOR))
    scale = 1.0 / (B * T) if reduction == "mean_over_time" else 1.0 / B
    value = float(ce.sum() * scale)

    dlogits = (probs - onehot) * scale
    g = GruParams.zeros()
    g.W_d[...] = np.einsum("tbc,tbh->ch", dlogits, H)
    g.b_d[...] = dlogits.sum(axis=(0, 1))
    dH = dlogits @ p.W_d  # [T, B, 16]

    da = np.empty((3, T, B, HIDDEN))  # pre-activation grads on the input side
    dq = np.empty((T, B, HIDDEN))
    dh = np.zeros((B, HIDDEN))
    for t in range(T - 1, -1, -1):
        dh = dh + dH[t]
        z, r, n, q, h = zs[t], rs[t], ns[t], qs[t], hs[t]
        dn = dh * (1.0 - z) * (1.0 - n * n)
        dz = dh * (h - n) * z * (1.0 - z)
        dr = dn * q * r * (1.0 - r)
        dqt = dn * r
        da[0, t], da[1, t], da[2, t] = dz, dr, dn
        dq[t] = dqt
        dh = dh * z + dz @ p.U[0] + dr @ p.U[1] + dqt @ p.U[2]

    hprev = hs[:-1]
    g.W[...] = np.einsum("gtbh,tbf->ghf", da, xt)
    g.b_i[...] = da.sum(axis=(1, 2))
    # recurrent-side pre-activations: z and r share da, the candidate uses dq
    drec = np.stack([da[0], da[1], dq])
    g.U[...] = np.einsum("gtbh,tbk->ghk", drec, hprev)
    g.b_h[...] = drec.sum(axis=(1, 2))
    return value, g


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss_reduction: str = "mean_over_time"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1 or self.eps <= 0:
            raise ValueError("training hyperparameters must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.loss_reduction not in ("mean_over_time", "sum_over_time"):
            raise ValueError(f"unknown loss_reduction {self.loss_reduction!r}")


@dataclass
class TrainState:
    params: GruParams
    m: GruParams = None
    v: GruParams = None
    step: int = 0
    best_params: GruParams | None = None
    best_metric: float = -math.inf
    best_epoch: int = -1

    def __post_init__(self):
        if self.m is None:
            self.m = GruParams.zeros()
        if self.v is None:
            self.v = GruParams.zeros()


def adam_step(state: TrainState, grads: GruParams, cfg: TrainConfig) -> TrainState:
    """Bias-corrected Adam update, in place on ``state`` (also returned)."""
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for name in PARAM_SHAPES:
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        getattr(state.params, name)[...] -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps)
    return state


# fixed, parameter-free scaling of the raw features into O(1) network inputs
def scale_features(features, config: RadarConfig | None = None) -> np.ndarray:
    config = config or RadarConfig()
    f = np.asarray(features, dtype=np.float64)
    out = np.empty_like(f)
    out[..., 0] = f[..., 0] / config.max_range
    out[..., 1] = f[..., 1] / config.max_velocity
    out[..., 2] = f[..., 2] / (math.pi / 2)
    out[..., 3] = f[..., 3] / (math.pi / 2)
    out[..., 4] = np.log10(1.0 + np.maximum(f[..., 4], 0.0)) / 4.0
    return out


def frame_accuracy(params: GruParams, x: np.ndarray, y: np.ndarray) -> float:
    probs, _ = forward(x, params)
    return float(np.mean(probs.argmax(axis=-1) == y))


@dataclass
class TrainResult:
    params: GruParams
    history: list = field(default_factory=list)  # (epoch, train_loss, val_accuracy)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")


def _stack(sequences, config):
    if not sequences:
        raise ValueError("empty sequence set")
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise ValueError(f"sequences must share one length, got {sorted(lengths)}")
    x = np.stack([scale_features(s.features, config) for s in sequences])
    y = np.stack([s.labels for s in sequences])
    return x, y


def train(train_set, val_set, cfg: TrainConfig | None = None, config: RadarConfig | None = None, callback=None) -> TrainResult:
    """Mini-batch Adam over whole sequences; keeps the best validation snapshot."""
    cfg = cfg or TrainConfig()
    x, y = _stack(list(train_set), config)
    xv, yv = _stack(list(val_set), config)
    rng = np.random.default_rng(cfg.seed)
    state = TrainState(init_params(rng))
    result = TrainResult(state.params)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = loss_and_grad(x[idx], y[idx], state.params, cfg.loss_reduction)
            adam_step(state, grads, cfg)
            losses.append(value)
        acc = frame_accuracy(state.params, xv, yv)
        train_loss = float(np.mean(losses))
        result.history.append((epoch, train_loss, acc))
        if acc > state.best_metric:
            state.best_metric, state.best_epoch = acc, epoch
            state.best_params = state.params.copy()
        log.debug("epoch %d train_loss %.5f val_accuracy %.5f", epoch, train_loss, acc)
        if callback is not None:
            callback(epoch, train_loss, acc)
    result.params = state.best_params
    result.best_epoch = state.best_epoch
    result.best_val_accuracy = state.best_metric
    return result


def predict(features, params: GruParams, config: RadarConfig | None = None, h0=None, dtype=np.float32):
    """Class probabilities for raw (unscaled) features; 32-bit by default."""
    return forward(scale_features(features, config), params, h0=h0, dtype=dtype)


# ---------------------------------------------------------------- weight files

MAGIC = b"GRW1"
VERSION = 1


class WeightFileError(ValueError):
    pass


def save_params(params: GruParams, path) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<III", VERSION, params.count(), len(PARAM_SHAPES))
    for name, shape in PARAM_SHAPES.items():
        raw = name.encode("ascii")
        buf += struct.pack("<B", len(raw)) + raw
        buf += struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
    buf += struct.pack("<I", NUM_CLASSES)
    for cls in GestureClass:
        raw = CLASS_NAMES[cls].encode("ascii")
        buf += struct.pack("<BB", int(cls), len(raw)) + raw
    buf += params.flat().astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_params(path) -> GruParams:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise WeightFileError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    try:
        version, count, ntensors = struct.unpack_from("<III", data, 4)
        pos = 16
        shapes = {}
        for _ in range(ntensors):
            (n,) = struct.unpack_from("<B", data, pos)
            name = data[pos + 1 : pos + 1 + n].decode("ascii")
            pos += 1 + n
            (ndim,) = struct.unpack_from("<B", data, pos)
            shapes[name] = struct.unpack_from(f"<{ndim}I", data, pos + 1)
            pos += 1 + 4 * ndim
        (nclasses,) = struct.unpack_from("<I", data, pos)
        pos += 4
        classes = {}
        for _ in range(nclasses):
            idx, n = struct.unpack_from("<BB", data, pos)
            classes[idx] = data[pos + 2 : pos + 2 + n].decode("ascii")
            pos += 2 + n
    except (struct.error, UnicodeDecodeError) as exc:
        raise WeightFileError(f"truncated or corrupt header: {exc}") from None
    if version != VERSION:
        raise WeightFileError(f"unsupported version {version}")
    if count != TOTAL_PARAM_COUNT:
        raise WeightFileError(f"parameter count {count} != {TOTAL_PARAM_COUNT}")
    recurrent = sum(math.prod(shapes.get(n, ())) for n in RECURRENT_TENSORS if n in shapes)
    if recurrent != RECURRENT_PARAM_COUNT:
        raise WeightFileError(f"recurrent parameter count {recurrent} != {RECURRENT_PARAM_COUNT}")
    if list(shapes) != list(PARAM_SHAPES) or any(tuple(shapes[n]) != s for n, s in PARAM_SHAPES.items()):
        raise WeightFileError(f"tensor table {shapes} does not match the expected layout")
    if sum(math.prod(s) for s in shapes.values()) != count:
        raise WeightFileError("shape table disagrees with the count field")
    if classes != {int(c): CLASS_NAMES[c] for c in GestureClass}:
        raise WeightFileError(f"class mapping {classes} does not match this build")
    payload = data[pos:]
    if len(payload) != 4 * count:
        raise WeightFileError(f"payload holds {len(payload) // 4} values, header says {count}")
    return GruParams.from_flat(np.frombuffer(payload, dtype="<f4").astype(np.float64))
