"""Dense feed-forward networks with hand-written reverse mode and Adam/SGD."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .config import TrainConfig
from .errors import DivergenceError, ModelFormatError, ShapeError

ACTIVATIONS = ("relu", "identity", "softplus")


def _act(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _act_grad(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "relu":
        return (z > 0).astype(z.dtype)
    if tag == "softplus":
        return expit(z)
    return np.ones_like(z)


@dataclass
class Mlp:
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations differ in length")
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeError(f"layer {i} expects {w.shape[0]} inputs, gets {self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, widths, activations, rng) -> "Mlp":
        """He-normal weights for relu layers, Glorot-normal otherwise; zero biases."""
        if isinstance(activations, str):
            activations = [activations] * (len(widths) - 1)
        ws, bs = [], []
        for fan_in, fan_out, act in zip(widths[:-1], widths[1:], activations):
            std = np.sqrt(2.0 / fan_in) if act == "relu" else np.sqrt(2.0 / (fan_in + fan_out))
            ws.append(rng.standard_normal((fan_in, fan_out)) * std)
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, list(activations))

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   list(self.activations))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)


def _check_input(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.widths[0]:
        raise ShapeError(f"input length {x.shape[-1]} != first layer width {net.widths[0]}")
    return x


def forward(net: Mlp, x) -> np.ndarray:
    """Output for one vector (d,) or a batch (n, d)."""
    a = _check_input(net, x)
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        a = _act(tag, a @ w + b)
    return a


def _forward_cache(net: Mlp, x: np.ndarray):
    acts, pre = [x], []
    a = x
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        pre.append(z)
        a = _act(tag, z)
        acts.append(a)
    return acts, pre


def backward(net: Mlp, x, loss_grad) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients (dW, db) per layer, given dLoss/dOutput.

    For a batch, loss_grad is (n, out) and the gradients are summed over
    the batch; any averaging belongs in loss_grad.
    """
    x = _check_input(net, x)
    g = np.asarray(loss_grad, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x, g = x[None], g[None]
    if g.shape != (x.shape[0], net.widths[-1]):
        raise ShapeError(f"loss gradient shape {g.shape} does not match output")
    acts, pre = _forward_cache(net, x)
    return _backprop(net, acts, pre, g)


def _backprop(net: Mlp, acts, pre, g):
    grads = [None] * len(net.weights)
    for i in reversed(range(len(net.weights))):
        g = g * _act_grad(net.activations[i], pre[i])
        grads[i] = (acts[i].T @ g, g.sum(axis=0))
        if i:
            g = g @ net.weights[i].T
    return grads


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(net: Mlp, inputs, targets, cfg: TrainConfig, augment=None) -> list[float]:
    """Mini-batch MSE training in place; returns the mean loss of each epoch.

    ``augment(batch, rng)`` may transform each input batch (online
    augmentation); it draws from the same seeded generator as the shuffling.
    ``targets`` is an array, or a callable mapping a flattened input batch to
    its targets (needed when the targets depend on the augmented input).
    """
    X = np.asarray(inputs, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("no training data")
    target_fn = targets if callable(targets) else None
    if target_fn is None:
        Y = np.asarray(targets, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if len(X) != len(Y):
            raise ShapeError(f"{len(X)} inputs vs {len(Y)} targets")
    rng = np.random.default_rng(cfg.seed)
    params = net.params()
    opt = Adam(params, cfg.lr) if cfg.optimizer == "adam" else Sgd(params, cfg.lr)
    curve = []
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            if augment is not None:
                xb = augment(xb, rng)
            xb = xb.reshape(len(idx), -1)
            yb = target_fn(xb) if target_fn is not None else Y[idx]
            acts, pre = _forward_cache(net, _check_input(net, xb))
            loss, g = mse_loss(acts[-1], yb)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            grads = []
            for (dw, db), w in zip(_backprop(net, acts, pre, g), net.weights):
                if cfg.weight_decay:
                    dw = dw + cfg.weight_decay * w
                grads += [dw, db]
            opt.step(params, grads)
            total += loss * len(idx)
        curve.append(total / n)
    if not all(np.isfinite(p).all() for p in params):
        raise DivergenceError("non-finite parameters after training")
    return curve


# --- serialization ------------------------------------------------------------
#
# magic(4) version(u16) n_layers(u16) widths(u32 * (L+1)) act tags(u8 * L)
# then per layer: W (row-major float64) and b (float64), little-endian.

MAGIC = b"MGNN"
VERSION = 1


def to_bytes(net: Mlp) -> bytes:
    widths = net.widths
    L = len(net.weights)
    parts = [
        struct.pack("<4sHH", MAGIC, VERSION, L),
        np.array(widths, dtype="<u4").tobytes(),
        bytes(ACTIVATIONS.index(a) for a in net.activations),
    ]
    for w, b in zip(net.weights, net.biases):
        parts += [w.astype("<f8").tobytes(), b.astype("<f8").tobytes()]
    return b"".join(parts)


def from_bytes(buf: bytes, offset: int = 0) -> tuple[Mlp, int]:
    """Decode a network starting at offset; returns it and the end offset."""
    try:
        magic, version, L = struct.unpack_from("<4sHH", buf, offset)
        if magic != MAGIC or version != VERSION:
            raise ModelFormatError(f"bad model header {magic!r} v{version}")
        off = offset + 8
        widths = np.frombuffer(buf, "<u4", L + 1, off).astype(int)
        off += 4 * (L + 1)
        tags = [ACTIVATIONS[t] for t in buf[off:off + L]]
        off += L
        ws, bs = [], []
        for fi, fo in zip(widths[:-1], widths[1:]):
            ws.append(np.frombuffer(buf, "<f8", fi * fo, off).reshape(fi, fo).astype(np.float64))
            off += 8 * fi * fo
            bs.append(np.frombuffer(buf, "<f8", fo, off).astype(np.float64))
            off += 8 * fo
    except (struct.error, ValueError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"truncated or corrupt model: {exc}") from None
    return Mlp(ws, bs, tags), off
