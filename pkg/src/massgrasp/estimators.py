"""Mass estimator and its two self-supervised uncertainty heads.

All three heads read only the patches and mass labels of a Dataset; no
other supervision enters their training.
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .config import ExperimentConfig, TrainConfig
from .core import Dataset, Patch
from .errors import ModelFormatError, ShapeError
from .patching import flip_batch

DEFAULT = ExperimentConfig()


@dataclass(frozen=True)
class Normalizer:
    """Per-channel input standardisation, fixed after fitting."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, patches: np.ndarray) -> "Normalizer":
        mean = patches.mean(axis=(0, 2, 3))
        std = patches.std(axis=(0, 2, 3))
        return cls(mean.astype(np.float64), np.where(std > 1e-8, std, 1.0).astype(np.float64))

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        return (patches - self.mean[None, :, None, None]) / self.std[None, :, None, None]


def _as_batch(patches, n_channels: int, size: int) -> np.ndarray:
    if isinstance(patches, Patch):
        patches = patches.channels
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != (n_channels, size, size):
        raise ShapeError(f"expected patches of shape (C={n_channels}, {size}, {size}), got {x.shape}")
    return x


def _net_input(norm: Normalizer, net: nn.Mlp, patches) -> np.ndarray:
    c = len(norm.mean)
    p = int(round(np.sqrt(net.widths[0] / c)))
    x = norm(_as_batch(patches, c, p))
    return x.reshape(len(x), -1)


def _widths(cfg: ExperimentConfig, n_in: int, n_out: int) -> list[int]:
    return [n_in, *cfg.hidden, n_out]


def _acts(cfg: ExperimentConfig, last: str) -> list[str]:
    return ["relu"] * len(cfg.hidden) + [last]


def _start_at(net: nn.Mlp, value: float) -> nn.Mlp:
    """Zero the output layer so training starts from the constant ``value``."""
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = value
    return net


def _inv_softplus(y: float) -> float:
    y = max(y, 1e-3)
    return float(y + np.log(-np.expm1(-y)))


def _head(tc: TrainConfig, stream: int, seed: int) -> tuple[TrainConfig, np.random.Generator]:
    """Per-head training config and init generator; heads never share a stream."""
    ss = np.random.SeedSequence([tc.seed, seed, stream])
    shuffle_seed, init_seed = ss.generate_state(2)
    return dataclasses.replace(tc, seed=int(shuffle_seed)), np.random.default_rng(int(init_seed))


# --- mass head ---------------------------------------------------------------------

@dataclass
class MassEstimator:
    net: nn.Mlp
    norm: Normalizer
    label_mean: float
    label_std: float
    eval_loss: float = float("nan")
    curve: tuple = ()

    def predict_batch(self, patches) -> np.ndarray:
        out = nn.forward(self.net, _net_input(self.norm, self.net, patches))[:, 0]
        return self.label_mean + self.label_std * out


def predict_mass(est: MassEstimator, patch) -> float:
    return float(est.predict_batch(patch)[0])


def train_mass(ds: Dataset, cfg: ExperimentConfig = DEFAULT, holdout: Dataset | None = None,
               norm: Normalizer | None = None, seed: int = 0) -> MassEstimator:
    """MSE regression of grasped mass on patches, with online flip augmentation."""
    X = ds.patches().astype(np.float64)
    y = ds.masses()
    norm = norm or Normalizer.fit(X)
    mu = float(y.mean())
    sd = float(y.std()) if y.std() > 0 else 1.0
    tc, rng = _head(cfg.mass_train, 1, seed)
    net = _start_at(nn.Mlp.init(_widths(cfg, X[0].size, 1), _acts(cfg, "identity"), rng), 0.0)
    curve = nn.train(net, norm(X), (y - mu) / sd, tc, augment=flip_batch)
    est = MassEstimator(net, norm, mu, sd, curve=tuple(curve))
    if holdout is not None and len(ds) > 100:
        ref, pred = holdout.masses(), est.predict_batch(holdout.patches())
    else:
        ref, pred = y, est.predict_batch(X)
    est.eval_loss = float(np.mean((pred - ref) ** 2))
    return est


# --- error estimation head ---------------------------------------------------------

@dataclass
class ErrorEstimator:
    net: nn.Mlp  # softplus output
    norm: Normalizer
    scale_g: float

    def score_batch(self, patches) -> np.ndarray:
        return self.scale_g * nn.forward(self.net, _net_input(self.norm, self.net, patches))[:, 0]


def error_targets(ds: Dataset, mass_est: MassEstimator) -> np.ndarray:
    """|label - predicted mass| for every record."""
    return np.abs(ds.masses() - mass_est.predict_batch(ds.patches()))


def train_ee(ds: Dataset, mass_est: MassEstimator, cfg: ExperimentConfig = DEFAULT,
             seed: int = 0) -> ErrorEstimator:
    """Regress the mass head's absolute error on the same patches."""
    X = ds.patches().astype(np.float64)
    t = error_targets(ds, mass_est)
    scale = mass_est.label_std
    tc, rng = _head(cfg.ee_train, 2, seed)
    net = nn.Mlp.init(_widths(cfg, X[0].size, 1), _acts(cfg, "softplus"), rng)
    _start_at(net, _inv_softplus(float(np.mean(t)) / scale))
    nn.train(net, mass_est.norm(X), t / scale, tc, augment=flip_batch)
    return ErrorEstimator(net, mass_est.norm, scale)


def uncertainty_ee(est: ErrorEstimator, patch) -> float:
    return float(est.score_batch(patch)[0])


# --- random network distillation ---------------------------------------------------

@dataclass
class RndPair:
    target: nn.Mlp  # frozen
    predictor: nn.Mlp
    norm: Normalizer

    @property
    def k(self) -> int:
        return self.target.widths[-1]

    def score_batch(self, patches) -> np.ndarray:
        x = _net_input(self.norm, self.target, patches)
        d = nn.forward(self.predictor, x) - nn.forward(self.target, x)
        return np.sum(d * d, axis=1)


def train_rnd(ds: Dataset, cfg: ExperimentConfig = DEFAULT, k: int | None = None,
              norm: Normalizer | None = None, predictor_from_target: bool = False,
              seed: int = 0) -> RndPair:
    """Fit a predictor to a frozen random target on the dataset's patches.

    ``predictor_from_target`` starts the predictor as an exact copy (test hook).
    """
    k = cfg.rnd_k if k is None else k
    if k < 1:
        raise ValueError("embedding dimension k must be >= 1")
    X = ds.patches().astype(np.float64)
    norm = norm or Normalizer.fit(X)
    tc, rng = _head(cfg.rnd_train, 4, seed)
    _, target_rng = _head(cfg.rnd_train, 3, seed)
    widths = _widths(cfg, X[0].size, k)
    target = nn.Mlp.init(widths, _acts(cfg, "identity"), target_rng)
    if predictor_from_target:
        return RndPair(target, target.copy(), norm)
    frozen = nn.to_bytes(target)
    predictor = nn.Mlp.init(widths, _acts(cfg, "identity"), rng)
    nn.train(predictor, norm(X), lambda xb: nn.forward(target, xb), tc, augment=flip_batch)
    if nn.to_bytes(target) != frozen:
        raise RuntimeError("RND target parameters changed during training")
    return RndPair(target, predictor, norm)


def uncertainty_rnd(pair: RndPair, patch) -> float:
    return float(pair.score_batch(patch)[0])


# --- bundle ------------------------------------------------------------------------
#
# magic(4) version(u16) C(u16) config-digest(16 ascii) norm mean/std (2C f64)
# label mean/std, ee scale (3 f64), then mass, ee, rnd target, rnd predictor nets.

BUNDLE_MAGIC = b"MGBD"
BUNDLE_VERSION = 1


@dataclass
class ModelBundle:
    mass: MassEstimator
    ee: ErrorEstimator
    rnd: RndPair
    config_digest: str = ""


def train_bundle(ds: Dataset, cfg: ExperimentConfig = DEFAULT, seed: int = 0) -> ModelBundle:
    mass = train_mass(ds, cfg, seed=seed)
    ee = train_ee(ds, mass, cfg, seed=seed)
    rnd = train_rnd(ds, cfg, norm=mass.norm, seed=seed)
    return ModelBundle(mass, ee, rnd, cfg.digest())


def bundle_to_bytes(b: ModelBundle) -> bytes:
    c = len(b.mass.norm.mean)
    digest = b.config_digest.encode().ljust(16, b"\0")[:16]
    return b"".join([
        struct.pack("<4sHH16s", BUNDLE_MAGIC, BUNDLE_VERSION, c, digest),
        b.mass.norm.mean.astype("<f8").tobytes(),
        b.mass.norm.std.astype("<f8").tobytes(),
        struct.pack("<3d", b.mass.label_mean, b.mass.label_std, b.ee.scale_g),
        nn.to_bytes(b.mass.net),
        nn.to_bytes(b.ee.net),
        nn.to_bytes(b.rnd.target),
        nn.to_bytes(b.rnd.predictor),
    ])


def bundle_from_bytes(buf: bytes) -> ModelBundle:
    try:
        magic, version, c, digest = struct.unpack_from("<4sHH16s", buf, 0)
    except struct.error:
        raise ModelFormatError("bundle header truncated") from None
    if magic != BUNDLE_MAGIC or version != BUNDLE_VERSION:
        raise ModelFormatError(f"bad bundle header {magic!r} v{version}")
    off = 24
    if len(buf) < off + 16 * c + 24:
        raise ModelFormatError("bundle truncated")
    mean = np.frombuffer(buf, "<f8", c, off).astype(np.float64)
    std = np.frombuffer(buf, "<f8", c, off + 8 * c).astype(np.float64)
    off += 16 * c
    label_mean, label_std, scale = struct.unpack_from("<3d", buf, off)
    off += 24
    nets = []
    for _ in range(4):
        net, off = nn.from_bytes(buf, off)
        nets.append(net)
    if off != len(buf):
        raise ModelFormatError("trailing bytes in bundle")
    norm = Normalizer(mean, std)
    return ModelBundle(
        MassEstimator(nets[0], norm, label_mean, label_std),
        ErrorEstimator(nets[1], norm, scale),
        RndPair(nets[2], nets[3], norm),
        digest.rstrip(b"\0").decode(),
    )


def save_bundle(b: ModelBundle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(bundle_to_bytes(b))


def load_bundle(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return bundle_from_bytes(fh.read())
