"""Material presets and experiment configuration.

All tunable constants live here. The plain-text form is one ``key = value``
per line; material keys are prefixed with the material name
(``coffee.density_scale = 3.67``).
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class MaterialParams:
    name: str
    density_scale: float  # g per cm^3-equivalent
    noise_cv: float
    repose_slope: float  # mm per cell
    capacity_g: float
    breakage_prob: float = 0.0
    compress_factor: float = 1.0

    def __post_init__(self):
        if self.density_scale <= 0:
            raise ConfigError(f"{self.name}: density_scale must be > 0")
        if self.noise_cv < 0:
            raise ConfigError(f"{self.name}: noise_cv must be >= 0")
        if self.repose_slope <= 0:
            raise ConfigError(f"{self.name}: repose_slope must be > 0")
        if self.capacity_g <= 0:
            raise ConfigError(f"{self.name}: capacity_g must be > 0")
        if not 0.0 <= self.breakage_prob <= 1.0:
            raise ConfigError(f"{self.name}: breakage_prob must be in [0, 1]")
        if not 0.0 < self.compress_factor <= 1.0:
            raise ConfigError(f"{self.name}: compress_factor must be in (0, 1]")


# Calibrated by scripts/calibrate_presets.py: coffee ~22 +/- 5 g, rice ~60 +/- 15 g.
PRESETS: dict[str, MaterialParams] = {
    "coffee": MaterialParams(
        name="coffee", density_scale=0.754, noise_cv=0.04, repose_slope=4.0,
        capacity_g=45.0,
    ),
    "rice": MaterialParams(
        name="rice", density_scale=2.09, noise_cv=0.08, repose_slope=4.5,
        capacity_g=120.0,
    ),
    "oatmeal": MaterialParams(
        name="oatmeal", density_scale=1.12, noise_cv=0.06, repose_slope=4.5,
        capacity_g=45.0, compress_factor=0.6,
    ),
    "peanut": MaterialParams(
        name="peanut", density_scale=1.05, noise_cv=0.06, repose_slope=3.5,
        capacity_g=60.0, breakage_prob=0.15,
    ),
}


def get_material(name: str) -> MaterialParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown material {name!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    optimizer: str = "adam"
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


def _head_defaults() -> TrainConfig:
    return TrainConfig(lr=1e-3, epochs=60)


@dataclass(frozen=True)
class ExperimentConfig:
    # geometry (5 mm cells; 120 x 75 cells ~ 603 x 377 mm tray)
    tray_cols: int = 120
    tray_rows: int = 75
    tray_depth_mm: float = 145.0
    cell_size_mm: float = 5.0
    patch_cells: int = 30
    gripper_cols: int = 10
    gripper_rows: int = 6
    insertion_depth_mm: float = 20.0
    scale_resolution_g: float = 1.0
    band_g: float = 0.5
    grid_nx: int = 45
    grid_ny: int = 20
    tolerances: tuple[float, ...] = (0.05, 0.10)
    output_dim: int = 1

    # two-tray process
    fill_height_mm: float = 40.0  # mean food height per tray
    initial_split: float = 0.55  # share of the food starting in the pick tray
    switch_fraction: float = 0.45  # switch when pick tray < this share of total
    switch_eps_g: float = 0.0  # > 0 overrides switch_fraction
    surface_roughness_mm: float = 6.0
    surface_corr_cells: float = 3.0
    place_sigma_cells: float = 1.5
    settle_max_iter: int = 5000

    # models
    hidden: tuple[int, ...] = (128, 64)
    rnd_k: int = 16
    mass_train: TrainConfig = field(default_factory=lambda: _head_defaults())
    ee_train: TrainConfig = field(default_factory=lambda: _head_defaults())
    rnd_train: TrainConfig = field(default_factory=lambda: _head_defaults())

    # campaign defaults
    sizes: tuple[int, ...] = (50, 100, 200, 500, 1000)
    attempts: int = 50
    eval_warmup: int = 100  # process steps before the first evaluation grasp
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    # frozen acceptance thresholds (from pilot runs)
    rnd_ood_ratio: float = 1.2
    trend_margin: float = 0.03

    def __post_init__(self):
        if self.patch_cells < 2 or self.patch_cells % 2:
            raise ConfigError("patch_cells must be an even integer >= 2")
        if min(self.tray_rows, self.tray_cols) < self.patch_cells:
            raise ConfigError("tray smaller than one patch")
        if self.band_g <= 0:
            raise ConfigError("band_g must be > 0")
        if self.scale_resolution_g <= 0:
            raise ConfigError("scale_resolution_g must be > 0")
        if self.output_dim != 1:
            raise ConfigError("only scalar mass regression (output_dim = 1) is supported")
        if not 0 < self.switch_fraction < self.initial_split <= 1:
            raise ConfigError("need 0 < switch_fraction < initial_split <= 1")
        if any(t <= 0 for t in self.tolerances):
            raise ConfigError("tolerances must be > 0")

    @property
    def cell_area_mm2(self) -> float:
        return self.cell_size_mm ** 2

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


# --- key = value text form -------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ExperimentConfig, materials: dict[str, MaterialParams] | None = None) -> str:
    lines = ["# experiment"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, TrainConfig):
            for tf in fields(v):
                lines.append(f"{f.name}.{tf.name} = {_fmt(getattr(v, tf.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(v)}")
    for mat in (materials if materials is not None else PRESETS).values():
        lines.append(f"# material {mat.name}")
        for mf in fields(mat):
            if mf.name != "name":
                lines.append(f"{mat.name}.{mf.name} = {_fmt(getattr(mat, mf.name))}")
    return "\n".join(lines) + "\n"


def _coerce(raw: str, proto):
    try:
        if isinstance(proto, tuple):
            elem = type(proto[0]) if proto else float
            return tuple(elem(x.strip()) for x in raw.split(",") if x.strip())
        if isinstance(proto, bool):
            return raw.lower() in ("1", "true", "yes")
        return type(proto)(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {type(proto).__name__}") from None


def parse_config(text: str) -> tuple[ExperimentConfig, dict[str, MaterialParams]]:
    """Parse the key = value form; unknown keys are errors."""
    base = ExperimentConfig()
    top: dict = {}
    train: dict[str, dict] = {}
    mats: dict[str, dict] = {name: dataclasses.asdict(m) for name, m in PRESETS.items()}
    exp_names = {f.name for f in fields(base)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        head, _, tail = key.partition(".")
        if not tail:
            if head not in exp_names:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            top[head] = _coerce(raw, getattr(base, head))
        elif head in exp_names and isinstance(getattr(base, head), TrainConfig):
            proto = getattr(getattr(base, head), tail, None)
            if proto is None:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            train.setdefault(head, {})[tail] = _coerce(raw, proto)
        else:
            entry = mats.setdefault(head, {"name": head})
            proto = dataclasses.asdict(PRESETS["coffee"]).get(tail)
            if proto is None or tail == "name":
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            entry[tail] = _coerce(raw, proto)
    for head, kw in train.items():
        top[head] = dataclasses.replace(getattr(base, head), **kw)
    try:
        cfg = dataclasses.replace(base, **top)
        materials = {name: MaterialParams(**kw) for name, kw in mats.items()}
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, materials


def load_config(path) -> tuple[ExperimentConfig, dict[str, MaterialParams]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
