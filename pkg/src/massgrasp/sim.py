"""Granular heightfield simulator and the two-tray collection loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter

from .config import ExperimentConfig, MaterialParams
from .core import Dataset, GraspRecord, Patch, Tray, quantize, total_mass_g
from .errors import CapacityError, ConfigError, EmptySurfaceError, OutOfBoundsError
from .patching import crop_patch

log = logging.getLogger(__name__)

DEFAULT = ExperimentConfig()


def _g_per_mm3(material: MaterialParams) -> float:
    return material.density_scale / 1000.0


def shade(heights: np.ndarray) -> np.ndarray:
    """Surface intensity from the height gradient, darkening where the floor shows."""
    gy, gx = np.gradient(heights)
    lit = 0.5 + 0.4 * np.tanh(-(gx + gy) / 4.0)
    floor = np.exp(-heights / 2.0)
    return np.clip((1.0 - floor) * lit + floor * 0.05, 0.0, 1.0)


def refresh_intensity(tray: Tray) -> None:
    tray.intensity = shade(tray.heights)


# --- relaxation --------------------------------------------------------------

def count_violations(heights: np.ndarray, slope: float) -> int:
    """Exhaustive scan over 4-neighbour pairs."""
    dx = np.abs(np.diff(heights, axis=1))
    dy = np.abs(np.diff(heights, axis=0))
    return int((dx > slope).sum() + (dy > slope).sum())


def settle(tray: Tray, max_iter: int = 5000, rate: float = 0.5) -> int:
    """Relax until no neighbouring pair differs by more than the repose slope.

    Material flows downhill between 4-neighbours; each violating pair is
    pushed toward 99% of the slope so the loop terminates. Transfers are
    pairwise so the total volume is conserved. Returns the iteration count.
    """
    h = tray.heights
    s = tray.material.repose_slope
    rows, cols = h.shape
    it = 0
    while it < max_iter:
        box = _violation_box(h, s, pad=6)
        if box is None:
            break
        it += _relax(h[box], s, 0.99 * s, rate, max_iter - it)
    else:
        log.warning("settle hit the %d-iteration cap with %d violations",
                    max_iter, count_violations(h, s))
    np.maximum(h, 0.0, out=h)
    refresh_intensity(tray)
    return it


def _violation_box(h: np.ndarray, s: float, pad: int):
    vx = np.abs(np.diff(h, axis=1)) > s
    vy = np.abs(np.diff(h, axis=0)) > s
    r = np.flatnonzero(vx.any(axis=1) | np.pad(vy.any(axis=1), (0, 1)) | np.pad(vy.any(axis=1), (1, 0)))
    c = np.flatnonzero(vy.any(axis=0) | np.pad(vx.any(axis=0), (0, 1)) | np.pad(vx.any(axis=0), (1, 0)))
    if r.size == 0:
        return None
    rows, cols = h.shape
    return (slice(max(r[0] - pad, 0), min(r[-1] + pad + 1, rows)),
            slice(max(c[0] - pad, 0), min(c[-1] + pad + 1, cols)))


@njit(cache=True)
def _relax(h, s, goal, rate, budget):
    """Pairwise downhill transfers on a view until it is locally stable.

    Jacobi sweeps: all flows of a sweep are computed from the same state,
    then applied x-pairs first, each cell gaining and losing in a fixed order.
    """
    rows, cols = h.shape
    fx = np.zeros((rows, max(cols - 1, 0)))
    fy = np.zeros((max(rows - 1, 0), cols))
    half = rate / 2
    for it in range(1, budget + 1):
        active = False
        for r in range(rows):
            for c in range(cols - 1):
                d = h[r, c + 1] - h[r, c]
                if abs(d) > s:
                    fx[r, c] = np.sign(d) * (abs(d) - goal) * half
                    active = True
                else:
                    fx[r, c] = 0.0
        for r in range(rows - 1):
            for c in range(cols):
                d = h[r + 1, c] - h[r, c]
                if abs(d) > s:
                    fy[r, c] = np.sign(d) * (abs(d) - goal) * half
                    active = True
                else:
                    fy[r, c] = 0.0
        if not active:
            return it - 1
        # positive flow moves material from the higher cell toward the lower one
        for r in range(rows):
            for c in range(cols - 1):
                h[r, c + 1] -= fx[r, c]
            for c in range(cols - 1):
                h[r, c] += fx[r, c]
        for r in range(rows - 1):
            for c in range(cols):
                h[r + 1, c] -= fy[r, c]
            for c in range(cols):
                h[r, c] += fy[r, c]
    return budget


# --- trays -----------------------------------------------------------------

def init_tray(material: MaterialParams, fill_mass_g: float, seed: int,
              config: ExperimentConfig = DEFAULT) -> Tray:
    """Random repose-stable surface holding fill_mass_g grams."""
    if fill_mass_g < 0:
        raise ValueError("fill_mass_g must be >= 0")
    shape = (config.tray_rows, config.tray_cols)
    area = config.cell_area_mm2
    rho = _g_per_mm3(material)
    cap = rho * config.tray_depth_mm * area * shape[0] * shape[1]
    if fill_mass_g > cap:
        raise CapacityError(f"{fill_mass_g:.0f} g exceeds tray capacity {cap:.0f} g")
    if fill_mass_g == 0:
        z = np.zeros(shape)
        return Tray(z, shade(z), config.cell_size_mm, material)

    rng = np.random.default_rng(seed)
    noise = gaussian_filter(rng.standard_normal(shape), config.surface_corr_cells, mode="wrap")
    noise *= config.surface_roughness_mm / noise.std()
    target = fill_mass_g / (rho * area)  # required sum of heights

    lo, hi = -noise.max(), target / noise.size - noise.min() + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(mid + noise, 0.0).sum() < target:
            lo = mid
        else:
            hi = mid
    h = np.maximum(0.5 * (lo + hi) + noise, 0.0)
    h *= target / h.sum()
    tray = Tray(h, shade(h), config.cell_size_mm, material)
    settle(tray, config.settle_max_iter)
    return tray


@dataclass
class GraspOutcome:
    mass_g: float
    spilled_g: float
    footprint: frozenset  # of (x, y) cells


def footprint_weights(cols: int, rows: int) -> np.ndarray:
    """Coverage weights of a cols x rows gripper centred on a cell centre.

    Even extents cover the outermost cells by half, which keeps the footprint
    symmetric under row/column flips.
    """
    def axis(n):
        if n % 2:
            return np.ones(n)
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        return w
    return np.outer(axis(rows), axis(cols))


def grasp_at(tray: Tray, x: int, y: int, rng, config: ExperimentConfig = DEFAULT) -> GraspOutcome:
    """Insert the gripper insertion_depth_mm below the local surface and close it.

    The tray loses exactly the grasped mass plus any breakage spill.
    """
    rows, cols = tray.shape
    half = config.patch_cells // 2
    if not (half <= y <= rows - half and half <= x <= cols - half):
        raise OutOfBoundsError(f"grasp point ({x}, {y}) violates the {half}-cell margin")
    h = tray.heights
    h0 = h[y, x]
    if h0 <= 0:
        raise EmptySurfaceError(f"no material at ({x}, {y})")
    mat = tray.material
    w = footprint_weights(config.gripper_cols, config.gripper_rows)
    ry, rx = w.shape[0] // 2, w.shape[1] // 2
    win = (slice(y - ry, y + ry + 1), slice(x - rx, x + rx + 1))
    local = h[win]

    z = max(h0 - config.insertion_depth_mm, 0.0)
    excess = np.maximum(local - z, 0.0)
    rho_area = _g_per_mm3(mat) * tray.cell_size_mm ** 2
    m_det = rho_area * float((w * excess).sum())
    m0 = min(m_det * mat.compress_factor, mat.capacity_g)

    sigma2 = np.log1p(mat.noise_cv ** 2)
    eta = float(np.exp(-sigma2 / 2 + np.sqrt(sigma2) * rng.standard_normal()))
    breaks = rng.random() < mat.breakage_prob
    frac = rng.uniform(0.0, 0.5)

    m_total = m0 * eta
    ratio = m_total / m_det if m_det > 0 else 0.0
    removed = w * np.minimum(local, ratio * excess)
    m_total = rho_area * float(removed.sum())
    local -= removed  # view into tray.heights
    np.maximum(local, 0.0, out=local)

    spilled = frac * m_total if breaks else 0.0
    refresh_intensity(tray)
    cells = frozenset(
        (x - rx + j, y - ry + i) for i in range(w.shape[0]) for j in range(w.shape[1])
    )
    return GraspOutcome(m_total - spilled, spilled, cells)


def place_at(tray: Tray, x: int, y: int, mass_g: float, rng,
             config: ExperimentConfig = DEFAULT) -> None:
    """Drop mass_g as a Gaussian mound centred near (x, y), then settle."""
    rows, cols = tray.shape
    if not (0 <= x < cols and 0 <= y < rows):
        raise OutOfBoundsError(f"place point ({x}, {y}) outside tray")
    if mass_g < 0:
        raise ValueError("mass_g must be >= 0")
    if mass_g == 0:
        return
    cx = x + rng.uniform(-0.5, 0.5)
    cy = y + rng.uniform(-0.5, 0.5)
    sig = config.place_sigma_cells
    gx = np.exp(-0.5 * ((np.arange(cols) - cx) / sig) ** 2)
    gy = np.exp(-0.5 * ((np.arange(rows) - cy) / sig) ** 2)
    prof = np.outer(gy, gx)
    vol_mm3 = mass_g / _g_per_mm3(tray.material)
    tray.heights += prof * (vol_mm3 / tray.cell_size_mm ** 2 / prof.sum())
    settle(tray, config.settle_max_iter)


# --- two-tray process ------------------------------------------------------------

@dataclass
class CollectionState:
    """Pick from one tray, drop into the other; switch when the pick tray runs low."""

    config: ExperimentConfig
    material: MaterialParams
    tray_a: Tray
    tray_b: Tray
    rng: np.random.Generator
    eps_g: float
    pick_index: int = 0
    iteration: int = 0
    spilled_g: float = 0.0
    initial_total_g: float = 0.0
    history: list = field(default_factory=list)

    @classmethod
    def start(cls, config: ExperimentConfig, material: MaterialParams, seed: int) -> "CollectionState":
        rng = np.random.default_rng(seed)
        cells = config.tray_rows * config.tray_cols
        total = 2 * _g_per_mm3(material) * config.fill_height_mm * config.cell_area_mm2 * cells
        s_a, s_b = (int(v) for v in rng.integers(0, 2**63, size=2))
        a = init_tray(material, config.initial_split * total, s_a, config)
        b = init_tray(material, (1 - config.initial_split) * total, s_b, config)
        eps = config.switch_eps_g if config.switch_eps_g > 0 else config.switch_fraction * total
        heavier = max(total_mass_g(a), total_mass_g(b))
        if eps >= heavier:
            raise ConfigError(f"switch threshold {eps:.1f} g >= initial pick-tray fill {heavier:.1f} g")
        st = cls(config, material, a, b, rng, eps,
                 pick_index=0 if total_mass_g(a) >= total_mass_g(b) else 1)
        st.initial_total_g = total_mass_g(a) + total_mass_g(b)
        return st

    @property
    def pick(self) -> Tray:
        return (self.tray_a, self.tray_b)[self.pick_index]

    @property
    def place(self) -> Tray:
        return (self.tray_a, self.tray_b)[1 - self.pick_index]

    def total_g(self) -> float:
        return total_mass_g(self.tray_a) + total_mass_g(self.tray_b) + self.spilled_g

    def maybe_switch(self) -> bool:
        if total_mass_g(self.pick) < self.eps_g:
            self.pick_index = 1 - self.pick_index
            return True
        return False

    def random_point(self, tray: Tray, need_material: bool = True, tries: int = 1000) -> tuple[int, int]:
        half = self.config.patch_cells // 2
        rows, cols = tray.shape
        for _ in range(tries):
            x = int(self.rng.integers(half, cols - half + 1))
            y = int(self.rng.integers(half, rows - half + 1))
            if not need_material or tray.heights[y, x] > 0:
                return x, y
        raise EmptySurfaceError("no material found in the pick region")

    def step(self) -> tuple[Patch, GraspOutcome]:
        """One iteration: maybe switch, crop at a random point, grasp, place."""
        switched = self.maybe_switch()
        pick = self.pick
        before = total_mass_g(pick)
        x, y = self.random_point(pick)
        patch = crop_patch(pick, x, y, self.config.patch_cells)
        out = grasp_at(pick, x, y, self.rng, self.config)
        settle(pick, self.config.settle_max_iter)
        self.spilled_g += out.spilled_g
        px, py = self.random_point(self.place, need_material=False)
        place_at(self.place, px, py, out.mass_g, self.rng, self.config)
        self.iteration += 1
        self.history.append((self.iteration, self.pick_index, switched, before, total_mass_g(pick)))
        return patch, out

    def record(self, patch: Patch, out: GraspOutcome) -> GraspRecord:
        ch = Patch(patch.channels.astype(np.float32), patch.center_xy)
        return GraspRecord(ch, quantize(out.mass_g, self.config.scale_resolution_g))


def collect(config: ExperimentConfig, material: MaterialParams, n_iters: int, seed: int,
            state: CollectionState | None = None) -> Dataset:
    """Run the autonomous collection loop for n_iters grasps."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    st = state if state is not None else CollectionState.start(config, material, seed)
    records = [st.record(*st.step()) for _ in range(n_iters)]
    return Dataset(records, material.name, seed)
