"""Candidate grids and the four grasp-point selection policies."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Tray
from .errors import GridFitError
from .patching import crop_many

POLICIES = ("random", "baseline", "ee", "rnd")
CHUNK = 128


@dataclass(frozen=True)
class CandidateEvaluation:
    x: int
    y: int
    predicted_mass_g: float
    uncertainty: float | None = None


@dataclass(frozen=True)
class SelectionPolicy:
    tag: str
    band_g: float = 0.5

    def __post_init__(self):
        if self.tag not in POLICIES:
            raise ValueError(f"unknown policy {self.tag!r}")
        if self.band_g <= 0:
            raise ValueError("band_g must be > 0")


def _axis(n: int, lo: int, hi: int) -> np.ndarray:
    span = hi - lo
    if n == 1:
        return np.array([(lo + hi) // 2])
    step = span // (n - 1)
    if step < 1:
        raise GridFitError(f"{n} points do not fit in {span + 1} cells")
    return lo + (span - step * (n - 1)) // 2 + step * np.arange(n)


def candidate_grid(tray: Tray | tuple[int, int], nx: int = 45, ny: int = 20,
                   patch_cells: int = 30) -> list[tuple[int, int]]:
    """Equidistant nx x ny lattice inside the patch margin, ordered by (y, x)."""
    if nx < 1 or ny < 1:
        raise GridFitError("nx and ny must be >= 1")
    rows, cols = tray.shape if isinstance(tray, Tray) else tray
    half = patch_cells // 2
    if rows - 2 * half < 0 or cols - 2 * half < 0:
        raise GridFitError("tray smaller than one patch")
    xs = _axis(nx, half, cols - half)
    ys = _axis(ny, half, rows - half)
    return [(int(x), int(y)) for y in ys for x in xs]


def _score_chunk(patches, mass_est, unc_source):
    pred = mass_est.predict_batch(patches)
    unc = unc_source.score_batch(patches) if unc_source is not None else None
    return pred, unc


def evaluate_candidates(tray: Tray, points, mass_est, unc_source=None,
                        patch_cells: int = 30, workers: int = 1) -> list[CandidateEvaluation]:
    """Crop, predict mass and (optionally) score uncertainty at every point.

    ``unc_source`` is any object with ``score_batch(patches)``. Points are
    scored in canonical (y, x) order and fixed-size chunks, so permuted inputs
    and threaded runs reproduce the serial values bit for bit.
    """
    points = [(int(x), int(y)) for x, y in points]
    if not points:
        return []
    order = sorted(set(points), key=lambda p: (p[1], p[0]))
    chunks = [order[i:i + CHUNK] for i in range(0, len(order), CHUNK)]

    def run(chunk):
        return _score_chunk(crop_many(tray, chunk, patch_cells), mass_est, unc_source)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    scored = {}
    for chunk, (pred, unc) in zip(chunks, results):
        for i, (x, y) in enumerate(chunk):
            u = None if unc is None else float(unc[i])
            scored[(x, y)] = CandidateEvaluation(x, y, float(pred[i]), u)
    return [scored[p] for p in points]


def select(policy: SelectionPolicy, evals, target_g: float, rng=None) -> CandidateEvaluation:
    """Pick one candidate.

    random: uniform over all candidates.
    baseline: closest predicted mass; ties go to the lowest (y, x).
    ee / rnd: lowest uncertainty among candidates within band_g of the
    target (ties by (y, x)); with an empty band, behave as baseline.
    """
    evals = list(evals)
    if not evals:
        raise ValueError("no candidates to select from")
    if policy.tag == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        return evals[int(rng.integers(len(evals)))]

    def closeness(e):
        return (abs(e.predicted_mass_g - target_g), e.y, e.x)

    if policy.tag == "baseline":
        return min(evals, key=closeness)
    band = [e for e in evals if abs(e.predicted_mass_g - target_g) <= policy.band_g]
    if not band:
        return min(evals, key=closeness)
    if any(e.uncertainty is None for e in band):
        raise ValueError(f"policy {policy.tag!r} needs uncertainty scores")
    return min(band, key=lambda e: (e.uncertainty, e.y, e.x))
