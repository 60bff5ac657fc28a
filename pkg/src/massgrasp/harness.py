"""Evaluation campaigns, success tables and reports."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, MaterialParams, get_material
from .core import quantize
from .errors import EmptySurfaceError
from .estimators import ModelBundle, train_bundle
from .patching import crop_many
from .selection import POLICIES, CandidateEvaluation, SelectionPolicy, candidate_grid, select
from .sim import CollectionState, collect, grasp_at

log = logging.getLogger(__name__)

CSV_FIELDS = ["material", "size", "policy", "target_g", "tol", "attempts",
              "successes", "rate", "mean_abs_err_g"]


def is_success(grasped_g: float, target_g: float, tol: float) -> bool:
    """|grasped - target| / target <= tol, evaluated exactly."""
    if target_g <= 0:
        raise ValueError("target_g must be > 0")
    return abs(grasped_g - target_g) / target_g <= tol


@dataclass
class EvalCampaign:
    material: str
    sizes: tuple[int, ...] = (50, 100, 200, 500, 1000)
    policies: tuple[str, ...] = POLICIES
    targets_g: tuple[float, ...] | None = None  # None: mean -/+ std of 1000 labels
    attempts: int = 50
    small_size_attempts: int | None = None  # used when size <= 100
    tolerances: tuple[float, ...] = (0.05, 0.10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.targets_g is not None and any(t <= 0 for t in self.targets_g):
            raise ValueError("targets must be > 0")

    @classmethod
    def default(cls, material: str, **kw) -> "EvalCampaign":
        if material == "rice":
            kw.setdefault("small_size_attempts", 100)
        return cls(material, **kw)

    def attempts_for(self, size: int) -> int:
        if self.small_size_attempts and size <= 100:
            return self.small_size_attempts
        return self.attempts


@dataclass
class Cell:
    attempts: int
    successes: int
    mean_abs_err_g: float

    @property
    def rate(self) -> float:
        return self.successes / self.attempts


@dataclass
class SuccessTable:
    material: str
    cells: dict = field(default_factory=dict)  # (size, policy, target_g, tol) -> Cell

    def rate(self, size, policy, target_g, tol) -> float:
        return self.cells[(size, policy, target_g, tol)].rate

    def keys(self, **match):
        names = ("size", "policy", "target_g", "tol")
        return [k for k in self.cells
                if all(k[names.index(n)] == v for n, v in match.items())]

    def mean_rate(self, policy, tol, size=None) -> float:
        """Attempt-weighted success rate over targets (and sizes unless given)."""
        ks = [k for k in self.keys(policy=policy, tol=tol) if size is None or k[0] == size]
        a = sum(self.cells[k].attempts for k in ks)
        return sum(self.cells[k].successes for k in ks) / a

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for (size, policy, target, tol), c in sorted(self.cells.items(), key=_order):
                w.writerow([self.material, size, policy, repr(float(target)), repr(float(tol)),
                            c.attempts, c.successes, repr(c.rate), repr(float(c.mean_abs_err_g))])

    @classmethod
    def from_csv(cls, path) -> "SuccessTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        table = cls(rows[0]["material"])
        for r in rows:
            key = (int(r["size"]), r["policy"], float(r["target_g"]), float(r["tol"]))
            table.cells[key] = Cell(int(r["attempts"]), int(r["successes"]), float(r["mean_abs_err_g"]))
        return table


def _order(item):
    (size, policy, target, tol), _ = item
    pi = POLICIES.index(policy) if policy in POLICIES else len(POLICIES)
    return size, pi, target, tol


def tabulate(material: str, grasps: dict, tolerances) -> SuccessTable:
    """grasps maps (size, policy, target_g) -> list of grasped masses."""
    table = SuccessTable(material)
    for (size, policy, target), masses in grasps.items():
        masses = np.asarray(masses, dtype=float)
        err = float(np.mean(np.abs(masses - target)))
        for tol in tolerances:
            ok = sum(is_success(m, target, tol) for m in masses)
            table.cells[(size, policy, float(target), float(tol))] = Cell(len(masses), int(ok), err)
    return table


def _tag_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def evaluate_bundle(bundle: ModelBundle, config: ExperimentConfig, material: MaterialParams,
                    targets, attempts: int, policies=POLICIES, seed: int = 0) -> dict:
    """Grasp every target ``attempts`` times with each policy.

    All policies see the same tray state and the same grasp-noise draw per
    attempt (each grasps a copy of the pick tray); the process then advances
    by one random collection step. Returns (policy, target) -> masses.
    """
    state = CollectionState.start(config, material, _tag_seed(seed, 7))
    for _ in range(config.eval_warmup):
        state.step()
    points = candidate_grid(state.pick, config.grid_nx, config.grid_ny, config.patch_cells)
    out = defaultdict(list)
    for ti, target in enumerate(targets):
        for a in range(attempts):
            tray = state.pick
            patches = crop_many(tray, points, config.patch_cells)
            pred = bundle.mass.predict_batch(patches)
            scores = {"ee": bundle.ee.score_batch(patches), "rnd": bundle.rnd.score_batch(patches),
                      "random": None, "baseline": None}
            grasp_seed = _tag_seed(seed, 11, ti, a)
            pick_rng = np.random.default_rng(_tag_seed(seed, 13, ti, a))
            for tag in policies:
                unc = scores[tag]
                evals = [CandidateEvaluation(x, y, float(pred[i]), None if unc is None else float(unc[i]))
                         for i, (x, y) in enumerate(points)]
                choice = select(SelectionPolicy(tag, config.band_g), evals, target, pick_rng)
                try:
                    got = grasp_at(tray.copy(), choice.x, choice.y,
                                   np.random.default_rng(grasp_seed), config).mass_g
                except EmptySurfaceError:
                    got = 0.0
                out[(tag, target)].append(quantize(got, config.scale_resolution_g))
            state.step()
    return out


def default_targets(masses, resolution_g: float = 1.0) -> tuple[float, float, float]:
    """(mean - std, mean, mean + std), rounded to the scale resolution."""
    m = np.asarray(masses, dtype=float)
    mu, sd = m.mean(), m.std(ddof=1)
    return tuple(quantize(v, resolution_g) for v in (mu - sd, mu, mu + sd))


def run_campaign(campaign: EvalCampaign, config: ExperimentConfig,
                 materials: dict[str, MaterialParams] | None = None,
                 flush_path=None) -> SuccessTable:
    """Collect, train and evaluate every (size, seed) cell of the campaign.

    Targets default to mean -/+ std of the first seed's 1000 collected labels.
    On failure the grasps gathered so far are written to ``flush_path``.
    """
    material = (materials or {}).get(campaign.material) or get_material(campaign.material)
    grasps: dict = defaultdict(list)
    targets = campaign.targets_g
    n_collect = max(campaign.sizes) if targets is not None else max(max(campaign.sizes), 1000)
    try:
        for seed in campaign.seeds:
            ds = collect(config, material, n_collect, _tag_seed(seed, 1))
            if targets is None:
                targets = default_targets(ds.masses()[:1000], config.scale_resolution_g)
                log.info("targets %s", targets)
            for size in campaign.sizes:
                bundle = train_bundle(ds.subset(size), config, seed=seed)
                res = evaluate_bundle(bundle, config, material, targets,
                                      campaign.attempts_for(size), campaign.policies,
                                      seed=_tag_seed(seed, size, 2))
                for (tag, target), masses in res.items():
                    grasps[(size, tag, target)].extend(masses)
                log.info("seed %d size %d done", seed, size)
    except BaseException:
        if flush_path is not None and grasps:
            tabulate(material.name, grasps, campaign.tolerances).to_csv(flush_path)
        raise
    return tabulate(material.name, grasps, campaign.tolerances)


# --- reporting -----------------------------------------------------------------

def render(table: SuccessTable) -> str:
    """Policies as rows, target x tolerance as columns; '*' marks EE/RND >= Baseline."""
    targets = sorted({k[2] for k in table.cells})
    tols = sorted({k[3] for k in table.cells})
    cols = [(t, tol) for t in targets for tol in tols]
    head = f"{'size':>5} {'policy':<9}" + "".join(f"{f'{t:g}g@{tol:.0%}':>12}" for t, tol in cols)
    lines = [f"material: {table.material}", head, "-" * len(head)]
    for size in sorted({k[0] for k in table.cells}):
        present = {k[1] for k in table.cells if k[0] == size}
        for policy in [p for p in POLICIES if p in present] + sorted(present - set(POLICIES)):
            cells = []
            for t, tol in cols:
                c = table.cells.get((size, policy, t, tol))
                if c is None:
                    cells.append(f"{'-':>12}")
                    continue
                base = table.cells.get((size, "baseline", t, tol))
                mark = "*" if policy in ("ee", "rnd") and base is not None and c.rate >= base.rate else " "
                cells.append(f"{c.rate:>11.3f}{mark}")
            lines.append(f"{size:>5} {policy:<9}" + "".join(cells))
    return "\n".join(lines) + "\n"


def report(table: SuccessTable, path) -> tuple[Path, Path]:
    """Write ``path`` as CSV and a sibling .txt aligned table."""
    if not table.cells:
        raise ValueError("empty table")
    path = Path(path)
    table.to_csv(path)
    txt = path.with_suffix(".txt")
    txt.write_text(render(table))
    return path, txt
