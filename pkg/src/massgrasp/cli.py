"""Command line driver: collect, train, eval, sweep, dump-config, report.

Exit codes: 0 ok, 2 config, 3 data, 4 model, 5 runtime.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig, dump_config, get_material, load_config
from .core import load_dataset, save_dataset
from .errors import ConfigError, DataError, MassGraspError
from .estimators import load_bundle, save_bundle, train_bundle
from .harness import EvalCampaign, SuccessTable, evaluate_bundle, render, report, run_campaign, tabulate
from .selection import POLICIES
from .sim import collect


def _setup(args):
    if args.config:
        cfg, materials = load_config(args.config)
    else:
        cfg, materials = ExperimentConfig(), None
    return cfg, materials


def _material(args, materials):
    if materials is not None:
        if args.material not in materials:
            raise ConfigError(f"unknown material {args.material!r}")
        return materials[args.material]
    return get_material(args.material)


def cmd_collect(args):
    cfg, materials = _setup(args)
    ds = collect(cfg, _material(args, materials), args.size, args.seed)
    save_dataset(ds, args.out)
    m = ds.masses()
    print(f"{len(ds)} grasps of {ds.material_name}: mean {m.mean():.2f} g, std {m.std(ddof=1) if len(m) > 1 else 0:.2f} g -> {args.out}")


def cmd_train(args):
    cfg, _ = _setup(args)
    ds = load_dataset(args.data)
    if args.size:
        ds = ds.subset(args.size)
    bundle = train_bundle(ds, cfg, seed=args.seed)
    save_bundle(bundle, args.out)
    print(f"trained on {len(ds)} records (train mse {bundle.mass.eval_loss:.3f} g^2) -> {args.out}")


def cmd_eval(args):
    cfg, materials = _setup(args)
    material = _material(args, materials)
    bundle = load_bundle(args.model)
    targets = tuple(args.target_g)
    res = evaluate_bundle(bundle, cfg, material, targets, args.attempts,
                          tuple(args.policy), seed=args.seed)
    grasps = {(args.size, tag, t): masses for (tag, t), masses in res.items()}
    table = tabulate(material.name, grasps, cfg.tolerances)
    print(render(table), end="")
    if args.out:
        report(table, args.out)


def cmd_sweep(args):
    cfg, materials = _setup(args)
    camp = EvalCampaign.default(
        args.material, sizes=tuple(args.size or cfg.sizes), seeds=tuple(args.seed or cfg.seeds),
        policies=tuple(args.policy), attempts=args.attempts,
        targets_g=tuple(args.target_g) if args.target_g else None, tolerances=cfg.tolerances,
    )
    table = run_campaign(camp, cfg, materials, flush_path=args.out and args.out + ".partial")
    print(render(table), end="")
    if args.out:
        report(table, args.out)


def cmd_dump_config(args):
    cfg, materials = _setup(args)
    text = dump_config(cfg, materials)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")


def cmd_report(args):
    try:
        table = SuccessTable.from_csv(args.table)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read table {args.table}: {exc}") from None
    print(render(table), end="")
    if args.out:
        report(table, args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="massgrasp", description="Target-mass granular grasping experiments.",
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--config", default=None, help="key = value config file")
        p.set_defaults(fn=fn)
        return p

    p = add("collect", cmd_collect, "run the collection loop and save a dataset")
    p.add_argument("--material", default="coffee")
    p.add_argument("--size", type=int, default=1000, help="number of grasps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model bundle on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--size", type=int, default=None, help="use the first N records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "grasp targets with a trained bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--material", default="coffee")
    p.add_argument("--policy", nargs="+", choices=POLICIES, default=list(POLICIES))
    p.add_argument("--target-g", type=float, nargs="+", required=True)
    p.add_argument("--attempts", type=int, default=50)
    p.add_argument("--size", type=int, default=0, help="dataset size label for the table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path; a .txt table is written alongside")

    p = add("sweep", cmd_sweep, "collect, train and evaluate over sizes and seeds")
    p.add_argument("--material", default="coffee")
    p.add_argument("--size", type=int, nargs="+", default=None)
    p.add_argument("--seed", type=int, nargs="+", default=None)
    p.add_argument("--policy", nargs="+", choices=POLICIES, default=list(POLICIES))
    p.add_argument("--target-g", type=float, nargs="+", default=None)
    p.add_argument("--attempts", type=int, default=50)
    p.add_argument("--out", default=None)

    p = add("dump-config", cmd_dump_config, "print every default")
    p.add_argument("--out", default=None)

    p = add("report", cmd_report, "render a success-table CSV")
    p.add_argument("table")
    p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.fn(args)
    except MassGraspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
