"""Run an evaluation campaign and write the success table.

    python scripts/run_sweep.py --material coffee --sizes 50 1000 --seeds 0 1 2 3 4 --out results/coffee.csv
"""
import argparse
import logging
import time

from massgrasp.config import ExperimentConfig, load_config
from massgrasp.harness import EvalCampaign, render, report, run_campaign


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--material", default="coffee")
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 500, 1000])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--attempts", type=int, default=50)
    ap.add_argument("--policies", nargs="+", default=["random", "baseline", "ee", "rnd"])
    ap.add_argument("--targets-g", type=float, nargs="+", default=None)
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg, materials = load_config(args.config) if args.config else (ExperimentConfig(), None)
    camp = EvalCampaign.default(
        args.material, sizes=tuple(args.sizes), seeds=tuple(args.seeds), attempts=args.attempts,
        policies=tuple(args.policies), targets_g=tuple(args.targets_g) if args.targets_g else None,
    )
    t0 = time.time()
    table = run_campaign(camp, cfg, materials, flush_path=args.out and args.out + ".partial")
    print(render(table))
    for size in camp.sizes:
        for tol in camp.tolerances:
            rates = "  ".join(f"{p}={table.mean_rate(p, tol, size):.3f}" for p in camp.policies)
            print(f"size {size:5d} tol {tol:.2f}: {rates}")
    print(f"({time.time() - t0:.0f}s)")
    if args.out:
        report(table, args.out)


if __name__ == "__main__":
    main()
