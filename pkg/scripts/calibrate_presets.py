"""Pilot runs behind the material presets: grasp-mass moments per material.

    python scripts/calibrate_presets.py --n 1000 --seeds 0 1 2
"""
import argparse
import time

import numpy as np
from scipy.stats import kurtosis, skew

from massgrasp.config import ExperimentConfig, PRESETS
from massgrasp.sim import CollectionState, collect


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--materials", nargs="+", default=list(PRESETS))
    ap.add_argument("--switch-eps-g", type=float, default=0.0)
    args = ap.parse_args()
    cfg = ExperimentConfig(switch_eps_g=args.switch_eps_g)
    for name in args.materials:
        for seed in args.seeds:
            t = time.time()
            st = CollectionState.start(cfg, PRESETS[name], seed)
            m = collect(cfg, PRESETS[name], args.n, seed, state=st).masses()
            switches = sum(h[2] for h in st.history)
            print(f"{name:8s} seed={seed} mean={m.mean():6.2f} std={m.std(ddof=1):5.2f} "
                  f"skew={skew(m):+.2f} exkurt={kurtosis(m):+.2f} min={m.min():.0f} "
                  f"switches={switches} ({time.time() - t:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
