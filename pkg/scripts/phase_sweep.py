#!/usr/bin/env python3
"""Separation margin of the phase classifier vs circuit depth, over seeds.

Usage: python3 scripts/phase_sweep.py [--depths 0 1 2] [--seeds 10]
(defaults use reduced sampling so the sweep finishes in ~2 minutes)
"""

import argparse

import numpy as np

from reshadow import phases


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--states-per-phase", type=int, default=10)
    ap.add_argument("--n-rp", type=int, default=2500)
    ap.add_argument("--n-su2", type=int, default=400)
    args = ap.parse_args()

    for depth in args.depths:
        margins = []
        for seed in range(args.seeds):
            res = phases.run_phase_classification(
                L=2, depth=depth, states_per_phase=args.states_per_phase,
                n_rp=args.n_rp, n_su2=args.n_su2,
                rng=np.random.default_rng(seed))
            margins.append(phases.separation_margin(res.coords, res.labels))
        margins = np.array(margins)
        print(f"depth {depth}: separable {int((margins > 0).sum())}/{args.seeds}"
              f"  mean margin {margins.mean():+.4f}  min {margins.min():+.4f}")


if __name__ == "__main__":
    main()
