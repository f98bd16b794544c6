#!/usr/bin/env python3
"""Scan the ridge parameter and print the bias/variance/error-bound bowl.

Usage: python3 scripts/bowl_scan.py [--shots 1000] [--members 6] [--seed 0]
"""

import argparse

import numpy as np

from reshadow import biasvar, ensembles, lgt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, default=1000)
    ap.add_argument("--members", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()

    link = lgt.link_local(1.0, 1.0)
    ens = ensembles.subsample_su2(args.members, np.random.default_rng(args.seed),
                                  targets=(link,), n=2)
    rows = biasvar.ridge_scan(link, ens, biasvar.default_lambda_grid(),
                              args.shots, 1, args.delta)
    best = min(rows, key=lambda r: r.error_bound)
    print(f"{'lambda':>12}{'bias':>12}{'var_bound':>12}{'error_bound':>13}")
    for r in rows:
        mark = "  <-- best" if r is best else ""
        print(f"{r.lambda_or_alpha:>12.4g}{r.bias:>12.4g}"
              f"{r.var_bound:>12.4g}{r.error_bound:>13.4g}{mark}")


if __name__ == "__main__":
    main()
