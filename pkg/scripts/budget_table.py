#!/usr/bin/env python3
"""Print the four-strategy shot-budget table for a range of strip sizes.

Usage: python3 scripts/budget_table.py [--triangles 2 4 8] [--seed 1]
"""

import argparse

import numpy as np

from reshadow import ensembles, lgt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--triangles", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--s-max", type=int, default=2)
    ap.add_argument("--members", type=int, default=25)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()

    link = lgt.link_local(1.0, 1.0)
    tri = lgt.triangle_local(1.0)
    ens = ensembles.subsample_su2(args.members, np.random.default_rng(args.seed),
                                  targets=(link, tri), n=3)
    lats = [lgt.TriLattice(t, args.s_max) for t in args.triangles]
    rows = lgt.energy_budget_comparison(lats, ens, epsilon=args.epsilon,
                                        delta=args.delta)
    print(f"{'strategy':<12}{'qubits':>8}{'terms':>7}{'N_shots':>10}")
    for r in rows:
        print(f"{r.strategy:<12}{r.n_qubits:>8}{r.m_terms:>7}{r.n_shots:>10}")


if __name__ == "__main__":
    main()
