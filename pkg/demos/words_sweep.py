"""Depth-n survival proxy for percolation of words along a grid of beta."""

import argparse

import numpy as np

from ladderperc.words import WordParams, beta_sweep, threshold_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.9)
    ap.add_argument("--depth", type=int, default=30)
    ap.add_argument("--reps", type=int, default=2000)
    args = ap.parse_args()

    for row in beta_sweep(args.alpha, np.linspace(0.5, 1.0, 6), 2, args.depth, args.reps):
        rep = threshold_check(WordParams(args.alpha, row["beta"]))
        print(f"beta={row['beta']:.2f}  proxy={row['proxy']:.3f}  mean Z={row['mean_z']:.3g}  "
              f"c<=1/d: {rep.subcritical}  (delta, p_g, p_b)=({rep.delta:.2f}, {rep.p_g}, {rep.p_b:.2f})")


if __name__ == "__main__":
    main()
