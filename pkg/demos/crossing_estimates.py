"""Monte Carlo crossing probabilities on Bernoulli site-bond grids."""

import argparse

from ladderperc.perc_core import CrossingSpec, Kind, estimate_event, grid_sampler


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--reps", type=int, default=2000)
    args = ap.parse_args()

    for p in (0.4, 0.5, 0.6):
        lr = estimate_event(CrossingSpec(Kind.LR_DISJOINT), grid_sampler(args.n + 1, args.n, 1.0, p), args.reps)
        ob = estimate_event(CrossingSpec(Kind.ORIGIN_TO_BOUNDARY), grid_sampler(args.n, args.n, 1.0, p), args.reps)
        dr = estimate_event(CrossingSpec(Kind.D_R, rho=0.8, N=args.n), grid_sampler(args.n, args.n, 1.0, p), args.reps)
        print(f"p={p:.2f}  LR={lr.point:.3f} [{lr.ci_low:.3f}, {lr.ci_high:.3f}]  "
              f"origin={ob.point:.3f}  D_R={dr.point:.3f}")


if __name__ == "__main__":
    main()
