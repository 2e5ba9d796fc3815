"""Sample ladder environments, group their bad ladders and report spacing."""

import argparse

import numpy as np

from ladderperc.env import sample_environment
from ladderperc.grouping import blocks_csv_rows, run_grouping
from ladderperc.rng import Stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=0.01)
    ap.add_argument("--width", type=int, default=2000)
    ap.add_argument("--M", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    env = sample_environment(args.delta, args.width, args.width, Stream(args.seed))
    res = run_grouping(env.bad_positions("H"), M=args.M, window=args.width)
    print(f"{len(res.gamma)} bad H-ladders, stabilized after {res.K} steps, chi={res.chi}")
    masses = np.array([b.mass for b in res.partitions[-1].blocks])
    if masses.size:
        print("final block masses:", np.bincount(masses)[1:].tolist())
    for row in blocks_csv_rows(res)[:10]:
        print(row)


if __name__ == "__main__":
    main()
