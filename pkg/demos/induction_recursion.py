"""Tabulate the p_{j,m} recursion and the induction inequalities."""

import argparse

from ladderperc.analytics import RecursionParams, estim_sum, induction_check, recursion_pjm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pg", type=float, default=0.999)
    ap.add_argument("--pb", type=float, default=0.999)
    ap.add_argument("--kappa", type=int, default=5)
    ap.add_argument("--N", type=int, default=10**4)
    ap.add_argument("--m", type=int, default=8)
    args = ap.parse_args()

    par = RecursionParams(args.pg, args.pb, 0.8, args.kappa, args.N)
    print(f"J = {par.J}")
    rec = recursion_pjm(par, args.m)
    for j, (v, lq) in enumerate(zip(rec.values, rec.log_q)):
        print(f"p[{j},{args.m}] = {v:.12f}   log(1-p) = {lq:.4g}")
    for row in induction_check(par, args.m).rows:
        print(f"m={row.m:2d} site margin {row.site_margin:.4g}  bond margin {row.bond_margin:.4g}")
    if args.m >= 4:
        s = estim_sum(par, args.pg, args.m)
        print(f"sum bound: log lhs {s.log_lhs:.4g} <= log rhs {s.log_rhs:.4g}: {s.passed}")


if __name__ == "__main__":
    main()
