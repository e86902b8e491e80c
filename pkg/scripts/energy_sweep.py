"""Debiased r=1 divergence against the energy MMD for growing eta (lambda = 0.001)."""
import argparse
import csv
import math
import sys

from otkit.bounds import convergence_sweep_energy
from otkit.measures import sample_uniform


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--lam", type=float, default=0.001)
    ap.add_argument("--etas", default="1,10,100,1000,10000")
    ap.add_argument("--seed", type=int, default=71)
    ap.add_argument("-o", "--output", default="-")
    args = ap.parse_args(argv)
    P = sample_uniform(args.n, 1, "probability", seed=args.seed)
    Q = sample_uniform(args.n, 1, "probability", seed=args.seed + 1)
    etas = [float(v) for v in args.etas.split(",")]
    rows = convergence_sweep_energy(P, Q, args.lam, etas)
    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    w = csv.writer(out)
    w.writerow(["eta", "sd", "mmd_energy", "half_mmd_squared", "abs_diff", "rel_diff"])
    for eta, sd, e, diff in rows:
        w.writerow([eta, repr(sd), repr(math.sqrt(2 * e)), repr(e), repr(diff), repr(diff / e)])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
