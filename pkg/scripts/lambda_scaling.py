"""Scheduled vs direct NFFT Sinkhorn solve (eta1 = eta2 = 25, lambda up to 100)."""
import argparse

from otkit.measures import CostSpec, sample_uniform
from otkit.sinkhorn import SinkhornConfig, lambda_scaled_solve, residual_dual, solve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--schedule", default="1,20,100")
    ap.add_argument("--eta", type=float, default=25.0)
    ap.add_argument("--tol", type=float, default=1e-14)
    ap.add_argument("--backend", default="nfft")
    args = ap.parse_args(argv)
    sched = tuple(float(v) for v in args.schedule.split(","))
    mu = sample_uniform(args.n, 1, "probability", seed=3)
    nu = sample_uniform(args.n, 1, "probability", seed=4)
    base = dict(lam=sched[-1], eta1=args.eta, tol=args.tol, max_iter=200000)
    direct, s1 = solve(mu, nu, CostSpec(), SinkhornConfig(**base), args.backend)
    scaled, s2 = lambda_scaled_solve(mu, nu, CostSpec(), SinkhornConfig(**base, lambda_schedule=sched), args.backend)
    print(f"direct   {s1.iterations:6d} iterations {s1.seconds:7.2f} s converged={s1.converged}")
    for lam, it in s2.stages:
        print(f"  stage lambda={lam:g}: {it} iterations")
    print(f"schedule {s2.iterations:6d} iterations {s2.seconds:7.2f} s converged={s2.converged}")
    print(f"residual {residual_dual(direct, scaled):.3e}")


if __name__ == "__main__":
    main()
