"""Command-line front end: ``otkit {uot,mmd,bounds,bench,sweep,gen}``.

Exit codes: 0 success, 2 input error, 3 numerical/solver failure,
4 inequality violation.  JSON results carry a ``manifest`` block; every float
is written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import resource
import statistics
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import _threads
from .bounds import (frobenius_bound, holder_check_balanced, holder_check_unbalanced, upper_bound_constant_uot,
                     upper_bound_constant_uot_reg, wasserstein_bound_uot, convergence_sweep_energy)
from .divergences import mmd_elementary_bound, mmd_squared_dense
from .fastsum import FastsumConfig, mmd_squared_fast
from .kernels import RadialKernel
from .measures import CostSpec, MeasureError, load_measure, normalize, sample_uniform, write_csv_measure
from .sinkhorn import SinkhornConfig, SolverError, sinkhorn_divergence, uot

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VIOLATION = 0, 2, 3, 4
DENSE_LIMIT = 20000
SCHEMA_PATH = Path(__file__).with_name("result.schema.json")


class InputError(Exception):
    pass


# --------------------------------------------------------------- output


def _dump(obj, indent=0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_dump(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f"{x:.17g}" if math.isfinite(x) else json.dumps(str(x))
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """JSON text with every float written as ``%.17g``."""
    return _dump(obj) + "\n"


def _digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _peak_rss() -> int:
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss) * 1024


def _manifest(args, inputs, outputs, t0, seed=None, backend=None) -> dict:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
    return {
        "subcommand": args.command,
        "parameters": params,
        "input_digests": {str(p): _digest(p) for p in inputs},
        "seed": seed,
        "backend": backend,
        "outputs": [str(o) for o in outputs],
        "wall_time_seconds": time.perf_counter() - t0,
        "peak_mem_bytes_estimate": _peak_rss(),
    }


def _emit_json(args, result: dict, inputs, t0, seed=None, backend=None):
    out = getattr(args, "output", None)
    doc = {"command": args.command, "result": result,
           "manifest": _manifest(args, inputs, [out] if out else [], t0, seed, backend)}
    text = dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_csv(args, header, rows, inputs, t0, seed=None, backend=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    out = getattr(args, "output", None)
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
        man = _manifest(args, inputs, [out], t0, seed, backend)
        Path(str(out) + ".manifest.json").write_text(dumps(man), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())


# --------------------------------------------------------------- helpers


def _load(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{path}: no such file")
    return load_measure(p)


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad number list {text!r}") from None


def _ints(text: str):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad integer list {text!r}") from None


def _kernel(args) -> RadialKernel:
    return RadialKernel(args.kernel, length_scale=args.length_scale, imq_c=args.imq_c)


def _sinkhorn_cfg(args) -> SinkhornConfig:
    eta1 = args.eta1 if args.eta1 is not None else args.eta
    eta2 = args.eta2 if args.eta2 is not None else eta1
    sched = tuple(_floats(args.lambda_schedule)) if args.lambda_schedule else None
    return SinkhornConfig(lam=args.lam, eta1=eta1, eta2=eta2, tol=args.tol, max_iter=args.max_iter,
                          init=args.init.replace("-", "_"), lambda_schedule=sched)


def _dense_guard(args, *ns):
    if args.backend == "dense" and max(ns) > DENSE_LIMIT and not args.allow_dense_large:
        raise InputError(f"dense backend refuses n > {DENSE_LIMIT} without --allow-dense-large")


# ------------------------------------------------------------- commands


def cmd_uot(args) -> int:
    t0 = time.perf_counter()
    mu, nu = _load(args.mu), _load(args.nu)
    _dense_guard(args, mu.n, nu.n)
    cost = CostSpec(r=args.r, norm=args.norm)
    cfg = _sinkhorn_cfg(args)
    res = uot(mu, nu, cost, cfg, args.backend)
    result = {
        "uot_value": res.primal,
        "dual_value": res.dual,
        "plan_mass": res.plan_mass,
        "iterations": res.stats.iterations,
        "converged": res.stats.converged,
        "final_delta": res.stats.delta,
        "stages": [{"lambda": lam, "iterations": it} for lam, it in res.stats.stages],
        "marginal_masses": list(res.marginal_masses),
        "input_masses": [float(mu.weights.sum()), float(nu.weights.sum())],
    }
    if args.debias:
        result["sd_value"] = sinkhorn_divergence(mu, nu, cost, cfg, args.backend)
    _emit_json(args, result, [args.mu, args.nu], t0, backend=args.backend)
    return EXIT_OK if res.stats.converged else EXIT_SOLVER


def cmd_mmd(args) -> int:
    t0 = time.perf_counter()
    mu, nu = _load(args.mu), _load(args.nu)
    _dense_guard(args, mu.n + nu.n)
    k = _kernel(args)
    if args.backend == "dense":
        m2 = mmd_squared_dense(k, mu, nu, force=args.force)
    else:
        m2 = mmd_squared_fast(k, mu, nu, FastsumConfig(N=args.bandwidth), force=args.force)
    result = {"mmd_squared": m2, "mmd": math.sqrt(m2), "backend": args.backend, "kernel": args.kernel}
    if args.verify:
        ref = mmd_squared_dense(k, mu, nu, force=args.force)
        # relative to the dense value; absolute when that is zero
        result["residual_vs_dense"] = abs(m2 - ref) / abs(ref) if ref != 0 else abs(m2 - ref)
        result["abs_residual_vs_dense"] = abs(m2 - ref)
    _emit_json(args, result, [args.mu, args.nu], t0, backend=args.backend)
    return EXIT_OK


def _holder_trials(args, k):
    gaps, rows = [], []
    for t in range(args.trials):
        s = args.seed * 1_000_003 + 2 * t
        if args.check == "holder":
            P = sample_uniform(args.n, 1, "probability", seed=s)
            Q = sample_uniform(args.n, 1, "probability", seed=s + 1)
            rep = holder_check_balanced(P, Q, k)
        else:
            mu = sample_uniform(args.n, args.d, "probability", seed=s)
            nu = sample_uniform(args.n, args.d, "probability", seed=s + 1)
            rep = holder_check_unbalanced(mu, nu, k, args.eta)
        gaps.append(rep.gap)
        rows.append(rep)
    return gaps, rows


def cmd_bounds(args) -> int:
    t0 = time.perf_counter()
    check = args.check
    cost = CostSpec(r=args.r, norm=args.norm)
    inputs = [p for p in (args.mu, args.nu) if p]
    eta1 = args.eta1 if args.eta1 is not None else args.eta
    eta2 = args.eta2 if args.eta2 is not None else eta1
    tol = 1e-10 if check == "holder" else 1e-8
    if check in ("holder", "holder-unbalanced") and not inputs:
        k = _kernel(args)
        gaps, _ = _holder_trials(args, k)
        result = {"check": check, "trials": args.trials, "n": args.n, "mean_gap": statistics.fmean(gaps),
                  "min_gap": min(gaps), "max_gap": max(gaps), "violations": sum(g < -tol for g in gaps)}
        _emit_json(args, result, [], t0, seed=args.seed)
        return EXIT_VIOLATION if result["violations"] else EXIT_OK
    if len(inputs) != 2:
        raise InputError(f"--check {check} needs two measure files")
    mu, nu = _load(args.mu), _load(args.nu)
    gap = None
    if check == "c-star":
        rep = upper_bound_constant_uot(mu, nu, cost, eta1, eta2)
        result = _bound_result(rep)
    elif check == "c-star-reg":
        rep = upper_bound_constant_uot_reg(mu, nu, cost, eta1, eta2, args.lam)
        result = _bound_result(rep)
    elif check == "elementary":
        k = _kernel(args)
        lhs = math.sqrt(mmd_squared_dense(k, mu, nu, force=True))
        rhs = mmd_elementary_bound(k, mu, nu)
        gap = rhs - lhs
        result = {"lhs": lhs, "rhs": rhs, "gap": gap}
    else:
        if check == "wasserstein":
            rep = wasserstein_bound_uot(mu, nu, cost, eta1, eta2)
        elif check == "frobenius":
            rep = frobenius_bound(normalize(mu), normalize(nu), cost, eta1)
        elif check == "holder":
            rep = holder_check_balanced(mu, nu, _kernel(args))
        else:
            rep = holder_check_unbalanced(mu, nu, _kernel(args), args.eta)
        gap = rep.gap
        result = {"lhs": rep.lhs, "rhs": rep.rhs, "gap": gap, "aux": rep.aux}
    result["check"] = check
    _emit_json(args, result, inputs, t0)
    return EXIT_VIOLATION if gap is not None and gap < -tol else EXIT_OK


def _bound_result(rep) -> dict:
    return {"c_star": rep.c_star, "objective_half": rep.objective_half,
            "objective_at_c_star": rep.objective_at_c_star, "objective_double": rep.objective_double,
            "transport_term": rep.transport_term, "masses": list(rep.masses), "certificate": rep.certificate,
            "params": rep.params}


def _bench_once(task, backend, n, d, k, seed):
    mu = sample_uniform(n, d, "probability", seed=seed)
    nu = sample_uniform(n, d, "probability", seed=seed + 1)
    tracemalloc.start()
    t0 = time.perf_counter()
    iters = ""
    if task == "uot":
        res = uot(mu, nu, CostSpec(2.0), SinkhornConfig(lam=20.0, eta1=1.0), backend)
        iters = res.stats.iterations
    elif backend == "dense":
        mmd_squared_dense(k, mu, nu)
    else:
        mmd_squared_fast(k, mu, nu)
    secs = time.perf_counter() - t0
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return secs, peak, iters


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    sizes, dims = _ints(args.sizes), _ints(args.dims)
    backends = [b.strip() for b in args.backends.split(",") if b.strip()]
    if not sizes or not dims or any(b not in ("dense", "nfft") for b in backends) or args.task not in ("uot", "mmd"):
        raise InputError("bad --sizes/--dims/--backends/--task")
    if "dense" in backends and max(sizes) > DENSE_LIMIT and not args.allow_dense_large:
        raise InputError(f"dense backend refuses n > {DENSE_LIMIT} without --allow-dense-large")
    k = _kernel(args)
    rows = []
    for backend in backends:
        for d in dims:
            for n in sizes:
                _bench_once(args.task, backend, min(n, 256), d, k, args.seed)  # warm-up, excluded
                secs, peak, iters = _bench_once(args.task, backend, n, d, k, args.seed)
                kname = args.kernel if args.task == "mmd" else "gibbs"
                rows.append([args.task, backend, n, d, kname, secs, peak, iters])
    header = ["task", "backend", "n", "d", "kernel", "seconds", "peak_mem_bytes_estimate", "iterations"]
    _emit_csv(args, header, rows, [], t0, seed=args.seed)
    return EXIT_OK


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    P, Q = _load(args.mu), _load(args.nu)
    etas = _floats(args.etas)
    if not etas:
        raise InputError("empty --etas")
    rows = convergence_sweep_energy(normalize(P), normalize(Q), args.lam, etas, tol=args.tol)
    out = [[eta, sd, math.sqrt(2.0 * e), e, diff] for eta, sd, e, diff in rows]
    _emit_csv(args, ["eta", "sd", "mmd_energy", "energy_limit", "diff"], out, [args.mu, args.nu], t0)
    return EXIT_OK


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    if args.n < 1 or not 1 <= args.d <= 3:
        raise InputError("need n >= 1 and 1 <= d <= 3")
    m = sample_uniform(args.n, args.d, args.mode, seed=args.seed)
    write_csv_measure(m, args.output)
    man = _manifest(args, [], [args.output], t0, seed=args.seed)
    Path(str(args.output) + ".manifest.json").write_text(dumps(man), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_kernel(p):
    p.add_argument("--kernel", choices=["gauss", "laplace", "imq", "energy"], default="gauss")
    p.add_argument("--length-scale", type=float, default=1.0)
    p.add_argument("--imq-c", type=float, default=1.0)


def _add_solver(p):
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--norm", choices=["euclidean", "l1"], default="euclidean")
    p.add_argument("--lambda", dest="lam", type=float, default=20.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--lambda-schedule")
    p.add_argument("--init", choices=["zeros", "upper-bound"], default="zeros")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otkit", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, help="FFT worker threads (default: OTKIT_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("uot", help="regularized unbalanced OT between two measures")
    p.add_argument("mu")
    p.add_argument("nu")
    _add_solver(p)
    p.add_argument("--backend", choices=["dense", "nfft"], default="dense")
    p.add_argument("--debias", action="store_true")
    p.add_argument("--allow-dense-large", action="store_true")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_uot)

    p = sub.add_parser("mmd", help="maximum mean discrepancy")
    p.add_argument("mu")
    p.add_argument("nu")
    _add_kernel(p)
    p.add_argument("--backend", choices=["dense", "nfft"], default="dense")
    p.add_argument("--bandwidth", type=int, help="fast summation bandwidth N")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--force", action="store_true")
    p.add_argument("--allow-dense-large", action="store_true")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_mmd)

    p = sub.add_parser("bounds", help="upper bounds and Hoelder inequalities")
    p.add_argument("mu", nargs="?")
    p.add_argument("nu", nargs="?")
    p.add_argument("--check", required=True, choices=["c-star", "c-star-reg", "wasserstein", "frobenius",
                                                      "holder", "holder-unbalanced", "elementary"])
    _add_solver(p)
    _add_kernel(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_bounds, eta=None)

    p = sub.add_parser("bench", help="timing table (CSV)")
    p.add_argument("--sizes", required=True)
    p.add_argument("--dims", default="1")
    p.add_argument("--task", choices=["uot", "mmd"], default="uot")
    p.add_argument("--backends", default="nfft")
    _add_kernel(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-dense-large", action="store_true")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="debiased r=1 divergence against the energy MMD over eta (CSV)")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--etas", default="1,10,100,1000,10000")
    p.add_argument("--lambda", dest="lam", type=float, default=0.001)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a synthetic uniform measure (CSV)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["unbalanced", "probability"], default="unbalanced",
                   help="weights uniform on (0, 1] or constant 1/n")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.command == "bounds" and args.eta is None:
        args.eta = 8.0 if args.check == "holder-unbalanced" else 1.0
    threads = args.threads if args.threads is not None else os.environ.get("OTKIT_THREADS")
    _threads.set(threads)
    try:
        return args.func(args)
    except (InputError, MeasureError, ValueError, OSError) as exc:
        print(f"otkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"otkit {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
