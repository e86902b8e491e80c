"""Entropy-regularized unbalanced OT by Sinkhorn iteration on the dual potentials.

Two backends share one iteration loop and differ only in how the kernel sums

    t_i = sum_j exp(-lam d_ij^r) exp(lam gamma_j) nu_j
    s_j = sum_i exp(-lam d_ij^r) exp(lam beta_i) mu_i

are formed: ``dense`` keeps the Gibbs matrix, ``nfft`` uses fast summation.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .divergences import kl_divergence, kl_plan_divergence
from .fastsum import FastsumConfig, fastsum_cost_kernel, make_kernel_sum
from .kernels import RadialKernel
from .measures import CostSpec, DiscreteMeasure, MeasureError, pairwise_cost, total_mass

BACKENDS = ("dense", "nfft")
MAX_NFFT_LAMBDA = 200.0


class SolverError(RuntimeError):
    """Numerical failure inside a solver (overflow, non-positive kernel sums)."""


@dataclass(frozen=True)
class SinkhornConfig:
    """Regularization and stopping parameters.

    ``lam`` weights the entropy term by 1/lam, ``eta1``/``eta2`` weight the
    marginal penalties (``eta2=None`` copies ``eta1``).  The cost exponent
    lives in :class:`CostSpec`.
    """

    lam: float = 20.0
    eta1: float = 1.0
    eta2: float | None = None
    tol: float = 1e-10
    max_iter: int = 10000
    init: str = "zeros"
    lambda_schedule: tuple | None = None
    record_dual: bool = False

    def __post_init__(self):
        if self.eta2 is None:
            object.__setattr__(self, "eta2", self.eta1)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not (self.eta1 > 0 and self.eta2 > 0):
            raise ValueError("eta1 and eta2 must be positive")
        if not self.tol > 0 or self.max_iter < 0:
            raise ValueError("need tol > 0 and max_iter >= 0")
        if self.init not in ("zeros", "upper_bound"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.lambda_schedule is not None:
            sched = tuple(float(v) for v in self.lambda_schedule)
            if not sched or any(b <= a for a, b in zip(sched, sched[1:])) or sched[-1] != self.lam:
                raise ValueError("lambda schedule must be strictly increasing and end at lam")
            object.__setattr__(self, "lambda_schedule", sched)


@dataclass(frozen=True, eq=False)
class DualPotentials:
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        b = np.array(self.beta, dtype=np.float64).reshape(-1)
        g = np.array(self.gamma, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise SolverError("non-finite potentials")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    matrix: np.ndarray

    @property
    def mass(self) -> float:
        return math.fsum(self.matrix.ravel().tolist())


@dataclass
class SolveStats:
    iterations: int = 0
    delta: float = math.inf
    converged: bool = False
    backend: str = "dense"
    seconds: float = 0.0
    stages: list = field(default_factory=list)  # (lam, iterations) per stage
    dual_history: list | None = None


# ------------------------------------------------------------ kernel sums


class DenseGibbs:
    """Gibbs matrix ``exp(-lam C)`` with log-domain fallback for underflowing rows."""

    backend = "dense"

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, lam: float):
        self.mu, self.nu, self.cost, self.lam = mu, nu, cost, lam
        self.C = pairwise_cost(mu, nu, cost)
        self.K = np.exp(-lam * self.C)

    def _log_sums(self, K, C, pot, weights):
        z = self.lam * pot
        M = z.max()
        vals = K @ (weights * np.exp(z - M))
        bad = ~(vals > 1e-150) | ~np.isfinite(vals)
        out = np.empty_like(vals)
        out[~bad] = M + np.log(vals[~bad])
        if np.any(bad):
            out[bad] = logsumexp(-self.lam * C[bad] + z, b=weights, axis=1)
        return out

    def log_row(self, gamma):
        return self._log_sums(self.K, self.C, gamma, self.nu.weights)

    def log_col(self, beta):
        return self._log_sums(self.K.T, self.C.T, beta, self.mu.weights)

    def cost_row(self, gamma):
        """``sum_j C_ij exp(-lam C_ij) exp(lam gamma_j) nu_j`` scaled by exp(-max lam gamma)."""
        z = self.lam * gamma
        M = z.max()
        return (self.C * self.K) @ (self.nu.weights * np.exp(z - M)), M


class NfftGibbs:
    """Gibbs kernel sums by NFFT fast summation (Euclidean cost, r in {1, 2})."""

    backend = "nfft"

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, lam: float,
                 fs: FastsumConfig = FastsumConfig()):
        check_nfft_support(mu, nu, cost, lam)
        self.mu, self.nu, self.cost, self.lam, self.fs = mu, nu, cost, lam, fs
        self.ks = make_kernel_sum(RadialKernel.from_gibbs(cost, lam), nu.points, mu.points, fs)
        self._cost_ks = None

    def _log(self, vals, M):
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise SolverError(
                f"fast summation returned non-positive kernel sums at lambda={self.lam}; "
                "use a lambda schedule or a smaller lambda")
        return M + np.log(vals)

    def log_row(self, gamma):
        z = self.lam * gamma
        M = z.max()
        return self._log(self.ks(self.nu.weights * np.exp(z - M)), M)

    def log_col(self, beta):
        z = self.lam * beta
        M = z.max()
        return self._log(self.ks.T(self.mu.weights * np.exp(z - M)), M)

    def cost_row(self, gamma):
        if self._cost_ks is None:
            kern = fastsum_cost_kernel(self.lam, self.cost)
            self._cost_ks = make_kernel_sum(kern, self.nu.points, self.mu.points, self.fs)
        z = self.lam * gamma
        M = z.max()
        return self._cost_ks(self.nu.weights * np.exp(z - M)), M


def check_nfft_support(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, lam: float):
    if cost.norm != "euclidean":
        raise MeasureError("the nfft backend needs the Euclidean distance")
    if cost.r not in (1, 2):
        raise MeasureError("the nfft backend supports r = 1 and r = 2 only")
    if mu.dim != nu.dim or not 1 <= mu.dim <= 3:
        raise MeasureError("the nfft backend supports matching dimensions 1, 2, 3")
    if lam > MAX_NFFT_LAMBDA:
        raise MeasureError(f"the nfft backend supports lambda <= {MAX_NFFT_LAMBDA:g}")


def gibbs_operator(mu, nu, cost: CostSpec, lam: float, backend: str = "dense", fs: FastsumConfig = FastsumConfig()):
    if backend == "dense":
        return DenseGibbs(mu, nu, cost, lam)
    if backend == "nfft":
        return NfftGibbs(mu, nu, cost, lam, fs)
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------- updates


def update_beta(op, gamma, eta1: float):
    """First-order condition in beta for fixed gamma."""
    return -eta1 / (1.0 + eta1 * op.lam) * op.log_row(gamma)


def update_gamma(op, beta, eta2: float):
    return -eta2 / (1.0 + eta2 * op.lam) * op.log_col(beta)


def sinkhorn_step(op, pots: DualPotentials, cfg: SinkhornConfig) -> DualPotentials:
    """One full cycle (beta then gamma)."""
    beta = update_beta(op, pots.gamma, cfg.eta1)
    return DualPotentials(beta, update_gamma(op, beta, cfg.eta2))


def _dual_value(mu, nu, lam, eta1, eta2, beta, gamma, log_s):
    """Dual objective, with the double sum taken from log s(beta)."""
    mX, nX = total_mass(mu), total_mass(nu)
    pair = math.fsum((nu.weights * np.exp(lam * gamma + log_s)).tolist())
    return (-eta1 * math.fsum((mu.weights * np.exp(-beta / eta1)).tolist())
            - eta2 * math.fsum((nu.weights * np.exp(-gamma / eta2)).tolist())
            + eta1 * mX + eta2 * nX - (pair - mX * nX) / lam)


def _iterate(op, mu, nu, cfg: SinkhornConfig, lam: float, beta, gamma, stats: SolveStats):
    a1 = cfg.eta1 / (1.0 + cfg.eta1 * lam)
    a2 = cfg.eta2 / (1.0 + cfg.eta2 * lam)
    it, delta = 0, math.inf
    while it < cfg.max_iter:
        it += 1
        beta_new = -a1 * op.log_row(gamma)
        log_s = op.log_col(beta_new)
        gamma_new = -a2 * log_s
        if not (np.all(np.isfinite(beta_new)) and np.all(np.isfinite(gamma_new))):
            raise SolverError(f"non-finite potentials at lambda={lam}; try a lambda schedule")
        delta = max(np.abs(beta_new - beta).max(), np.abs(gamma_new - gamma).max())
        beta, gamma = beta_new, gamma_new
        if stats.dual_history is not None:
            stats.dual_history.append(_dual_value(mu, nu, lam, cfg.eta1, cfg.eta2, beta, gamma, log_s))
        if delta < cfg.tol:
            break
    stats.stages.append((lam, it))
    stats.iterations += it
    stats.delta = delta
    stats.converged = delta < cfg.tol
    return beta, gamma


def _initial_gamma(mu, nu, cost, cfg: SinkhornConfig):
    if cfg.init == "zeros":
        return np.zeros(nu.n)
    from .bounds import c_star_reg

    return np.full(nu.n, c_star_reg(mu, nu, cost, cfg.eta1, cfg.eta2, cfg.lam))


def _solve(mu, nu, cost, cfg, backend, fs=FastsumConfig(), pots0=None):
    t0 = time.perf_counter()
    stats = SolveStats(backend=backend, dual_history=[] if cfg.record_dual else None)
    if pots0 is None:
        beta, gamma = np.zeros(mu.n), _initial_gamma(mu, nu, cost, cfg)
    else:
        beta, gamma = pots0.beta.copy(), pots0.gamma.copy()
    for lam in cfg.lambda_schedule or (cfg.lam,):
        op = gibbs_operator(mu, nu, cost, lam, backend, fs)
        beta, gamma = _iterate(op, mu, nu, cfg, lam, beta, gamma, stats)
    stats.seconds = time.perf_counter() - t0
    return DualPotentials(beta, gamma), stats


def sinkhorn_uot_dense(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                       cfg: SinkhornConfig = SinkhornConfig()):
    """Dense Sinkhorn iteration for unbalanced OT; returns ``(potentials, stats)``."""
    return _solve(mu, nu, cost, cfg, "dense")


def sinkhorn_uot_nfft(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                      cfg: SinkhornConfig = SinkhornConfig(), fs: FastsumConfig = FastsumConfig()):
    """Sinkhorn iteration with NFFT-based kernel sums."""
    for lam in cfg.lambda_schedule or (cfg.lam,):
        check_nfft_support(mu, nu, cost, lam)
    return _solve(mu, nu, cost, cfg, "nfft", fs)


def solve(mu, nu, cost: CostSpec = CostSpec(), cfg: SinkhornConfig = SinkhornConfig(), backend: str = "dense",
          fs: FastsumConfig = FastsumConfig()):
    if backend == "nfft":
        return sinkhorn_uot_nfft(mu, nu, cost, cfg, fs)
    if backend == "dense":
        return sinkhorn_uot_dense(mu, nu, cost, cfg)
    raise ValueError(f"unknown backend {backend!r}")


def lambda_scaled_solve(mu, nu, cost: CostSpec, cfg: SinkhornConfig, backend: str = "dense",
                        fs: FastsumConfig = FastsumConfig()):
    """Solve along ``cfg.lambda_schedule`` with warm starts; a missing schedule means a direct solve."""
    return solve(mu, nu, cost, cfg, backend, fs)


# ------------------------------------------------------- plans, objectives


def recover_plan_dense(pots: DualPotentials, mu, nu, cost: CostSpec, cfg: SinkhornConfig) -> TransportPlan:
    lam = cfg.lam
    expo = lam * pots.beta[:, None] - lam * pairwise_cost(mu, nu, cost) + lam * pots.gamma[None, :]
    with np.errstate(over="ignore"):
        pi = np.exp(expo) * np.multiply.outer(mu.weights, nu.weights)
    if not np.all(np.isfinite(pi)):
        raise SolverError(f"plan overflow at lambda={lam}")
    return TransportPlan(pi)


def _marginal_weights(pots: DualPotentials, mu, nu, cost, cfg, backend="dense", fs=FastsumConfig()):
    op = gibbs_operator(mu, nu, cost, cfg.lam, backend, fs)
    lam = cfg.lam
    row = mu.weights * np.exp(lam * pots.beta + op.log_row(pots.gamma))
    col = nu.weights * np.exp(lam * pots.gamma + op.log_col(pots.beta))
    return row, col


def marginals(obj, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
              cfg: SinkhornConfig | None = None, backend: str = "dense", fs: FastsumConfig = FastsumConfig()):
    """Marginals of a plan (or of the plan encoded by potentials) on the atoms of mu and nu."""
    if isinstance(obj, TransportPlan):
        row, col = obj.matrix.sum(axis=1), obj.matrix.sum(axis=0)
    else:
        row, col = _marginal_weights(obj, mu, nu, cost, cfg, backend, fs)
    return DiscreteMeasure(mu.points, row), DiscreteMeasure(nu.points, col)


def primal_objective(plan: TransportPlan, mu, nu, cost: CostSpec, cfg: SinkhornConfig) -> float:
    """Transport cost + entropy/lam + marginal KL penalties for a dense plan."""
    pi = plan.matrix
    C = pairwise_cost(mu, nu, cost)
    return (math.fsum((pi * C).ravel().tolist())
            + kl_plan_divergence(pi, mu, nu) / cfg.lam
            + cfg.eta1 * kl_divergence(pi.sum(axis=1), mu.weights)
            + cfg.eta2 * kl_divergence(pi.sum(axis=0), nu.weights))


def primal_from_potentials(pots: DualPotentials, mu, nu, cost: CostSpec, cfg: SinkhornConfig,
                           backend: str = "dense", fs: FastsumConfig = FastsumConfig()) -> float:
    """Primal objective of the plan encoded by the potentials, without forming it.

    Uses ``log(pi_ij / (mu_i nu_j)) = lam (beta_i + gamma_j - d_ij^r)`` so the
    transport term cancels against the entropy term.
    """
    row, col = _marginal_weights(pots, mu, nu, cost, cfg, backend, fs)
    mass = math.fsum(row.tolist())
    ent = (math.fsum((pots.beta * row).tolist()) + math.fsum((pots.gamma * col).tolist())
           + (total_mass(mu) * total_mass(nu) - mass) / cfg.lam)
    return ent + cfg.eta1 * kl_divergence(row, mu.weights) + cfg.eta2 * kl_divergence(col, nu.weights)


def dual_objective(pots: DualPotentials, mu, nu, cost: CostSpec, cfg: SinkhornConfig,
                   backend: str = "dense", fs: FastsumConfig = FastsumConfig()) -> float:
    op = gibbs_operator(mu, nu, cost, cfg.lam, backend, fs)
    return _dual_value(mu, nu, cfg.lam, cfg.eta1, cfg.eta2, pots.beta, pots.gamma, op.log_col(pots.beta))


def transport_cost(pots: DualPotentials, mu, nu, cost: CostSpec, cfg: SinkhornConfig,
                   backend: str = "dense", fs: FastsumConfig = FastsumConfig()) -> float:
    """``<pi, d^r>`` for the plan encoded by the potentials."""
    op = gibbs_operator(mu, nu, cost, cfg.lam, backend, fs)
    vals, M = op.cost_row(pots.gamma)
    z = cfg.lam * pots.beta
    Mb = z.max()
    return math.fsum((mu.weights * np.exp(z - Mb) * vals).tolist()) * math.exp(M + Mb)


@dataclass(frozen=True)
class UotResult:
    potentials: DualPotentials
    stats: SolveStats
    primal: float
    dual: float
    plan_mass: float
    marginal_masses: tuple


def uot(mu, nu, cost: CostSpec = CostSpec(), cfg: SinkhornConfig = SinkhornConfig(), backend: str = "dense",
        fs: FastsumConfig = FastsumConfig()) -> UotResult:
    """Solve and evaluate primal/dual objectives at the final potentials."""
    pots, stats = solve(mu, nu, cost, cfg, backend, fs)
    row, col = _marginal_weights(pots, mu, nu, cost, cfg, backend, fs)
    primal = primal_from_potentials(pots, mu, nu, cost, cfg, backend, fs)
    dual = dual_objective(pots, mu, nu, cost, cfg, backend, fs)
    return UotResult(pots, stats, primal, dual, math.fsum(row.tolist()),
                     (math.fsum(row.tolist()), math.fsum(col.tolist())))


def sinkhorn_divergence(mu, nu, cost: CostSpec = CostSpec(), cfg: SinkhornConfig = SinkhornConfig(),
                        backend: str = "dense", fs: FastsumConfig = FastsumConfig()) -> float:
    """Debiased cost ``UOT(mu,nu) - UOT(mu,mu)/2 - UOT(nu,nu)/2 + (mu(X)-nu(X))^2/(2 lam)``."""
    def value(a, b):
        return uot(a, b, cost, cfg, backend, fs).primal

    same = mu.same_atoms(nu) and np.array_equal(mu.weights, nu.weights)
    v_mm = value(mu, mu)
    v_nn = v_mm if same else value(nu, nu)
    v_mn = v_mm if same else value(mu, nu)
    mX, nX = total_mass(mu), total_mass(nu)
    return v_mn - 0.5 * v_mm - 0.5 * v_nn + (mX - nX) ** 2 / (2 * cfg.lam)


def residual_dual(ref: DualPotentials, test: DualPotentials) -> float:
    """Relative Euclidean distance of both potentials, summed."""
    if ref.beta.shape != test.beta.shape or ref.gamma.shape != test.gamma.shape:
        raise ValueError("potential lengths differ")
    nb, ng = np.linalg.norm(ref.beta), np.linalg.norm(ref.gamma)
    if nb == 0 or ng == 0:
        raise ValueError("reference potentials have zero norm")
    return float(np.linalg.norm(test.beta - ref.beta) / nb + np.linalg.norm(test.gamma - ref.gamma) / ng)


def exact_wasserstein_1d(P: DiscreteMeasure, Q: DiscreteMeasure, r: float = 1.0) -> float:
    """Unrooted ``w_r`` in 1D from the monotone (north-west corner) coupling."""
    if P.dim != 1 or Q.dim != 1:
        raise MeasureError("exact Wasserstein oracle needs d = 1")
    mp, mq = total_mass(P), total_mass(Q)
    if abs(mp - mq) > 1e-12 * max(1.0, mp):
        raise MeasureError("measures must have equal mass")
    ip, iq = np.argsort(P.points[:, 0], kind="stable"), np.argsort(Q.points[:, 0], kind="stable")
    x, a = P.points[ip, 0], P.weights[ip]
    y, b = Q.points[iq, 0], Q.weights[iq]
    i = j = 0
    ra, rb = a[0], b[0]
    total = []
    while i < len(x) and j < len(y):
        m = min(ra, rb)
        total.append(m * abs(x[i] - y[j]) ** r)
        ra -= m
        rb -= m
        if ra <= 0:
            i += 1
            ra = a[i] if i < len(x) else 0.0
        if rb <= 0:
            j += 1
            rb = b[j] if j < len(y) else 0.0
    return math.fsum(total)
