"""Closed-form upper bounds for unbalanced OT and Hoelder-type MMD inequalities.

Unregularized UOT values are approximated throughout by a regularized solve at
lam = 200 reached through the schedule (1, 20, 200).  Entropic regularization
can only increase the objective, so such a surrogate sits above the exact value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divergences import mmd_squared_dense
from .fastsum import FastsumConfig, fast_kernel_sum
from .kernels import RadialKernel, holder_constants
from .measures import CostSpec, DiscreteMeasure, MeasureError, normalize, pairwise_cost, total_mass
from .sinkhorn import (SinkhornConfig, _marginal_weights, exact_wasserstein_1d, sinkhorn_divergence, uot)

SURROGATE_LAMBDA = 200.0
SURROGATE_SCHEDULE = (1.0, 20.0, 200.0)


def surrogate_config(eta1: float, eta2: float | None = None, tol: float = 1e-10,
                     max_iter: int = 20000) -> SinkhornConfig:
    return SinkhornConfig(lam=SURROGATE_LAMBDA, eta1=eta1, eta2=eta2, tol=tol, max_iter=max_iter,
                          lambda_schedule=SURROGATE_SCHEDULE)


@dataclass(frozen=True)
class BoundReport:
    c_star: float
    objective_half: float
    objective_at_c_star: float
    objective_double: float
    transport_term: float
    masses: tuple
    params: dict = field(default_factory=dict)

    @property
    def certificate(self) -> bool:
        """c* beats c*/2 and 2c* on the restricted objective."""
        slack = 1e-12 * max(1.0, abs(self.objective_at_c_star))
        return (self.objective_at_c_star <= self.objective_half + slack
                and self.objective_at_c_star <= self.objective_double + slack)


@dataclass(frozen=True)
class HolderReport:
    lhs: float
    rhs: float
    aux: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs


# ------------------------------------------------------------- transport terms


def product_transport_term(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                           backend: str = "dense") -> float:
    """``sum_ij mu_i nu_j d_ij^r``; the nfft backend uses moments (r=2) or |x-y| fast summation (r=1)."""
    if backend == "dense":
        C = pairwise_cost(mu, nu, cost)
        return math.fsum((C @ nu.weights * mu.weights).tolist())
    if cost.norm != "euclidean" or cost.r not in (1, 2):
        raise MeasureError("accelerated transport term needs a Euclidean cost with r in {1, 2}")
    if cost.r == 2:
        mX, nX = total_mass(mu), total_mass(nu)
        sx = (mu.weights[:, None] * mu.points**2).sum()
        sy = (nu.weights[:, None] * nu.points**2).sum()
        cross = float(mu.weights @ mu.points @ (nu.weights @ nu.points))
        return nX * sx + mX * sy - 2.0 * cross
    s = fast_kernel_sum(RadialKernel("energy"), nu.points, mu.points, nu.weights, FastsumConfig())
    return math.fsum((mu.weights * s).tolist())


# ------------------------------------------------------------- c* constants


def restricted_objective(c: float, transport: float, mX: float, nX: float, eta1: float, eta2: float) -> float:
    """Objective of the unregularized problem along ``c * pi`` for a probability coupling pi."""
    def kl(a, b):
        return a * math.log(a / b) + b - a if a > 0 else b

    return c * transport + eta1 * kl(c, mX) + eta2 * kl(c, nX)


def restricted_objective_reg(c: float, transport: float, mX: float, nX: float, eta1: float, eta2: float,
                             lam: float) -> float:
    """Regularized objective along ``c * (mu x nu)``; ``transport = <mu x nu, d^r>``."""
    M = mX * nX
    clogc = c * math.log(c) if c > 0 else 0.0
    return (c * transport + M / lam * (clogc - c + 1.0)
            + eta1 * (M * c * math.log(c * nX) + mX - c * M if c > 0 else mX)
            + eta2 * (M * c * math.log(c * mX) + nX - c * M if c > 0 else nX))


def c_star(transport: float, mX: float, nX: float, eta1: float, eta2: float) -> float:
    s = eta1 + eta2
    return math.exp(-transport / s) * mX ** (eta1 / s) * nX ** (eta2 / s)


def c_star_reg_value(transport: float, mX: float, nX: float, eta1: float, eta2: float, lam: float) -> float:
    s = eta1 + eta2 + 1.0 / lam
    return math.exp(-transport / (mX * nX * s)) * mX ** (-eta2 / s) * nX ** (-eta1 / s)


def c_star_reg(mu, nu, cost: CostSpec, eta1: float, eta2: float, lam: float) -> float:
    T = product_transport_term(mu, nu, cost)
    return c_star_reg_value(T, total_mass(mu), total_mass(nu), eta1, eta2, lam)


def upper_bound_constant_uot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                             eta1: float = 1.0, eta2: float | None = None, reference_plan=None,
                             backend: str = "dense") -> BoundReport:
    """Best multiple ``c * pi`` of a probability coupling of the normalized marginals.

    ``reference_plan`` defaults to the independence coupling P x Q.
    """
    eta2 = eta1 if eta2 is None else eta2
    if eta1 + eta2 <= 0:
        raise ValueError("need eta1 + eta2 > 0")
    mX, nX = total_mass(mu), total_mass(nu)
    if reference_plan is None:
        T = product_transport_term(mu, nu, cost, backend) / (mX * nX)
    else:
        pi = np.asarray(getattr(reference_plan, "matrix", reference_plan), dtype=np.float64)
        T = math.fsum((pi * pairwise_cost(mu, nu, cost)).ravel().tolist())
    c = c_star(T, mX, nX, eta1, eta2)
    f = lambda v: restricted_objective(v, T, mX, nX, eta1, eta2)  # noqa: E731
    return BoundReport(c, f(0.5 * c), f(c), f(2 * c), T, (mX, nX), {"eta1": eta1, "eta2": eta2, "r": cost.r})


def upper_bound_constant_uot_reg(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                                 eta1: float = 1.0, eta2: float | None = None, lam: float = 1.0,
                                 backend: str = "dense") -> BoundReport:
    """Optimal multiple of the product measure for the regularized problem."""
    eta2 = eta1 if eta2 is None else eta2
    if not lam > 0:
        raise ValueError("lambda must be positive")
    mX, nX = total_mass(mu), total_mass(nu)
    T = product_transport_term(mu, nu, cost, backend)
    c = c_star_reg_value(T, mX, nX, eta1, eta2, lam)
    f = lambda v: restricted_objective_reg(v, T, mX, nX, eta1, eta2, lam)  # noqa: E731
    return BoundReport(c, f(0.5 * c), f(c), f(2 * c), T, (mX, nX),
                       {"eta1": eta1, "eta2": eta2, "lam": lam, "r": cost.r})


# ------------------------------------------------------- Wasserstein bounds


def kl_normalized(m: DiscreteMeasure) -> float:
    """KL of the normalized measure against the measure itself: ``-log m(X) + m(X) - 1``."""
    mX = total_mass(m)
    return -math.log(mX) + mX - 1.0


def wasserstein_bound_uot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec = CostSpec(),
                          eta1: float = 1.0, eta2: float | None = None, w_r: float | None = None,
                          cfg: SinkhornConfig | None = None) -> HolderReport:
    """UOT against ``u w_r(P, Q) + eta1 KL(P|mu) + eta2 KL(Q|nu)`` with ``u = mu(X) nu(X)``."""
    eta2 = eta1 if eta2 is None else eta2
    if w_r is None:
        w_r = exact_wasserstein_1d(normalize(mu), normalize(nu), cost.r)
    u = total_mass(mu) * total_mass(nu)
    rhs = u * w_r + eta1 * kl_normalized(mu) + eta2 * kl_normalized(nu)
    res = uot(mu, nu, cost, cfg or surrogate_config(eta1, eta2))
    return HolderReport(res.primal, rhs, {"w_r": w_r, "u": u, "uot": res.primal,
                                          "converged": res.stats.converged})


def frobenius_bound(P: DiscreteMeasure, Q: DiscreteMeasure, cost: CostSpec = CostSpec(), eta: float = 1.0,
                    cfg: SinkhornConfig | None = None) -> HolderReport:
    """``w_r(P, Q) * UOT(P, Q)`` against the squared Frobenius norm of the cost matrix."""
    for m in (P, Q):
        if abs(total_mass(m) - 1.0) > 1e-12:
            raise MeasureError("frobenius bound needs probability measures")
    C = pairwise_cost(P, Q, cost)
    fro2 = math.fsum((C * C).ravel().tolist())
    w = exact_wasserstein_1d(P, Q, cost.r) if P.dim == 1 else math.nan
    val = uot(P, Q, cost, cfg or surrogate_config(eta)).primal
    return HolderReport(w * val, fro2, {"w_r": w, "uot": val, "frobenius_sq": fro2})


# ------------------------------------------------------------ Hoelder checks


def holder_check_balanced(P: DiscreteMeasure, Q: DiscreteMeasure, k: RadialKernel) -> HolderReport:
    """``MMD_k(P, Q) <= c W_{2 alpha}(P, Q)^alpha`` in 1D with the exact Wasserstein distance.

    ``W`` is the rooted distance, so the right side is ``c * w^(1/2)`` with
    ``w`` the unrooted cost of order 2 alpha.
    """
    if P.dim != 1 or Q.dim != 1:
        raise MeasureError("balanced Hoelder check needs d = 1")
    alpha, c = holder_constants(k)
    w = exact_wasserstein_1d(P, Q, 2 * alpha)
    lhs = math.sqrt(mmd_squared_dense(k, P, Q))
    return HolderReport(lhs, c * math.sqrt(w), {"w": w, "alpha": alpha, "c": c, "rhs_unrooted": c * w})


def holder_check_unbalanced(mu: DiscreteMeasure, nu: DiscreteMeasure, k: RadialKernel, eta: float = 8.0,
                            cfg: SinkhornConfig | None = None) -> HolderReport:
    """``MMD_k(mu, nu) <= c sqrt(u*) UOT^(1/2) + MMD_k(mu, mu*) + MMD_k(nu, nu*)``.

    UOT has order 2 alpha and marginal weights ``eta / c^2``; mu*, nu* are the
    marginals of its plan on the atoms of mu and nu.
    """
    alpha, c = holder_constants(k)
    cost = CostSpec(r=2 * alpha)
    cfg = cfg or surrogate_config(eta / c**2)
    res = uot(mu, nu, cost, cfg)
    row, col = _marginal_weights(res.potentials, mu, nu, cost, cfg)
    mu_s, nu_s = DiscreteMeasure(mu.points, row), DiscreteMeasure(nu.points, col)
    u_star = math.sqrt(total_mass(mu_s) * total_mass(nu_s))
    m_mu = math.sqrt(mmd_squared_dense(k, mu, mu_s, force=True))
    m_nu = math.sqrt(mmd_squared_dense(k, nu, nu_s, force=True))
    lhs = math.sqrt(mmd_squared_dense(k, mu, nu, force=True))
    value = max(res.primal, 0.0)
    rhs = c * math.sqrt(u_star) * math.sqrt(value) + m_mu + m_nu
    aux = {"uot": res.primal, "u_star": u_star, "mmd_mu_mustar": m_mu, "mmd_nu_nustar": m_nu,
           "alpha": alpha, "c": c, "rhs_literal_power": c * math.sqrt(u_star) * value**alpha + m_mu + m_nu,
           "converged": res.stats.converged}
    return HolderReport(lhs, rhs, aux)


# ----------------------------------------------------------- energy sweep


def convergence_sweep_energy(P: DiscreteMeasure, Ptilde: DiscreteMeasure, lam: float = 0.001,
                             etas=(1.0, 10.0, 100.0, 1000.0, 10000.0), tol: float = 1e-12,
                             max_iter: int = 100000, backend: str = "dense"):
    """Rows ``(eta, sd, e, |sd - e|)`` for the debiased r=1 divergence.

    ``e = MMD^2/2`` under the energy kernel, the value the debiased divergence
    tends to as lam -> 0 and eta -> infinity.
    """
    e = 0.5 * mmd_squared_dense(RadialKernel("energy"), P, Ptilde)
    rows = []
    for eta in etas:
        cfg = SinkhornConfig(lam=lam, eta1=eta, tol=tol, max_iter=max_iter)
        sd = sinkhorn_divergence(P, Ptilde, CostSpec(r=1.0), cfg, backend)
        rows.append((float(eta), sd, e, abs(sd - e)))
    return rows
