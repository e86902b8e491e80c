"""Bregman / Kullback-Leibler divergences between unbalanced measures and dense MMD."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import kl_div

from .kernels import RadialKernel, evaluate, sup_norm
from .measures import DiscreteMeasure, MeasureError, distance_matrix, total_mass


@dataclass(frozen=True)
class ConvexGenerator:
    """Scalar convex ``phi`` on (0, inf) inducing a divergence between measures
    with shared atoms. ``phi_at_0`` is the limit of ``phi(z)`` as z -> 0."""

    phi: Callable
    phi_at_1: float
    dphi_at_1: float
    phi_at_0: float = 0.0
    name: str = ""


def _xlogx(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)


KL_GENERATOR = ConvexGenerator(_xlogx, 0.0, 1.0, 0.0, "kl")
CHI2_GENERATOR = ConvexGenerator(lambda z: (np.asarray(z) - 1.0) ** 2, 0.0, 0.0, 1.0, "chi2")


def _weights(m):
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=np.float64)


def _check_atoms(nu, mu):
    if isinstance(nu, DiscreteMeasure) and isinstance(mu, DiscreteMeasure) and not nu.same_atoms(mu):
        raise MeasureError("divergence requires identical atom lists")
    if _weights(nu).shape != _weights(mu).shape:
        raise MeasureError("divergence requires identical atom lists")


def bregman_divergence(gen: ConvexGenerator, nu, mu) -> float:
    """``sum_i phi(nu_i/mu_i) mu_i + phi'(1)(mu(X) - nu(X)) - phi(1) mu(X)``.

    ``nu`` and ``mu`` are measures on the same atoms (or raw weight vectors).
    """
    _check_atoms(nu, mu)
    a, b = _weights(nu), _weights(mu)
    if np.any(b <= 0):
        raise MeasureError("reference weights must be strictly positive")
    ma, mb = math.fsum(a), math.fsum(b)
    terms = np.asarray(gen.phi(a / b), dtype=np.float64) * b
    return math.fsum(terms) + gen.dphi_at_1 * (mb - ma) - gen.phi_at_1 * mb


def kl_divergence(nu, mu) -> float:
    """``sum nu_i log(nu_i/mu_i) + mu(X) - nu(X)``; ``+inf`` if some nu_i > 0 has mu_i = 0."""
    _check_atoms(nu, mu)
    terms = kl_div(_weights(nu), _weights(mu))
    if np.any(np.isinf(terms)):
        return math.inf
    return math.fsum(terms.ravel())


def kl_plan_divergence(pi, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """KL of a plan against the product measure ``mu x nu``."""
    pi = np.asarray(getattr(pi, "matrix", pi), dtype=np.float64)
    if pi.shape != (mu.n, nu.n):
        raise MeasureError(f"plan shape {pi.shape} does not match ({mu.n}, {nu.n})")
    prod = np.multiply.outer(mu.weights, nu.weights)
    return kl_divergence(pi.ravel(), prod.ravel())


# ------------------------------------------------------------------------- MMD


class MmdTerms(NamedTuple):
    kxx: float
    kxy: float
    kyy: float
    raw: float
    value: float


def _order_key(m: DiscreteMeasure):
    return (m.n, m.points.tobytes(), m.weights.tobytes())


def _quadratic_form(k: RadialKernel, a: DiscreteMeasure, b: DiscreteMeasure, chunk_elems: int = 1 << 22) -> float:
    """``sum_ij a_i b_j k(x_i, y_j)``: rows summed pairwise, row totals with fsum."""
    rows = max(1, chunk_elems // b.n)
    parts = []
    for s in range(0, a.n, rows):
        kk = evaluate(k, distance_matrix(a.points[s:s + rows], b.points))
        parts.append((kk * b.weights).sum(axis=1) * a.weights[s:s + rows])
    return math.fsum(np.concatenate(parts).tolist())


def mmd_terms_dense(k: RadialKernel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> MmdTerms:
    if mu.dim != nu.dim:
        raise MeasureError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    kxx = _quadratic_form(k, mu, mu)
    kyy = _quadratic_form(k, nu, nu)
    # the cross term is always evaluated in one canonical argument order
    a, b = (mu, nu) if _order_key(mu) <= _order_key(nu) else (nu, mu)
    kxy = _quadratic_form(k, a, b)
    raw = math.fsum([kxx, -2.0 * kxy, kyy])
    return MmdTerms(kxx, kxy, kyy, raw, max(raw, 0.0))


def mmd_squared_dense(k: RadialKernel, mu: DiscreteMeasure, nu: DiscreteMeasure, force: bool = False) -> float:
    """Squared MMD by three dense kernel quadratic forms (clamped at 0).

    The energy kernel is only a distance for equal masses; other inputs raise
    unless ``force`` is set.
    """
    if k.variant == "energy" and not force:
        if abs(total_mass(mu) - total_mass(nu)) > 1e-12 * max(total_mass(mu), total_mass(nu)):
            raise MeasureError("energy MMD is not a distance for measures of unequal mass (use force)")
    return mmd_terms_dense(k, mu, nu).value


def mmd_dense(k: RadialKernel, mu: DiscreteMeasure, nu: DiscreteMeasure, force: bool = False) -> float:
    return math.sqrt(mmd_squared_dense(k, mu, nu, force=force))


def mmd_elementary_bound(k: RadialKernel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``sqrt(||k||_inf (mu(X)^2 + nu(X)^2))`` for bounded kernels."""
    return math.sqrt(sup_norm(k) * (total_mass(mu) ** 2 + total_mass(nu) ** 2))
