import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_measure
from otkit.divergences import (CHI2_GENERATOR, KL_GENERATOR, bregman_divergence, kl_divergence,
                               kl_plan_divergence, mmd_dense, mmd_elementary_bound, mmd_squared_dense,
                               mmd_terms_dense)
from otkit.kernels import RadialKernel
from otkit.measures import DiscreteMeasure, MeasureError


def delta(w, x=0.0):
    return DiscreteMeasure([[x]], [w])


def mmd2_loop(kfun, mu, nu):
    """Literal three-term sum with scalar math."""
    def q(a, b):
        return math.fsum(wa * wb * kfun(math.dist(x, y))
                         for x, wa in zip(a.points.tolist(), a.weights)
                         for y, wb in zip(b.points.tolist(), b.weights))
    return q(mu, mu) - 2 * q(mu, nu) + q(nu, nu)


SCALAR = {
    "gauss": lambda t: math.exp(-t * t),
    "laplace": lambda t: math.exp(-t),
    "imq": lambda t: 1 / math.sqrt(t * t + 1),
    "energy": lambda t: -t,
}


def test_bregman_examples():
    mu = delta(2.0)
    assert bregman_divergence(KL_GENERATOR, mu, mu) == 0
    assert bregman_divergence(CHI2_GENERATOR, mu, mu) == 0
    assert math.isclose(bregman_divergence(KL_GENERATOR, delta(1.0), delta(2.0)), 1 - math.log(2), rel_tol=1e-15)
    assert bregman_divergence(CHI2_GENERATOR, delta(2.0), delta(1.0)) == 1


def test_kl_examples():
    m = DiscreteMeasure([[0], [1]], [0.3, 0.9])
    assert kl_divergence(m, m) == 0
    assert math.isclose(kl_divergence(delta(1.0), delta(2.0)), 1 - math.log(2), rel_tol=1e-15)
    mu = DiscreteMeasure([[0], [1], [2]], [1.0, 2.0, 1.0])
    P = DiscreteMeasure(mu.points, mu.weights / 4)
    assert math.isclose(kl_divergence(P, mu), 3 - math.log(4), rel_tol=1e-14)
    assert kl_divergence(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == math.inf
    with pytest.raises(MeasureError):
        kl_divergence(delta(1.0, 0.0), delta(1.0, 1.0))


@given(st.lists(st.floats(1e-3, 10), min_size=1, max_size=20), st.integers(0, 2**31))
def test_kl_matches_bregman_and_is_nonnegative(w, seed):
    rng = np.random.default_rng(seed)
    a = np.array(w)
    b = rng.uniform(1e-3, 10, a.size)
    kl = kl_divergence(a, b)
    assert kl >= -1e-12
    assert math.isclose(kl, bregman_divergence(KL_GENERATOR, a, b), rel_tol=1e-9, abs_tol=1e-12)


def test_kl_plan_examples():
    mu = DiscreteMeasure([[0], [1]], [0.4, 0.6])
    nu = DiscreteMeasure([[0], [2], [3]], [0.2, 0.3, 0.5])
    prod = np.outer(mu.weights, nu.weights)
    assert kl_plan_divergence(prod, mu, nu) == 0
    half = kl_plan_divergence(prod / 2, mu, nu)
    assert math.isclose(half, 0.5 * math.log(0.5) + 0.5, rel_tol=1e-14)
    assert math.isclose(kl_plan_divergence(np.zeros((2, 3)), mu, nu), 1.0, rel_tol=1e-15)
    with pytest.raises(MeasureError):
        kl_plan_divergence(np.zeros((3, 2)), mu, nu)


def test_mmd_examples():
    mu = DiscreteMeasure([[0.1, 0.2], [0.5, 0.5]], [0.3, 0.7])
    for v in ("gauss", "laplace", "imq", "energy"):
        assert abs(mmd_squared_dense(RadialKernel(v), mu, mu)) <= 1e-12
    ell = 0.7
    a, b = delta(1.0, 0.0), delta(1.0, ell)
    assert math.isclose(mmd_squared_dense(RadialKernel("gauss", ell), a, b), 2 - 2 * math.exp(-1), rel_tol=1e-15)
    assert mmd_squared_dense(RadialKernel("energy"), delta(1.0, 0.0), delta(1.0, 1.0)) == 2


def test_energy_refuses_unequal_mass():
    k = RadialKernel("energy")
    with pytest.raises(MeasureError):
        mmd_squared_dense(k, delta(1.0), delta(2.0, 1.0))
    assert mmd_squared_dense(k, delta(1.0), delta(2.0, 1.0), force=True) == 4


@pytest.mark.parametrize("variant", ["gauss", "laplace", "imq", "energy"])
def test_mmd_against_loop(rng, variant):
    k = RadialKernel(variant)
    for d in (1, 2, 3):
        mu = random_measure(rng, 17, d, mass=1.0)
        nu = random_measure(rng, 11, d, mass=1.0)
        ref = mmd2_loop(SCALAR[variant], mu, nu)
        assert math.isclose(mmd_squared_dense(k, mu, nu), ref, rel_tol=1e-12, abs_tol=1e-15)


def test_mmd_chunking_is_invisible(rng):
    from otkit import divergences
    mu, nu = random_measure(rng, 300, 2), random_measure(rng, 200, 2)
    k = RadialKernel("laplace")
    full = divergences._quadratic_form(k, mu, nu)
    small = divergences._quadratic_form(k, mu, nu, chunk_elems=1000)
    assert math.isclose(full, small, rel_tol=1e-14)


def test_mmd_symmetric_and_terms(rng):
    mu, nu = random_measure(rng, 30, 2), random_measure(rng, 40, 2)
    k = RadialKernel("imq")
    assert mmd_squared_dense(k, mu, nu) == mmd_squared_dense(k, nu, mu)
    t = mmd_terms_dense(k, mu, nu)
    assert math.isclose(t.kxx - 2 * t.kxy + t.kyy, mmd_squared_dense(k, mu, nu), rel_tol=1e-14)
    assert t.value == mmd_squared_dense(k, mu, nu)
    assert mmd_dense(k, mu, nu) == math.sqrt(mmd_squared_dense(k, mu, nu))


def test_elementary_bound_examples():
    assert mmd_elementary_bound(RadialKernel("gauss"), delta(1.0), delta(1.0, 3.0)) == math.sqrt(2)
    assert mmd_elementary_bound(RadialKernel("imq", imq_c=2.0), delta(1.0), delta(1.0, 3.0)) == 1


def test_elementary_bound_holds(rng):
    for i in range(100):
        v = ("gauss", "laplace", "imq")[i % 3]
        k = RadialKernel(v, length_scale=rng.uniform(0.1, 2), imq_c=rng.uniform(0.5, 2))
        mu = random_measure(rng, int(rng.integers(1, 30)), int(rng.integers(1, 4)), mass=rng.uniform(0.1, 5))
        nu = random_measure(rng, int(rng.integers(1, 30)), mu.dim, mass=rng.uniform(0.1, 5))
        assert math.sqrt(mmd_squared_dense(k, mu, nu)) <= mmd_elementary_bound(k, mu, nu) + 1e-12
