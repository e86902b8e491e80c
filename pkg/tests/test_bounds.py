import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from conftest import random_measure
from otkit.bounds import (c_star, c_star_reg_value, convergence_sweep_energy, frobenius_bound, holder_check_balanced,
                          holder_check_unbalanced, kl_normalized, product_transport_term, restricted_objective,
                          restricted_objective_reg, upper_bound_constant_uot, upper_bound_constant_uot_reg,
                          wasserstein_bound_uot)
from otkit.divergences import kl_divergence, mmd_elementary_bound, mmd_dense
from otkit.kernels import RadialKernel
from otkit.measures import CostSpec, DiscreteMeasure, normalize, pairwise_cost, sample_uniform, total_mass
from otkit.sinkhorn import SinkhornConfig, TransportPlan, primal_objective, uot

KERNELS = [RadialKernel(v) for v in ("gauss", "laplace", "imq", "energy")]


def delta(w, x=0.0):
    return DiscreteMeasure([[x]], [w])


# ------------------------------------------------------------ c* constants


def test_c_star_examples():
    assert upper_bound_constant_uot(delta(1.0), delta(1.0)).c_star == 1.0
    rep = upper_bound_constant_uot(delta(2.0), delta(8.0), eta1=1.0)
    assert abs(rep.c_star - 4.0) < 1e-14
    mu, nu = delta(2.0, 0.0), delta(8.0, 0.5)
    rep = upper_bound_constant_uot(mu, nu, CostSpec(r=2), eta1=1e6)
    assert math.isclose(rep.c_star, 4.0 * math.exp(-0.25 / 2e6), rel_tol=1e-14)


def test_c_star_reg_examples():
    assert upper_bound_constant_uot_reg(delta(1.0), delta(1.0), lam=1.0).c_star == 1.0
    rep = upper_bound_constant_uot_reg(delta(2.0), delta(3.0), eta1=1.0, lam=1.0)
    assert abs(rep.c_star - 6 ** (-1 / 3)) < 1e-14


@given(st.floats(0, 5), st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.1, 10), st.floats(0.1, 10))
def test_c_star_minimises_restricted_objective(T, mX, nX, e1, e2):
    c = c_star(T, mX, nX, e1, e2)
    opt = minimize_scalar(restricted_objective, bounds=(1e-9, 10 * max(mX, nX)), method="bounded",
                          args=(T, mX, nX, e1, e2), options={"xatol": 1e-12})
    f = restricted_objective(c, T, mX, nX, e1, e2)
    assert f <= opt.fun + 1e-10 * max(1.0, abs(f))


@given(st.floats(0, 5), st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.1, 10), st.floats(0.1, 10),
       st.floats(0.1, 100))
def test_c_star_reg_minimises_restricted_objective(T, mX, nX, e1, e2, lam):
    c = c_star_reg_value(T, mX, nX, e1, e2, lam)
    opt = minimize_scalar(restricted_objective_reg, bounds=(1e-12, 10 * c + 1), method="bounded",
                          args=(T, mX, nX, e1, e2, lam), options={"xatol": 1e-14})
    f = restricted_objective_reg(c, T, mX, nX, e1, e2, lam)
    assert f <= opt.fun + 1e-9 * max(1.0, abs(f))


def test_restricted_objective_reg_is_primal_on_scaled_product(rng):
    mu, nu = random_measure(rng, 6, 2, mass=2.0), random_measure(rng, 5, 2, mass=0.7)
    cfg = SinkhornConfig(lam=3.0, eta1=1.5, eta2=0.4)
    T = product_transport_term(mu, nu)
    for c in (0.3, 1.0, 2.5):
        pi = TransportPlan(c * np.outer(mu.weights, nu.weights))
        want = primal_objective(pi, mu, nu, CostSpec(), cfg)
        got = restricted_objective_reg(c, T, 2.0, 0.7, 1.5, 0.4, 3.0)
        assert math.isclose(got, want, rel_tol=1e-12)


def test_restricted_objective_on_scaled_coupling(rng):
    # unregularized objective of c * (P x Q): transport plus marginal KL terms
    mu, nu = random_measure(rng, 4, 1, mass=3.0), random_measure(rng, 6, 1, mass=0.5)
    P, Q = normalize(mu), normalize(nu)
    T = product_transport_term(P, Q)
    c = 0.8
    pi = c * np.outer(P.weights, Q.weights)
    want = ((pi * pairwise_cost(mu, nu)).sum() + 2.0 * kl_divergence(pi.sum(1), mu.weights)
            + 0.5 * kl_divergence(pi.sum(0), nu.weights))
    assert math.isclose(restricted_objective(c, T, 3.0, 0.5, 2.0, 0.5), want, rel_tol=1e-12)


def test_supplied_reference_plan(rng):
    mu, nu = random_measure(rng, 5, 1, mass=1.0), random_measure(rng, 5, 1, mass=1.0)
    prod = np.outer(mu.weights, nu.weights)
    a = upper_bound_constant_uot(mu, nu, eta1=1.0)
    b = upper_bound_constant_uot(mu, nu, eta1=1.0, reference_plan=prod)
    assert math.isclose(a.c_star, b.c_star, rel_tol=1e-13)


def test_certificates(rng):
    for _ in range(20):
        mu = random_measure(rng, 10, 2, mass=rng.uniform(0.1, 5))
        nu = random_measure(rng, 8, 2, mass=rng.uniform(0.1, 5))
        e1, e2, lam = rng.uniform(0.5, 5, 3)
        assert upper_bound_constant_uot(mu, nu, CostSpec(), e1, e2).certificate
        assert upper_bound_constant_uot_reg(mu, nu, CostSpec(), e1, e2, lam).certificate


def test_solver_below_reg_bound(rng):
    for _ in range(15):
        d = int(rng.integers(1, 4))
        mu = random_measure(rng, int(rng.integers(3, 40)), d, mass=rng.uniform(0.2, 4))
        nu = random_measure(rng, int(rng.integers(3, 40)), d, mass=rng.uniform(0.2, 4))
        r = float(rng.choice([1.0, 2.0]))
        lam, eta = float(rng.choice([1.0, 20.0, 100.0])), float(rng.choice([0.5, 1.0, 5.0]))
        res = uot(mu, nu, CostSpec(r=r), SinkhornConfig(lam=lam, eta1=eta, tol=1e-12, max_iter=50000))
        rep = upper_bound_constant_uot_reg(mu, nu, CostSpec(r=r), eta, eta, lam)
        assert res.primal <= rep.objective_at_c_star + 1e-9


@pytest.mark.parametrize("r", [1, 2])
def test_transport_term_backends(rng, r):
    mu, nu = random_measure(rng, 400, 2, mass=2.0), random_measure(rng, 300, 2)
    d = product_transport_term(mu, nu, CostSpec(r=r))
    f = product_transport_term(mu, nu, CostSpec(r=r), backend="nfft")
    assert math.isclose(d, f, rel_tol=1e-9)


# ------------------------------------------------------------ Wasserstein, Frobenius


def test_kl_normalized():
    m = DiscreteMeasure([[0.0], [1.0]], [1.0, 3.0])
    assert math.isclose(kl_normalized(m), 3 - math.log(4), rel_tol=1e-15)
    assert math.isclose(kl_normalized(m), kl_divergence(normalize(m).weights, m.weights), rel_tol=1e-13)
    assert kl_normalized(normalize(m)) == 0


def test_wasserstein_bound_identical():
    P = sample_uniform(20, 1, "probability", seed=4)
    rep = wasserstein_bound_uot(P, P, CostSpec(r=1), 1.0)
    assert rep.rhs == 0
    # only the entropic floor remains; the diagonal coupling costs H(P) / lam
    entropy = -np.sum(P.weights * np.log(P.weights))
    assert 0 <= rep.lhs <= entropy / 200.0 + 1e-12


def draw_instances(seed, count, mass):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, m = rng.integers(5, 30, 2)
        mu = DiscreteMeasure(rng.random((n, 1)), rng.uniform(0.1, 1, n))
        mu = mu.with_weights(mu.weights * mass / mu.weights.sum())
        nu = DiscreteMeasure(rng.random((m, 1)), rng.uniform(0.1, 1, m) * rng.uniform(0.5, 2))
        yield mu, nu


def test_wasserstein_bound_random():
    for mu, nu in draw_instances(1, 12, 1.0):
        for eta in (0.1, 1.0, 10.0):
            assert wasserstein_bound_uot(mu, nu, CostSpec(r=1), eta).gap >= -1e-8


def test_wasserstein_bound_surrogate_bias():
    # small mu(X): the lam = 200 surrogate overshoots by its entropy term; a larger lam restores the bound
    mu, nu = list(draw_instances(5, 64, 0.1))[63]
    assert wasserstein_bound_uot(mu, nu, CostSpec(r=1), 10.0).gap < -1e-3
    cfg = SinkhornConfig(lam=1000.0, eta1=10.0, tol=1e-10, max_iter=200000, lambda_schedule=(1.0, 20.0, 200.0, 1000.0))
    assert wasserstein_bound_uot(mu, nu, CostSpec(r=1), 10.0, cfg=cfg).gap >= 0


def test_frobenius_unit_atoms():
    rep = frobenius_bound(delta(1.0, 0.0), delta(1.0, 1.0), CostSpec(r=1))
    assert rep.aux["w_r"] == 1 and rep.rhs == 1
    assert rep.lhs <= 1


def test_frobenius_identical_and_random(rng):
    P = sample_uniform(30, 1, "probability", seed=8)
    rep = frobenius_bound(P, P, CostSpec(r=1))
    assert rep.lhs == 0 and rep.rhs > 0
    for s in range(5):
        P = sample_uniform(50, 1, "probability", seed=20 + s)
        Q = sample_uniform(50, 1, "probability", seed=40 + s)
        assert frobenius_bound(P, Q, CostSpec(r=1)).gap >= 0


# ------------------------------------------------------------ Hoelder checks


def test_holder_balanced_identical():
    P = sample_uniform(40, 1, "probability", seed=3)
    for k in KERNELS:
        rep = holder_check_balanced(P, P, k)
        assert rep.lhs == 0 and rep.rhs == 0


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: k.variant)
def test_holder_balanced_random(k):
    for s in range(60):
        P = sample_uniform(50, 1, "probability", seed=2 * s)
        Q = sample_uniform(50, 1, "probability", seed=2 * s + 1)
        assert holder_check_balanced(P, Q, k).gap >= -1e-10


def test_holder_balanced_matches_hand_values():
    P, Q = delta(1.0, 0.0), delta(1.0, 0.5)
    rep = holder_check_balanced(P, Q, RadialKernel("gauss"))
    # MMD^2 = 2 - 2 exp(-1/4), rhs = 2 * |x - y|
    assert math.isclose(rep.lhs, math.sqrt(2 - 2 * math.exp(-0.25)), rel_tol=1e-14)
    assert math.isclose(rep.rhs, 1.0, rel_tol=1e-15)


def test_holder_unbalanced_identical():
    mu = sample_uniform(30, 2, "unbalanced", seed=5)
    rep = holder_check_unbalanced(mu, mu, RadialKernel("gauss"), 8.0)
    assert rep.lhs == 0 and rep.rhs >= 0


def test_holder_unbalanced_sweep():
    mu = sample_uniform(60, 2, "probability", seed=100)
    nu = sample_uniform(60, 2, "probability", seed=200)
    prev = None
    for eta in (1.0, 8.0, 64.0):
        rep = holder_check_unbalanced(mu, nu, RadialKernel("gauss"), eta)
        assert rep.gap >= -1e-8
        side = (rep.aux["mmd_mu_mustar"], rep.aux["mmd_nu_nustar"])
        if prev is not None:
            assert side[0] <= 2 * prev[0] and side[1] <= 2 * prev[1]
        prev = side
    um = sample_uniform(40, 1, "unbalanced", seed=300)
    un = sample_uniform(50, 1, "unbalanced", seed=400)
    for k in KERNELS[:3]:
        assert holder_check_unbalanced(um, un, k, 8.0).gap >= -1e-8


def test_elementary_bound(rng):
    for k in KERNELS[:3]:
        for _ in range(10):
            mu, nu = random_measure(rng, 20, 2, mass=2.0), random_measure(rng, 15, 2, mass=0.5)
            assert mmd_dense(k, mu, nu) <= mmd_elementary_bound(k, mu, nu) + 1e-12


# ------------------------------------------------------------ energy sweep


def test_sweep_identical():
    P = sample_uniform(15, 1, "probability", seed=1)
    rows = convergence_sweep_energy(P, P, etas=(1.0, 100.0))
    for eta, sd, e, diff in rows:
        assert e == 0 and abs(sd) < 1e-9


def test_sweep_trend_and_symmetry():
    P = sample_uniform(25, 1, "probability", seed=1)
    Q = sample_uniform(25, 1, "probability", seed=2)
    etas = (1.0, 100.0, 10000.0)
    rows = convergence_sweep_energy(P, Q, etas=etas)
    back = convergence_sweep_energy(Q, P, etas=etas)
    assert len({r[2] for r in rows}) == 1
    assert rows[-1][3] < rows[0][3]
    for a, b in zip(rows, back):
        assert abs(a[1] - b[1]) < 1e-9
