import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_instance
from otkhorn.apd import (
    DualProblem,
    MirrorMap,
    apdagd,
    apdamd,
    apdamd_bound,
    approx_ot_apdagd,
    approx_ot_apdamd,
    ot_dual_problem,
    step_size,
    x_of_lambda_ot,
)
from otkhorn.core import SolverConfig, Termination, dual_phi, marginal_error, ot_cost


def test_primal_map_examples():
    np.testing.assert_allclose(x_of_lambda_ot(np.zeros(2), np.zeros(2), np.zeros((2, 2)), 1.0), math.exp(-1))
    eta = 0.3
    h = np.full(3, eta / 2)
    np.testing.assert_allclose(x_of_lambda_ot(h, h, np.zeros((3, 3)), eta), 1.0)


def test_objective_matches_scaled_dual(rng):
    C, r, c = random_instance(rng, 3)
    eta = 0.4
    P = ot_dual_problem(C, eta, r, c)
    a, b = rng.normal(size=3), rng.normal(size=3)
    lam = -np.concatenate([a, b])
    assert P.objective(lam) == pytest.approx(dual_phi(a, b, C, eta, r, c), rel=1e-12)
    np.testing.assert_allclose(P.primal_map(lam), x_of_lambda_ot(a, b, C, eta), rtol=1e-13)


def test_gradient_matches_central_differences(rng):
    for _ in range(20):
        C, r, c = random_instance(rng, 3)
        eta = rng.uniform(0.3, 2.0)
        P = ot_dual_problem(C, eta, r, c)
        lam = rng.normal(scale=0.5, size=6)
        g = P.gradient(lam)
        h = 1e-6
        fd = np.array([(P.objective(lam + h * e) - P.objective(lam - h * e)) / (2 * h) for e in np.eye(6)])
        assert np.abs(fd - g).max() <= 1e-5 * max(1.0, np.abs(g).max())


def test_first_step_size():
    assert step_size(1.0, 1.0, 0.0) == 1.0
    a = step_size(3.0, 2.0, 0.7)
    assert 3.0 * 2.0 * a * a == pytest.approx(0.7 + a)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(1e-3, 10))
def test_scaled_quadratic_step_is_prox_argmin(n, seed, alpha):
    rng = np.random.default_rng(seed)
    phi = MirrorMap.scaled_quadratic(n)
    z, g = rng.normal(size=2 * n), rng.normal(size=2 * n)
    w = phi.step(z, g, alpha)
    # stationarity of <g, w> + B(w, z) / alpha
    np.testing.assert_allclose(g + (phi.gradient(w) - phi.gradient(z)) / alpha, 0.0, atol=1e-10)
    np.testing.assert_allclose(w, z - n * alpha * g)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_scaled_quadratic_bregman_bounds(n, seed):
    rng = np.random.default_rng(seed)
    phi = MirrorMap.scaled_quadratic(n)
    z, w = rng.normal(size=2 * n), rng.normal(size=2 * n)
    B = phi.bregman(z, w)
    sup = np.abs(z - w).max()
    assert B >= sup**2 / (2 * phi.delta) * (1 - 1e-12)
    assert B <= sup**2 * (1 + 1e-12)


def test_euclidean_map():
    phi = MirrorMap.euclidean()
    z, w = np.array([3.0, 4.0]), np.zeros(2)
    assert phi.bregman(z, w) == pytest.approx(12.5)
    assert phi.norm(z) == pytest.approx(5.0)
    np.testing.assert_allclose(phi.step(z, np.ones(2), 2.0), [1.0, 2.0])


def _quadratic_problem(A, b):
    # min 1/2 ||x||^2 s.t. Ax = b; oracle answer is pinv(A) b
    def evaluate(lam):
        x = -A.T @ lam
        return float(lam @ b + 0.5 * x @ x), b - A @ x, x

    return DualProblem(
        objective=lambda lam: evaluate(lam)[0],
        gradient=lambda lam: evaluate(lam)[1],
        primal_map=lambda lam: -A.T @ lam,
        apply_A=lambda x: A @ x,
        b=b,
        a_norm_1to1=float(np.abs(A).sum(axis=0).max()),
        evaluate=evaluate,
    )


@pytest.mark.parametrize("which", ["apdamd", "apdagd"])
def test_generic_problem_least_norm(which):
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 6))
    b = rng.normal(size=3)
    P = _quadratic_problem(A, b)
    cfg = SolverConfig(1e-8, max_iter=50_000)
    if which == "apdamd":
        x, rep, _ = apdamd(P, MirrorMap.scaled_quadratic(3), 1e-8, cfg)
    else:
        x, rep, _ = apdagd(P, 1e-8, cfg)
    assert rep.termination is Termination.CONVERGED
    np.testing.assert_allclose(x, np.linalg.pinv(A) @ b, atol=1e-6)


def test_line_search_gives_up_on_nan():
    P = _quadratic_problem(np.eye(2), np.ones(2))
    broken = DualProblem(
        objective=P.objective,
        gradient=P.gradient,
        primal_map=P.primal_map,
        apply_A=P.apply_A,
        b=P.b,
        a_norm_1to1=1.0,
        evaluate=lambda lam: (float("nan"), np.full(2, np.nan), np.zeros(2)),
    )
    _, rep, _ = apdamd(broken, MirrorMap.euclidean(), 1e-6, SolverConfig(1e-6))
    assert rep.termination is Termination.NUMERICAL_FAILURE


def test_apdamd_small_instance_residual_bound(rng):
    C = rng.uniform(size=(3, 3))
    u = np.full(3, 1 / 3)
    P = ot_dual_problem(C, 0.5, u, u)
    x, rep, st = apdamd(P, MirrorMap.scaled_quadratic(3), 1e-4, SolverConfig(1e-4, assert_bounds=True))
    assert rep.termination is Termination.CONVERGED
    assert np.abs(P.apply_A(x) - P.b).sum() <= 1e-4
    assert rep.checks["residual_bound"] == rep.iterations
    assert rep.violations.get("residual_bound", 0) == 0
    assert rep.violations.get("step_identity", 0) == 0
    assert st.alpha_bar == pytest.approx(rep.stats["alpha_bar"])


def test_apdagd_is_apdamd_with_euclidean_map(rng):
    C, r, c = random_instance(rng, 3)
    P = ot_dual_problem(C, 0.5, r, c)
    x1, rep1, _ = apdagd(P, 1e-4, SolverConfig(1e-4))
    x2, rep2, _ = apdamd(P, MirrorMap.euclidean(), 1e-4, SolverConfig(1e-4), name="apdagd")
    assert [(t.error, t.dual_f) for t in rep1.trace] == [(t.error, t.dual_f) for t in rep2.trace]
    np.testing.assert_array_equal(x1, x2)
    _, rep3, _ = apdamd(P, MirrorMap.scaled_quadratic(3), 1e-4, SolverConfig(1e-4))
    assert rep1.final_error <= 1e-4 and rep3.final_error <= 1e-4


def test_apdagd_skips_bound_checks(rng):
    C, r, c = random_instance(rng, 3)
    _, rep, _ = apdagd(ot_dual_problem(C, 0.5, r, c), 1e-3, SolverConfig(1e-3, assert_bounds=True))
    assert "alpha_bar_growth" not in rep.checks


def test_iteration_ceiling_formula():
    assert apdamd_bound(2.0, 4.0, 1.5, 0.5) == pytest.approx(1 + 4 * math.sqrt(2) * 2 * math.sqrt(4 * 2 / 0.5))


@pytest.mark.parametrize("pipeline", [approx_ot_apdamd, approx_ot_apdagd])
def test_pipeline_examples(pipeline, fixture_2x2, rng):
    u = np.full(4, 0.25)
    X, _ = pipeline(np.ones((4, 4)), u, u, 0.3)
    assert ot_cost(X, np.ones((4, 4))) == pytest.approx(1.0, abs=1e-14)
    C, r, c = fixture_2x2
    X, rep = pipeline(C, r, c, 0.05)
    assert 0.3 - 1e-12 <= ot_cost(X, C) <= 0.35
    assert marginal_error(X, r, c) <= 1e-12
    assert rep.termination is Termination.CONVERGED
