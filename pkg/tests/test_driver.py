import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_instance
from otkhorn.core import ArgumentError, ConfigurationError, Termination, marginal_error, ot_cost
from otkhorn.driver import ApproxRequest, Method, approx_ot, iteration_bound, mix_marginals
from otkhorn.oracle import exact_ot_lp

METHODS = list(Method)
JSON_KEYS = {"method", "n", "eps", "eta", "eps_prime", "R", "bound_iterations", "actual_iterations",
             "cost", "wall_ns", "seed", "termination"}


def test_method_parse():
    assert Method.parse("greenkhorn") is Method.GREENKHORN
    assert Method.parse(Method.APDAMD) is Method.APDAMD
    with pytest.raises(ArgumentError):
        Method.parse("simplex")


def test_mix_marginals_examples():
    r, c = mix_marginals([1.0, 0.0], [0.5, 0.5], 0.8)
    np.testing.assert_allclose(r.weights, [0.95, 0.05])
    np.testing.assert_allclose(c.weights, [0.5, 0.5])
    r, _ = mix_marginals([0.2, 0.8], [0.5, 0.5], 1e-300)
    np.testing.assert_array_equal(r.weights, [0.2, 0.8])
    with pytest.raises(ArgumentError):
        mix_marginals([1.0], [1.0], 8.0)


@given(st.integers(1, 10), st.floats(1e-6, 7.9), st.integers(0, 2**32 - 1))
def test_mixing_error_bound(n, eps_prime, seed):
    rng = np.random.default_rng(seed)
    r, c = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    rm, cm = mix_marginals(r, c, eps_prime)
    er, ec = np.abs(rm.weights - r).sum(), np.abs(cm.weights - c).sum()
    # each side moves by (e/8)||r - 1/n||_1 <= (e/4)(1 - 1/n)
    assert max(er, ec) <= eps_prime / 4 * (1 - 1 / n) * (1 + 1e-12) + 1e-15
    assert er + ec <= eps_prime / 2 * (1 - 1 / n) * (1 + 1e-12) + 1e-15
    assert rm.weights.min() >= eps_prime / (8 * n) * (1 - 1e-12)


def test_mixing_combined_error_can_exceed_quarter():
    # point masses on opposite corners: the sum reaches (e/2)(1 - 1/n)
    r, c = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    rm, cm = mix_marginals(r, c, 1.0)
    err = np.abs(rm.weights - r).sum() + np.abs(cm.weights - c).sum()
    assert err == pytest.approx(0.25)
    rm, cm = mix_marginals(np.eye(3)[0], np.eye(3)[2], 1.0)
    err = np.abs(rm.weights - np.eye(3)[0]).sum() + np.abs(cm.weights - np.eye(3)[2]).sum()
    assert err == pytest.approx(1 / 3) and err > 1.0 / 4


@pytest.mark.parametrize("method", METHODS)
def test_unit_cost_gives_cost_one(method, rng):
    r, c = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    X, rep, rec = approx_ot(ApproxRequest(method, 0.5), np.ones((3, 3)), r, c)
    assert ot_cost(X, np.ones((3, 3))) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("eps", [0.5, 0.1, 0.02])
def test_additive_cost_is_constant(method, eps):
    C = np.array([[1.0, 2.0], [3.0, 4.0]])
    X, rep, _ = approx_ot(ApproxRequest(method, eps), C, [0.3, 0.7], [0.6, 0.4])
    assert ot_cost(X, C) == pytest.approx(2.8, abs=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_fixture_and_record(method, fixture_2x2):
    C, r, c = fixture_2x2
    X, rep, rec = approx_ot(ApproxRequest(method, 0.05), C, r, c)
    assert 0.3 - 1e-12 <= rec.cost <= 0.35
    assert marginal_error(X, r, c) <= 1e-12
    doc = rec.to_json()
    assert set(doc) == JSON_KEYS
    json.dumps(doc)
    assert doc["termination"] == "Converged"
    assert doc["eps_prime"] == pytest.approx(0.05 / 8)
    assert rep.stats["mixing_error"] <= doc["eps_prime"] / 4 * (1 + 1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_guarantee_against_oracle(method):
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        C, r, c = random_instance(rng, n, zero_free=False)
        for eps in (0.5, 0.1):
            X, rep, _ = approx_ot(ApproxRequest(method, eps, assert_bounds=True), C, r, c)
            assert ot_cost(X, C) <= exact_ot_lp(C, r, c).cost + eps
            assert rep.violations.get("solver_tolerance", 0) == 0


def test_zero_cost_returns_independent_coupling():
    r, c = np.array([0.2, 0.8]), np.array([0.5, 0.5])
    X, rep, rec = approx_ot(ApproxRequest(Method.SINKHORN, 0.1), np.zeros((2, 2)), r, c)
    np.testing.assert_allclose(X.entries, np.outer(r, c))
    assert rep.termination is Termination.CONVERGED and rec.cost == 0.0


def test_validation():
    with pytest.raises(ArgumentError):
        approx_ot(ApproxRequest(Method.SINKHORN, 0.1), [[1.0]], [1.0], [1.0])
    with pytest.raises(ArgumentError):
        approx_ot(ApproxRequest(Method.SINKHORN, 0.1), np.ones((2, 2)), [0.5, 0.5], [1.0, 0.0, 0.0])
    with pytest.raises(ConfigurationError):
        # ||C|| / eta far beyond the log-domain floor
        approx_ot(ApproxRequest(Method.SINKHORN, 1e-7), np.ones((2, 2)), [0.5, 0.5], [0.5, 0.5])
    with pytest.raises((ArgumentError, ConfigurationError)):
        ApproxRequest(Method.SINKHORN, 0.0)


def test_iteration_bounds_exist_where_known():
    assert iteration_bound(Method.SINKHORN, 3, 1.0, 1.0, 0.1) is None
    assert iteration_bound(Method.APDAGD, 3, 1.0, 1.0, 0.1) is None
    for m in (Method.GREENKHORN, Method.APDAMD, Method.RANDKHORN, Method.GANDKHORN):
        assert iteration_bound(m, 3, 1.0, 1.0, 0.1) > 0
