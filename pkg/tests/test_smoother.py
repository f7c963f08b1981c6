import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmcw_rio import lie
from fmcw_rio.estimator.losses import cauchy
from fmcw_rio.estimator.smoother import Factor, LinearFactor, PriorFactor, Smoother
from fmcw_rio.estimator.state import NAV_DIM, Extrinsics, NavState, VectorState
from oracles import linear_fixed_lag_vs_batch, random_state


def test_quadratic_toy_converges_in_one_iteration():
    A = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, -1.0]])
    b = np.array([1.0, 2.0, 0.5])
    sm = Smoother()
    sm.add_variable("x", VectorState([10.0, -7.0]))
    sm.add_factor(LinearFactor(["x"], [A], b))
    res = sm.optimize(max_iterations=1)
    assert len(res.iterations) == 1
    np.testing.assert_allclose(sm.values["x"].x, np.linalg.lstsq(A, b, rcond=None)[0], atol=1e-12)


class _Curved(Factor):
    """r = [10 (y - x^2), 1 - x], the Rosenbrock valley."""

    keys = ("x",)

    def linearize(self, values):
        x, y = values["x"].x
        return np.array([10 * (y - x * x), 1 - x]), [np.array([[-20 * x, 10.0], [-1.0, 0.0]])]


def test_cost_sequence_is_non_increasing():
    sm = Smoother(max_iterations=100, rel_tol=1e-14)
    sm.add_variable("x", VectorState([-1.2, 1.0]))
    sm.add_factor(_Curved())
    res = sm.optimize()
    accepted = [it for it in res.iterations if it.accepted]
    assert all(it.cost_after <= it.cost_before for it in accepted)
    costs = [accepted[0].cost_before] + [it.cost_after for it in accepted]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    np.testing.assert_allclose(sm.values["x"].x, [1.0, 1.0], atol=1e-6)


def test_robust_linear_fit_rejects_outlier():
    x = np.linspace(0, 1, 20)
    y = 2 * x + 1
    y[7] += 50
    sm = Smoother(max_iterations=50)
    sm.add_variable("ab", VectorState([0.0, 0.0]))
    for xi, yi in zip(x, y):
        sm.add_factor(LinearFactor(["ab"], [[[xi, 1.0]]], [yi], [[1 / 0.01]], loss=cauchy(1.0)))
    sm.optimize()
    np.testing.assert_allclose(sm.values["ab"].x, [2, 1], atol=1e-3)


def test_rank_deficiency_names_yaw():
    anchor = NavState()
    info = np.eye(NAV_DIM)
    info[2, 2] = 0.0
    sm = Smoother()
    sm.add_variable("n", NavState(lie.from_rpy(0.05, -0.02, 0.3), np.ones(3)))
    sm.add_factor(PriorFactor.from_information(["n"], [anchor], info))
    res = sm.optimize()
    assert res.diagnostics
    assert any("yaw" in d for d in res.diagnostics)
    np.testing.assert_allclose(sm.values["n"].p, 0.0, atol=1e-9)


def test_marginalization_matches_dense_oracle():
    rng = np.random.default_rng(0)
    F = np.array([[1.0, 0.1], [0.0, 1.0]])
    m0 = np.array([1.0, -0.5])
    P0 = np.array([[0.3, 0.05], [0.05, 0.2]])
    Q = np.diag([0.01, 0.02])
    b = rng.normal(0, 0.1, 2)

    sm = Smoother()
    sm.add_variable(0, VectorState(m0))
    sm.add_variable(1, VectorState(F @ m0 + b))
    sm.add_factor(PriorFactor.from_covariance(0, VectorState(m0), P0))
    sm.add_factor(LinearFactor([0, 1], [-F, np.eye(2)], b, np.linalg.inv(np.linalg.cholesky(Q))))
    sm.optimize()
    before = sm.values[1].x.copy()
    prior = sm.marginalize([0])

    np.testing.assert_allclose(prior.information(), np.linalg.inv(F @ P0 @ F.T + Q), rtol=1e-9, atol=1e-9)
    np.testing.assert_array_equal(sm.values[1].x, before)
    sm.optimize()
    np.testing.assert_allclose(sm.values[1].x, F @ m0 + b, atol=1e-9)
    np.testing.assert_allclose(sm.covariance([1]), F @ P0 @ F.T + Q, atol=1e-9)
    assert 0 not in sm.values


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_linear_fixed_lag_equals_batch(seed, lag):
    assert linear_fixed_lag_vs_batch(seed, steps=15, lag=lag) <= 1e-9


def test_singular_marginal_block_is_regularized():
    sm = Smoother()
    sm.add_variable("a", VectorState([0.0, 0.0]))
    sm.add_variable("b", VectorState([0.0]))
    sm.add_factor(LinearFactor(["a", "b"], [[[1.0, 0.0]], [[-1.0]]], [0.0]))
    sm.add_factor(LinearFactor(["b"], [[[1.0]]], [1.0]))
    sm.marginalize(["a"])
    assert any("singular" in d for d in sm.diagnostics)


def test_manifold_prior_round_trip():
    rng = np.random.default_rng(5)
    anchor = random_state(rng)
    cov = np.diag(rng.uniform(0.01, 0.1, NAV_DIM))
    sm = Smoother(max_iterations=20)
    sm.add_variable("n", anchor.retract(rng.normal(0, 0.1, NAV_DIM)))
    sm.add_factor(PriorFactor.from_covariance("n", anchor, cov))
    sm.optimize()
    np.testing.assert_allclose(anchor.local(sm.values["n"]), 0.0, atol=1e-9)
    np.testing.assert_allclose(sm.covariance(["n"]), cov, rtol=1e-6, atol=1e-15)


def test_fixed_variable_is_not_moved():
    sm = Smoother()
    ext = Extrinsics(lie.rot_z(0.1), np.array([0.1, 0, 0]))
    sm.add_variable("e", ext, fixed=True)
    sm.add_variable("x", VectorState([1.0]))
    sm.add_factor(LinearFactor(["x"], [[[1.0]]], [3.0]))
    sm.optimize()
    assert sm.values["e"] is ext
    assert sm.values["x"].x[0] == pytest.approx(3.0)


def test_unknown_keys_rejected():
    sm = Smoother()
    with pytest.raises(KeyError):
        sm.add_factor(LinearFactor(["x"], [[[1.0]]], [0.0]))
    sm.add_variable("x", VectorState([0.0]))
    with pytest.raises(KeyError):
        sm.add_variable("x", VectorState([0.0]))
