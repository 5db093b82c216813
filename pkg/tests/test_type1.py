import numpy as np
import pytest

from sparse_duality.core import HyperState, dual_data_fit
from sparse_duality.penalties import PenaltyFamily
from sparse_duality.type1 import (Type1Options, solve_type1, type1_gamma_objective,
                                  type1_objective, x_from_gamma_type1)

from conftest import random_dictionary, sparse_problem


def test_gaussian_penalty_is_ridge(rng):
    phi = random_dictionary(rng, 8, 5)
    y = rng.standard_normal(8)
    rep = solve_type1(phi, PenaltyFamily.gaussian(), 0.7, y)
    ridge = np.linalg.solve(phi.T @ phi + 0.7 * np.eye(5), phi.T @ y)
    np.testing.assert_allclose(rep.x_hat, ridge, atol=1e-10)


def test_scalar_lasso_against_grid():
    rep = solve_type1(np.eye(1), PenaltyFamily.lp(1.0), 2.0, [3.0])
    grid = np.linspace(-5, 5, 10 ** 6 + 1)
    oracle = grid[np.argmin((3 - grid) ** 2 + 2 * np.abs(grid))]
    assert rep.x_hat[0] == pytest.approx(2.0, abs=1e-6)
    assert rep.x_hat[0] == pytest.approx(oracle, abs=1e-5)


@pytest.mark.parametrize("pen", [PenaltyFamily.lp(0.5), PenaltyFamily.lp(1.0),
                                 PenaltyFamily.log_sum(0.1)], ids=str)
def test_zero_signal(rng, pen):
    rep = solve_type1(random_dictionary(rng, 5, 8), pen, 0.5, np.zeros(5))
    assert np.all(rep.x_hat == 0.0)


@pytest.mark.parametrize("pen", [PenaltyFamily.lp(0.01), PenaltyFamily.lp(0.5),
                                 PenaltyFamily.lp(1.0), PenaltyFamily.log_sum(0.05)], ids=str)
def test_trace_monotone(pen):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        phi, _, y = sparse_problem(rng, 20, 30, 4, noise=0.05)
        rep = solve_type1(phi, pen, 0.1, y)
        trace = np.asarray(rep.objective_trace)
        assert len(trace) == rep.iterations + 1
        assert np.all(np.diff(trace) <= 1e-10 * np.maximum(1.0, np.abs(trace[:-1])))


def test_stationary_point_gradient(rng):
    phi = random_dictionary(rng, 10, 6)
    y = rng.standard_normal(10)
    pen = PenaltyFamily.lp(1.5)
    opts = Type1Options(epsilon_smooth=0.0, max_iters=5000, tol=1e-13)
    rep = solve_type1(phi, pen, 0.3, y, opts)
    x = rep.x_hat
    assert np.all(x != 0)

    def cost(v):
        return type1_objective(phi, pen, 0.3, y, v)

    h = 1e-6
    grad = np.array([(cost(x + h * e) - cost(x - h * e)) / (2 * h) for e in np.eye(6)])
    assert np.linalg.norm(grad) < 1e-6


@pytest.mark.parametrize("p", [0.3, 1.0, 1.7])
def test_small_lambda_square_dictionary(rng, p):
    phi = random_dictionary(rng, 5, 5)
    y = rng.standard_normal(5)
    rep = solve_type1(phi, PenaltyFamily.lp(p), 1e-12, y)
    np.testing.assert_allclose(rep.x_hat, np.linalg.solve(phi, y), atol=1e-8)


def test_sparse_recovery_low_noise():
    rng = np.random.default_rng(5)
    phi, x0, y = sparse_problem(rng, 40, 60, 5, noise=1e-4)
    rep = solve_type1(phi, PenaltyFamily.lp(0.5), 1e-3, y)
    assert set(np.flatnonzero(rep.x_hat)) == set(np.flatnonzero(x0))


def test_gamma_objective_scalar():
    val = type1_gamma_objective(np.eye(1), PenaltyFamily.ard(), HyperState([1.0], 1.0), [3.0])
    assert val == pytest.approx(4.5)


def test_gamma_objective_sentinel(rng):
    val = type1_gamma_objective(random_dictionary(rng, 3, 4), PenaltyFamily.ard(),
                                HyperState([1.0, 0.0, 1.0, 2.0], 1.0), rng.standard_normal(3))
    assert val == -np.inf


def test_gamma_objective_composition(rng):
    phi = random_dictionary(rng, 4, 6)
    gamma = rng.uniform(0.1, 2, 6)
    y = rng.standard_normal(4)
    pen = PenaltyFamily.lp(0.5)
    hyp = HyperState(gamma, 0.3)
    expected = dual_data_fit(phi, hyp, y) + np.sum(np.log(gamma)) + np.sum(pen.f(gamma))
    assert type1_gamma_objective(phi, pen, hyp, y) == pytest.approx(expected, rel=1e-12)


def test_gamma_space_minimum_matches_x_space(rng):
    # at the Type I solution, the gamma-space cost at gamma* equals (x-space cost)/lam + n log lam
    phi = random_dictionary(rng, 6, 4)
    y = rng.standard_normal(6)
    pen = PenaltyFamily.lp(1.5)
    lam = 0.4
    rep = solve_type1(phi, pen, lam, y, Type1Options(epsilon_smooth=0.0, max_iters=3000,
                                                      tol=1e-13))
    gamma = pen.gamma_star(rep.x_hat ** 2)
    x_space = type1_objective(phi, pen, lam, y, rep.x_hat)
    g_space = type1_gamma_objective(phi, pen, HyperState(gamma, lam), y)
    # y^T Sigma^-1 y = min_x ||y-Phi x||^2/lam + sum x^2/gamma, and x^2/gamma + log gamma + f = h(x^2)
    assert g_space == pytest.approx(x_space / lam, rel=1e-8)
    np.testing.assert_allclose(x_from_gamma_type1(phi, HyperState(gamma, lam), y), rep.x_hat,
                               atol=1e-8)


def test_invalid_lambda(rng):
    with pytest.raises(ValueError):
        solve_type1(np.eye(2), PenaltyFamily.lp(1.0), 0.0, [1.0, 2.0])


def test_option_validation():
    with pytest.raises(ValueError):
        Type1Options(tol=0)
    with pytest.raises(ValueError):
        Type1Options(max_iters=0)
