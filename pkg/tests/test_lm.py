import numpy as np
import pytest
from scipy import optimize

from sixday.errors import NoConvergence
from sixday.lm import levenberg_marquardt, numeric_jacobian


def exp_problem(seed=3):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 4, 30)
    y = 2.5 * np.exp(-1.3 * t) + 0.5 + rng.normal(0, 0.02, t.size)

    def resid(p):
        return y - (p[0] * np.exp(-p[1] * t) + p[2])

    return resid


def test_matches_scipy_least_squares():
    resid = exp_problem()
    ours = levenberg_marquardt(resid, numeric_jacobian(resid), [1.0, 1.0, 0.0])
    ref = optimize.least_squares(resid, [1.0, 1.0, 0.0], method="lm", xtol=1e-14, ftol=1e-14)
    np.testing.assert_allclose(ours.params, ref.x, rtol=1e-6)
    assert ours.sse == pytest.approx(2 * ref.cost, rel=1e-8)


def test_linear_covariance_matches_ols():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 25)
    y = 1.0 + 2.0 * x + rng.normal(0, 0.1, x.size)
    X = np.column_stack([np.ones_like(x), x])

    def resid(p):
        return y - X @ p

    fit = levenberg_marquardt(resid, lambda p: -X, [0.0, 0.0])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    s2 = np.sum((y - X @ beta) ** 2) / (x.size - 2)
    np.testing.assert_allclose(fit.params, beta, rtol=1e-9)
    np.testing.assert_allclose(fit.covariance, s2 * np.linalg.inv(X.T @ X), rtol=1e-6)


def test_exact_solution_stops_early():
    fit = levenberg_marquardt(lambda p: p - 3.0, lambda p: np.eye(1), [3.0])
    assert fit.iterations == 0 and fit.sse == 0.0


def test_iteration_cap():
    resid = exp_problem()
    with pytest.raises(NoConvergence):
        levenberg_marquardt(resid, numeric_jacobian(resid), [1.0, 1.0, 0.0], max_iter=1, rtol=0.0)
