import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares, minimize

from gdcavity.optimize import gauss_newton_covariance, levenberg_marquardt, nelder_mead, numerical_jacobian


def rosen(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def test_nelder_mead_rosenbrock_matches_scipy():
    x0 = np.array([-1.2, 1.0, 0.8])
    ours = nelder_mead(rosen, x0, xtol=1e-10, max_evals=50000)
    ref = minimize(rosen, x0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 50000, "adaptive": True})
    assert ours.success
    np.testing.assert_allclose(ours.x, ref.x, atol=1e-5)
    np.testing.assert_allclose(ours.x, 1.0, atol=1e-5)
    assert all(np.diff(ours.history) <= 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 2.0))
def test_nelder_mead_respects_bounds(cx, cy, width):
    lo, hi = np.array([-width, -width]), np.array([width, width])
    seen = []

    def f(x):
        seen.append(np.array(x))
        return (x[0] - cx) ** 2 + (x[1] - cy) ** 2

    res = nelder_mead(f, [0.0, 0.0], bounds=list(zip(lo, hi)), xtol=1e-9)
    pts = np.array(seen)
    assert np.all(pts >= lo - 1e-15) and np.all(pts <= hi + 1e-15)
    np.testing.assert_allclose(res.x, np.clip([cx, cy], lo, hi), atol=1e-6)


def test_nelder_mead_budget_and_ftol():
    res = nelder_mead(rosen, [-1.2, 1.0], max_evals=20)
    assert not res.success and res.nfev >= 20
    res = nelder_mead(lambda x: float(x @ x), [0.0, 0.0], ftol_abs=1e-12)
    assert res.success and res.nit == 0


def exp_model(rng):
    t = np.linspace(0, 4, 60)
    y = 2.5 * np.exp(-1.3 * t) + 0.4 + 0.01 * rng.standard_normal(t.size)
    return t, y, lambda p: p[0] * np.exp(-p[1] * t) + p[2] - y


def test_levenberg_marquardt_matches_scipy(rng):
    t, y, resid = exp_model(rng)
    ours = levenberg_marquardt(resid, [1.0, 0.5, 0.0], xtol=1e-12)
    ref = least_squares(resid, [1.0, 0.5, 0.0], method="lm", xtol=1e-14, ftol=1e-14)
    assert ours.success
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-6)
    assert ours.fun == pytest.approx(2 * ref.cost, rel=1e-8)


def test_levenberg_marquardt_bounds_and_limits(rng):
    t, y, resid = exp_model(rng)
    res = levenberg_marquardt(resid, [1.0, 0.5, 0.0], bounds=[(0, 10), (0, 1.0), (-1, 1)])
    assert res.x[1] == pytest.approx(1.0)
    res = levenberg_marquardt(resid, [1.0, 0.5, 0.0], max_iter=1, xtol=1e-30)
    assert not res.success and res.message == "iteration limit reached"


def test_jacobian_and_covariance_linear_model(rng):
    X = np.column_stack([np.ones(30), np.linspace(0, 1, 30)])
    y = X @ [1.0, 2.0] + 0.1 * rng.standard_normal(30)
    resid = lambda p: X @ p - y  # noqa: E731
    J = numerical_jacobian(resid, np.zeros(2), np.full(2, 1e-3))
    np.testing.assert_allclose(J, X, atol=1e-9)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r = resid(beta)
    cov = gauss_newton_covariance(J, float(r @ r), 30)
    s2 = r @ r / 28
    np.testing.assert_allclose(cov, s2 * np.linalg.inv(X.T @ X), rtol=1e-8)
