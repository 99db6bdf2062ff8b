"""Small optimizers used by the spectral fits.

``nelder_mead`` is a bounded derivative-free simplex (adaptive coefficients,
trial points mirrored into the box) and ``levenberg_marquardt`` a projected damped
Gauss-Newton solver with central-difference Jacobians.  Both record the best
objective after every accepted iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray


@dataclass
class OptimizeResult:
    x: NDArray[np.float64]
    fun: float
    success: bool
    message: str
    nit: int = 0
    nfev: int = 0
    history: list[float] = field(default_factory=list)
    jac: NDArray[np.float64] | None = None


def _clip(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


def _mirror(x, lower, upper):
    """Fold points that overshoot a bound back inside, then clip."""
    x = np.where(x > upper, 2 * upper - x, x)
    x = np.where(x < lower, 2 * lower - x, x)
    return _clip(x, lower, upper)


def _bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lo, hi = (np.asarray(b, dtype=float) for b in zip(*bounds))
    return lo, hi


def nelder_mead(
    fun: Callable[[NDArray], float],
    x0,
    *,
    bounds=None,
    initial_step=0.05,
    xtol: float = 1e-6,
    ftol_abs: float = 0.0,
    max_evals: int = 20000,
    max_restarts: int = 5,
) -> OptimizeResult:
    """Minimize ``fun`` by the adaptive Nelder-Mead simplex.

    Converges when every vertex lies within ``xtol * max(1, |x_best|)`` of
    the best vertex (per coordinate) or when the best value drops to
    ``ftol_abs``.  Trial points overshooting ``bounds`` are mirrored back
    into the box.  A converged run is restarted from a fresh simplex at its
    best point for as long as that keeps lowering the objective (at most
    ``max_restarts`` times).
    """
    x0 = np.asarray(x0, dtype=float)
    lo, hi = _bounds(bounds, x0.size)
    counter = [0]

    def f(x):
        counter[0] += 1
        val = float(fun(x))
        return val if np.isfinite(val) else np.inf

    res = _simplex_run(f, x0, lo, hi, initial_step, xtol, ftol_abs, max_evals, counter)
    for _ in range(max_restarts):
        if not res.success or res.fun <= ftol_abs:
            break
        again = _simplex_run(f, res.x, lo, hi, initial_step, xtol, ftol_abs, max_evals, counter)
        improved = again.fun < res.fun
        history = res.history + [min(v, res.fun) for v in again.history]
        nit = res.nit + again.nit
        if improved:
            res = again
        res.history, res.nit = history, nit
        if not improved:
            break
    res.nfev = counter[0]
    return res


def _simplex_run(f, x0, lo, hi, initial_step, xtol, ftol_abs, max_evals, counter) -> OptimizeResult:
    n = x0.size
    alpha, gamma = 1.0, 1.0 + 2.0 / n
    rho, sigma = 0.75 - 1.0 / (2 * n), 1.0 - 1.0 / n

    steps = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))
    sim = [_clip(x0, lo, hi)]
    for i in range(n):
        v = sim[0].copy()
        h = steps[i] * abs(v[i]) if v[i] != 0 else 2.5e-4
        if v[i] + h > hi[i]:
            h = -h
        v[i] = v[i] + h
        sim.append(_clip(v, lo, hi))
    sim = np.array(sim)
    fs = np.array([f(v) for v in sim])
    history: list[float] = []
    nit = 0

    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        history.append(float(fs[0]))
        spread = np.abs(sim[1:] - sim[0]).max()
        if fs[0] <= ftol_abs:
            return OptimizeResult(sim[0], fs[0], True, "objective at tolerance", nit, 0, history)
        if spread <= xtol * max(1.0, np.abs(sim[0]).max()):
            return OptimizeResult(sim[0], fs[0], True, "simplex converged", nit, 0, history)
        if counter[0] >= max_evals:
            return OptimizeResult(sim[0], fs[0], False, "evaluation budget exhausted", nit, 0, history)
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        xr = _mirror(centroid + alpha * (centroid - sim[-1]), lo, hi)
        fr = f(xr)
        if fr < fs[0]:
            xe = _mirror(centroid + gamma * (xr - centroid), lo, hi)
            fe = f(xe)
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = _mirror(centroid + rho * (xr - centroid), lo, hi)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = _mirror(centroid - rho * (centroid - sim[-1]), lo, hi)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + sigma * (sim[1:] - sim[0])
        fs[1:] = [f(v) for v in sim[1:]]


def numerical_jacobian(residual, x, step) -> NDArray[np.float64]:
    """Central-difference Jacobian with per-coordinate absolute ``step``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = step[i]
        cols.append((residual(x + d) - residual(x - d)) / (2 * step[i]))
    return np.array(cols).T


def levenberg_marquardt(
    residual: Callable[[NDArray], NDArray],
    x0,
    *,
    bounds=None,
    rel_step: float = 1e-6,
    min_step: float = 1e-12,
    xtol: float = 1e-8,
    max_iter: int = 500,
    lam0: float = 1e-3,
    jac: Callable[[NDArray], NDArray] | None = None,
) -> OptimizeResult:
    """Minimize sum(residual(x)**2) by damped Gauss-Newton.

    The Jacobian is central-differenced with step ``rel_step * max(|x_i|,
    min_step/rel_step)``.  Converges when an accepted step satisfies
    ``|dx| < xtol * (|x| + xtol)`` or when no damping level yields a
    decrease (machine-precision minimum).  Fails after ``max_iter``
    iterations.  An analytic Jacobian may be supplied as ``jac(x)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo, hi = _bounds(bounds, x.size)
    x = _clip(x, lo, hi)
    nfev = 0

    def res(v):
        nonlocal nfev
        nfev += 1
        return np.asarray(residual(v), dtype=float)

    r = res(x)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    J = None
    for it in range(1, max_iter + 1):
        if jac is None:
            J = numerical_jacobian(res, x, np.maximum(rel_step * np.abs(x), min_step))
        else:
            J = np.asarray(jac(x), dtype=float)
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-30)
        while True:
            try:
                dx = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(A + lam * np.diag(diag), -g, rcond=None)[0]
            x_new = _clip(x + dx, lo, hi)
            dx = x_new - x
            r_new = res(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                break
            lam *= 10.0
            if lam > 1e16 or not np.any(dx):
                return OptimizeResult(x, cost, True, "no further decrease", it, nfev, history, J)
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        if np.linalg.norm(dx) < xtol * (np.linalg.norm(x) + xtol) or cost == 0.0:
            return OptimizeResult(x, cost, True, "step tolerance reached", it, nfev, history, J)
    return OptimizeResult(x, cost, False, "iteration limit reached", max_iter, nfev, history, J)


def gauss_newton_covariance(J: NDArray, cost: float, n_data: int) -> NDArray[np.float64]:
    """Approximate parameter covariance s^2 (J^T J)^+ with s^2 = cost/(m - n)."""
    n = J.shape[1]
    dof = max(n_data - n, 1)
    return (cost / dof) * np.linalg.pinv(J.T @ J)
