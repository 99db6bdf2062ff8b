"""Fit of crystal-field, cavity and coupling parameters to dressed-line positions.

The data are resonance positions of the lower and upper branches of the
avoided crossing, E4 - E2 and E5 - E2, as a function of the static field.
The fit is a bounded simplex search with restarts, followed by a
Levenberg-Marquardt refinement with the exact (Hellmann-Feynman) Jacobian,
which resolves the weakly constrained sixth-order coefficients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .config import FIT_PARAMS
from .dicke import DickeConfig, _track, dicke_hamiltonian_stack, hamiltonian_derivative, sweep_spectrum
from .optimize import (
    gauss_newton_covariance,
    levenberg_marquardt,
    nelder_mead,
)
from .reflection import _parabolic_vertex

LOWER, UPPER = 0, 1
BRANCH_NAMES = ("lower", "upper")

# internal normalization of each free parameter
SCALES = {
    "B20": 1000.0,
    "B40": 1.0,
    "B44": 10.0,
    "B60": 1e-3,
    "B64": 1e-2,
    "omega_c": 1e4,
    "theta": 100.0,
    "gc": 100.0,
}


@dataclass
class DipData:
    fields: NDArray[np.float64]
    freqs: NDArray[np.float64]
    branch: NDArray[np.int64]
    weights: NDArray[np.float64] | None = None

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.branch = np.asarray(self.branch, dtype=int)
        if self.weights is None:
            self.weights = np.ones_like(self.freqs)
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.fields.size
        if not (self.freqs.size == self.branch.size == self.weights.size == n):
            raise ValueError("dip data columns differ in length")
        if np.any(self.freqs <= 0):
            raise ValueError("dip frequencies must be positive")
        if np.any((self.branch != LOWER) & (self.branch != UPPER)):
            raise ValueError("branch must be 0 (lower) or 1 (upper)")
        keys = set(zip(self.fields.tolist(), self.branch.tolist()))
        if len(keys) != n:
            raise ValueError("at most one dip per (field, branch) is allowed")

    def __len__(self) -> int:
        return self.fields.size

    def take(self, idx) -> "DipData":
        return DipData(self.fields[idx], self.freqs[idx], self.branch[idx], self.weights[idx])


def predict_lines(cfg: DickeConfig, fields: ArrayLike) -> tuple[NDArray, NDArray]:
    """Lower (E4 - E2) and upper (E5 - E2) branch frequencies over ``fields``."""
    spec = sweep_spectrum(cfg, fields, ((2, 4), (2, 5)))
    return spec.freqs[:, 0], spec.freqs[:, 1]


def synthesize_dips(cfg: DickeConfig, fields: ArrayLike) -> DipData:
    """Noiseless dip data for both branches at every field."""
    h = np.asarray(fields, dtype=float)
    lower, upper = predict_lines(cfg, h)
    return DipData(
        np.concatenate([h, h]),
        np.concatenate([lower, upper]),
        np.concatenate([np.full(h.size, LOWER), np.full(h.size, UPPER)]),
    )


def crossing_weights(data: DipData, crossing_field: float, window: float = 10.0, factor: float = 3.0):
    """Weights up-scaled by ``factor`` within +-``window`` G of +-``crossing_field``."""
    near = np.abs(np.abs(data.fields) - abs(crossing_field)) <= window
    return np.where(near, factor, 1.0)


def extract_dips(
    power_db: ArrayLike,
    fields: ArrayLike,
    freqs: ArrayLike,
    prominence_db: float = 1.0,
    omega_c: float | None = None,
) -> tuple[DipData, list[float]]:
    """Resonance positions from a reflected-power map (fields x freqs, dB).

    In each field column the two deepest local minima lying at least
    ``prominence_db`` below the column maximum are located to sub-bin
    precision by a three-point parabola.  Two dips are labeled by frequency
    order; a lone dip is labeled by its side of ``omega_c`` (lower if no
    ``omega_c`` is given).  Columns without a qualifying dip are returned in
    the skipped list.
    """
    P = np.asarray(power_db, dtype=float)
    h = np.asarray(fields, dtype=float)
    f = np.asarray(freqs, dtype=float)
    if P.shape != (h.size, f.size):
        raise ValueError(f"map shape {P.shape} does not match grid ({h.size}, {f.size})")
    if f.size < 3 or np.any(np.diff(f) <= 0):
        raise ValueError("frequency grid must be increasing with at least 3 points")
    rows_h, rows_f, rows_b, skipped = [], [], [], []
    for hj, col in zip(h, P):
        idx = np.flatnonzero((col[1:-1] < col[:-2]) & (col[1:-1] <= col[2:])) + 1
        idx = idx[col.max() - col[idx] >= prominence_db]
        if idx.size == 0:
            skipped.append(float(hj))
            continue
        idx = np.sort(idx[np.argsort(col[idx], kind="stable")][:2])
        pos = [_parabolic_vertex(f, col, i) for i in idx]
        if len(pos) == 2:
            branches = [LOWER, UPPER]
        else:
            branches = [UPPER if omega_c is not None and pos[0] > omega_c else LOWER]
        for p, b in zip(pos, branches):
            rows_h.append(hj)
            rows_f.append(p)
            rows_b.append(b)
    return DipData(rows_h, rows_f, rows_b), skipped


@dataclass
class FitProblem:
    data: DipData
    base: DickeConfig
    free: list[str]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    init: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    restarts: int = 3
    max_evals: int = 20000
    xtol: float = 1e-6

    def __post_init__(self):
        if not self.free:
            raise ValueError("at least one free parameter is required")
        for name in self.free:
            if name not in FIT_PARAMS:
                raise ValueError(f"unknown fit parameter {name!r}")
        base_values = current_values(self.base)
        self.init = {name: self.init.get(name, base_values[name]) for name in self.free}
        defaults = default_bounds(self.init)
        self.bounds = {name: tuple(self.bounds.get(name, defaults[name])) for name in self.free}
        for name in self.free:
            lo, hi = self.bounds[name]
            if not lo <= self.init[name] <= hi:
                raise ValueError(f"initial {name}={self.init[name]} outside bounds {lo, hi}")


@dataclass
class FitResult:
    params: dict[str, float]
    uncertainties: dict[str, float]
    cost: float
    history: list[float]
    success: bool
    message: str
    nit: int
    nfev: int

    def config(self, base: DickeConfig) -> DickeConfig:
        return base.with_values(**self.params)


def current_values(cfg: DickeConfig) -> dict[str, float]:
    return {
        "B20": cfg.cf.B20,
        "B40": cfg.cf.B40,
        "B44": cfg.cf.B44,
        "B60": cfg.cf.B60,
        "B64": cfg.cf.B64,
        "omega_c": cfg.cavity.omega_c,
        "theta": cfg.zeeman.theta,
        "gc": cfg.gc,
    }


def default_bounds(values: dict[str, float]) -> dict[str, tuple[float, float]]:
    out = {}
    for name, v in values.items():
        if name == "omega_c":
            out[name] = (v - 200.0, v + 200.0)
        elif name == "theta":
            out[name] = (max(0.0, v - 10.0), min(180.0, v + 10.0))
        elif name == "gc":
            out[name] = (0.0, max(2.0 * v, 1.0))
        else:
            half = max(0.5 * abs(v), 0.5 * SCALES[name])
            out[name] = (v - half, v + half)
    return out


class _Objective:
    def __init__(self, prob: FitProblem):
        self.prob = prob
        self.names = list(prob.free)
        self.scale = np.array([SCALES[n] for n in self.names])
        self.ufields, self.col = np.unique(prob.data.fields, return_inverse=True)
        self.branch = prob.data.branch
        self.sqrt_w = np.sqrt(prob.data.weights)

    def config(self, x) -> DickeConfig:
        values = dict(zip(self.names, (np.asarray(x) * self.scale).tolist()))
        return self.prob.base.with_values(**values)

    def residual(self, x) -> NDArray[np.float64]:
        try:
            lower, upper = predict_lines(self.config(x), self.ufields)
        except ValueError:
            return np.full(len(self.prob.data), 1e6)
        pred = np.where(self.branch == LOWER, lower[self.col], upper[self.col])
        return self.sqrt_w * (pred - self.prob.data.freqs)

    def cost(self, x) -> float:
        r = self.residual(x)
        return float(r @ r)

    def jacobian(self, x) -> NDArray[np.float64]:
        """Exact residual Jacobian in scaled coordinates (Hellmann-Feynman).

        d(E_f - E_2)/dp = <f|dH/dp|f> - <2|dH/dp|2>; the Kramers-degenerate
        pair at zero field is harmless because every parameter either keeps
        time-reversal symmetry or enters multiplied by the field.
        """
        cfg = self.config(x)
        h = self.ufields
        _, V = np.linalg.eigh(dicke_hamiltonian_stack(cfg, h))
        labels = _track(h, V)
        rows = np.arange(h.size)
        picked = {k: V[rows, :, labels[:, k - 1]] for k in (2, 4, 5)}
        final = np.where((self.branch == LOWER)[:, None], picked[4][self.col], picked[5][self.col])
        initial = picked[2][self.col]
        field = h[self.col]
        J = np.empty((len(self.prob.data), len(self.names)))
        for j, name in enumerate(self.names):
            static, per_gauss = hamiltonian_derivative(cfg, name)
            def expect(v):
                return np.real(np.einsum("ki,ij,kj->k", v.conj(), static, v)
                               + field * np.einsum("ki,ij,kj->k", v.conj(), per_gauss, v))
            J[:, j] = (expect(final) - expect(initial)) * self.scale[j]
        return self.sqrt_w[:, None] * J


def fit_crystal_field(prob: FitProblem, ftol_abs: float = 1e-18) -> FitResult:
    """Weighted least-squares fit of the free parameters to the dip positions.

    Deterministic for a given problem (including ``seed``).  If neither the
    simplex nor the refinement converges within budget the best iterate is
    returned with ``success=False``.
    """
    n_free = len(prob.free)
    if len(prob.data) < 2 * n_free:
        raise ValueError(f"need at least {2 * n_free} dip points for {n_free} free parameters")
    obj = _Objective(prob)
    x0 = np.array([prob.init[n] for n in obj.names]) / obj.scale
    bounds = [(prob.bounds[n][0] / s, prob.bounds[n][1] / s) for n, s in zip(obj.names, obj.scale)]
    rng = np.random.default_rng(prob.seed)

    res = nelder_mead(
        obj.cost, x0, bounds=bounds, xtol=prob.xtol, ftol_abs=ftol_abs, max_evals=prob.max_evals
    )
    history = list(res.history)
    x, fx, nit, nfev, converged = res.x, res.fun, res.nit, res.nfev, res.success
    for k in range(prob.restarts):
        if fx <= ftol_abs:
            break
        step = 0.02 * 0.5**k * (1.0 + rng.random(n_free)) * rng.choice([-1.0, 1.0], n_free)
        res = nelder_mead(
            obj.cost, x, bounds=bounds, initial_step=step, xtol=prob.xtol,
            ftol_abs=ftol_abs, max_evals=prob.max_evals,
        )
        nit, nfev = nit + res.nit, nfev + res.nfev
        if res.fun <= fx:
            x, fx = res.x, res.fun
            converged = converged or res.success
        history.extend(min(v, history[-1]) for v in res.history)

    jac = None
    if fx > ftol_abs:
        lm = levenberg_marquardt(obj.residual, x, bounds=bounds, xtol=1e-12, max_iter=300, jac=obj.jacobian)
        nit, nfev = nit + lm.nit, nfev + lm.nfev
        if lm.fun <= fx:
            x, fx = lm.x, lm.fun
            converged = converged or lm.success
        history.extend(min(v, history[-1]) for v in lm.history)
        jac = lm.jac
    if jac is None:
        jac = obj.jacobian(x)
    cov = gauss_newton_covariance(jac, fx, len(prob.data)) * np.outer(obj.scale, obj.scale)
    sigma = np.sqrt(np.abs(np.diag(cov)))
    values = x * obj.scale
    return FitResult(
        params=dict(zip(obj.names, values.tolist())),
        uncertainties=dict(zip(obj.names, sigma.tolist())),
        cost=float(fx),
        history=history,
        success=bool(converged),
        message="converged" if converged else "no convergence within budget",
        nit=nit,
        nfev=nfev,
    )


def write_dips_csv(data: DipData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["H0_G", "freq_MHz", "branch", "weight"])
        for h, f, b, wt in zip(data.fields, data.freqs, data.branch, data.weights):
            w.writerow([f"{h:.9g}", f"{f:.9g}", BRANCH_NAMES[b], f"{wt:.9g}"])


def read_dips_csv(path: str | Path) -> DipData:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or [c.strip() for c in rows[0]][:3] != ["H0_G", "freq_MHz", "branch"]:
        raise ValueError(f"{path}: expected header 'H0_G,freq_MHz,branch,weight'")
    h, f, b, w = [], [], [], []
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            h.append(float(r[0]))
            f.append(float(r[1]))
            b.append(BRANCH_NAMES.index(r[2].strip()))
            w.append(float(r[3]) if len(r) > 3 and r[3].strip() else 1.0)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed dip row {r!r}") from exc
    return DipData(h, f, b, w)
