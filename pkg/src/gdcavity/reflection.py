"""Input-output reflection model of a cavity loaded by a two-level spin line.

All rates and frequencies are ordinary frequencies in MHz; the formula is
homogeneous in them, so the 2*pi factors cancel.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .optimize import gauss_newton_covariance, levenberg_marquardt


@dataclass(frozen=True)
class ReflectionParams:
    omega_c: float
    kappa_c: float
    kappa_e: float
    omega_s: float
    gc2L: float
    gamma_s: float

    def __post_init__(self):
        if not self.gamma_s > 0:
            raise ValueError("gamma_s must be > 0")
        if self.gc2L < 0:
            raise ValueError("gc2L must be >= 0")


@dataclass
class ReflectionTrace:
    freqs: NDArray[np.float64]
    power: NDArray[np.float64]

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must have the same length")
        if np.any(self.power < 0):
            raise ValueError("reflected power must be non-negative")

    def db(self, offset: float = 0.0) -> NDArray[np.float64]:
        return 10.0 * np.log10(self.power) + offset


@dataclass
class S11Fit:
    gc2L: float
    gamma_s: float
    sigma_gc2L: float
    sigma_gamma_s: float
    covariance: NDArray[np.float64]
    residual_norm: float
    success: bool
    message: str
    iterations: int
    history: list[float]


def s11_squared(p: ReflectionParams, omega: ArrayLike) -> NDArray[np.float64]:
    """|S11|^2 at probe frequency ``omega`` (MHz)."""
    w = np.asarray(omega, dtype=float)
    spin = p.gc2L**2 / (1j * (w - p.omega_s) - p.gamma_s)
    s11 = 1.0 + p.kappa_e / (1j * (w - p.omega_c) - p.kappa_c + spin)
    return np.abs(s11) ** 2


def cooperativity(gc: float, kappa_c: float, gamma_s: float) -> float:
    return gc**2 / (kappa_c * gamma_s)


def synthesize_trace(
    p: ReflectionParams, freqs: ArrayLike, noise: float = 0.0, rng=None
) -> ReflectionTrace:
    """Model trace with optional multiplicative Gaussian noise of relative size ``noise``."""
    f = np.asarray(freqs, dtype=float)
    power = s11_squared(p, f)
    if noise > 0:
        rng = np.random.default_rng(rng)
        power = np.clip(power * (1.0 + noise * rng.standard_normal(f.size)), 0.0, None)
    return ReflectionTrace(f, power)


def dip_frequencies(trace: ReflectionTrace, max_dips: int = 2) -> NDArray[np.float64]:
    """Frequencies of the deepest local minima, sorted ascending (parabolic refinement)."""
    p, f = trace.power, trace.freqs
    idx = np.flatnonzero((p[1:-1] < p[:-2]) & (p[1:-1] <= p[2:])) + 1
    idx = idx[np.argsort(p[idx])][:max_dips]
    out = [_parabolic_vertex(f, p, i) for i in idx]
    return np.sort(np.array(out))


def _parabolic_vertex(x, y, i):
    x0, x1, x2 = x[i - 1 : i + 2]
    y0, y1, y2 = y[i - 1 : i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    return -b / (2 * a) if a > 0 else x1


def fit_s11(
    trace: ReflectionTrace,
    omega_c: float,
    kappa_c: float,
    kappa_e: float,
    omega_s: float,
    gc2L: float = 50.0,
    gamma_s: float = 5.0,
) -> S11Fit:
    """Least-squares fit of (gc2L, gamma_s) with the cavity parameters held fixed.

    Returns a fit with ``success=False`` (carrying the last iterate) when the
    iteration budget runs out.
    """
    if trace.freqs.size < 20:
        raise ValueError("need at least 20 trace points")
    base = ReflectionParams(omega_c, kappa_c, kappa_e, omega_s, abs(gc2L), max(gamma_s, 1e-9))

    def residual(x):
        p = dataclasses.replace(base, gc2L=abs(x[0]), gamma_s=max(x[1], 1e-12))
        return s11_squared(p, trace.freqs) - trace.power

    res = levenberg_marquardt(
        residual,
        [gc2L, gamma_s],
        bounds=[(0.0, np.inf), (1e-9, np.inf)],
        rel_step=1e-6,
        min_step=1e-9,
        xtol=1e-8,
        max_iter=500,
    )
    cov = gauss_newton_covariance(res.jac, res.fun, trace.freqs.size)
    sig = np.sqrt(np.abs(np.diag(cov)))
    return S11Fit(
        gc2L=float(abs(res.x[0])),
        gamma_s=float(res.x[1]),
        sigma_gc2L=float(sig[0]),
        sigma_gamma_s=float(sig[1]),
        covariance=cov,
        residual_norm=float(np.sqrt(res.fun)),
        success=res.success,
        message=res.message,
        iterations=res.nit,
        history=res.history,
    )


def write_trace_csv(trace: ReflectionTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_MHz", "power_linear"])
        for f, p in zip(trace.freqs, trace.power):
            w.writerow([f"{f:.9g}", f"{p:.9g}"])


def read_trace_csv(path: str | Path) -> ReflectionTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["freq_MHz", "power_linear"]:
        raise ValueError(f"{path}: expected header 'freq_MHz,power_linear'")
    body = [r for r in rows[1:] if r]
    data = np.array([[float(a), float(b)] for a, b in body]) if body else np.empty((0, 2))
    return ReflectionTrace(data[:, 0], data[:, 1])
