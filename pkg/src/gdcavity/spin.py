"""Spin operators, extended Stevens operators and the bare spin Hamiltonian.

All matrices are expressed in the |S_z> basis ordered by descending
projection, m = S, S-1, ..., -S.  Hamiltonians are returned as E/h in MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .constants import MU_B_OVER_H

STEVENS_TERMS = ((2, 0), (4, 0), (4, 4), (6, 0), (6, 4))


@dataclass(frozen=True)
class SpinParams:
    S: float = 3.5
    g_par: float = 1.991
    g_perp: float = 1.992

    def __post_init__(self):
        _check_spin(self.S)
        if not (self.g_par > 0 and self.g_perp > 0):
            raise ValueError(f"g-factors must be positive, got {self.g_par}, {self.g_perp}")

    @property
    def dim(self) -> int:
        return int(round(2 * self.S)) + 1


@dataclass(frozen=True)
class CrystalFieldParams:
    """Stevens coefficients B_k^q in MHz."""

    B20: float = 0.0
    B40: float = 0.0
    B44: float = 0.0
    B60: float = 0.0
    B64: float = 0.0

    def __post_init__(self):
        for name in ("B20", "B40", "B44", "B60", "B64"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def items(self):
        return ((k, q, getattr(self, f"B{k}{q}")) for k, q in STEVENS_TERMS)


@dataclass(frozen=True)
class ZeemanConfig:
    """Static field: signed magnitude (G), polar angle from the c-axis and
    azimuth in the a-b plane (degrees)."""

    H0: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 180.0:
            raise ValueError(f"theta must lie in [0, 180] deg, got {self.theta}")
        if not 0.0 <= self.phi < 360.0:
            raise ValueError(f"phi must lie in [0, 360) deg, got {self.phi}")

    def unit_vector(self) -> NDArray[np.float64]:
        t, p = np.radians(self.theta), np.radians(self.phi)
        return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])

    def field_vector(self) -> NDArray[np.float64]:
        return self.H0 * self.unit_vector()


@dataclass(frozen=True)
class SpinOperators:
    S: float
    sx: NDArray[np.complex128] = field(repr=False)
    sy: NDArray[np.complex128] = field(repr=False)
    sz: NDArray[np.complex128] = field(repr=False)
    splus: NDArray[np.complex128] = field(repr=False)
    sminus: NDArray[np.complex128] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    def axis(self, name: str) -> NDArray[np.complex128]:
        try:
            return {"x": self.sx, "y": self.sy, "z": self.sz}[name]
        except KeyError:
            raise ValueError(f"unknown axis {name!r}; expected x, y or z") from None


def _check_spin(S) -> None:
    twoS = 2 * S
    if not np.isfinite(twoS) or abs(twoS - round(twoS)) > 1e-12 or round(twoS) < 1:
        raise ValueError(f"S must be a positive integer or half-integer, got {S!r}")


def spin_projections(S: float) -> NDArray[np.float64]:
    """Projections m = S, S-1, ..., -S (basis order)."""
    _check_spin(S)
    n = int(round(2 * S)) + 1
    return S - np.arange(n, dtype=float)


@lru_cache(maxsize=None)
def _spin_operators_cached(twoS: int) -> SpinOperators:
    S = twoS / 2
    m = spin_projections(S)
    sz = np.diag(m).astype(complex)
    # <m+1|S+|m> sits on the superdiagonal because m descends along the basis
    ladder = np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1))
    splus = np.diag(ladder, k=1).astype(complex)
    sminus = splus.conj().T.copy()
    sx = 0.5 * (splus + sminus)
    sy = -0.5j * (splus - sminus)
    for arr in (sx, sy, sz, splus, sminus):
        arr.setflags(write=False)
    return SpinOperators(S, sx, sy, sz, splus, sminus)


def build_spin_operators(S: float) -> SpinOperators:
    """Angular momentum matrices for spin ``S`` (hbar = 1).

    Raises ValueError if ``S`` is not a positive (half-)integer.
    """
    _check_spin(S)
    return _spin_operators_cached(int(round(2 * S)))


@lru_cache(maxsize=None)
def _stevens_cached(twoS: int, k: int, q: int) -> NDArray[np.complex128]:
    ops = _spin_operators_cached(twoS)
    S = twoS / 2
    X = S * (S + 1)
    eye = np.eye(ops.dim)
    sz2 = ops.sz @ ops.sz
    sz4 = sz2 @ sz2
    sz6 = sz4 @ sz2
    if (k, q) == (2, 0):
        out = 3 * sz2 - X * eye
    elif (k, q) == (4, 0):
        out = 35 * sz4 - (30 * X - 25) * sz2 + (3 * X**2 - 6 * X) * eye
    elif (k, q) == (6, 0):
        out = (
            231 * sz6
            - (315 * X - 735) * sz4
            + (105 * X**2 - 525 * X + 294) * sz2
            + (-5 * X**3 + 40 * X**2 - 60 * X) * eye
        )
    else:
        p4 = np.linalg.matrix_power(ops.splus, 4) + np.linalg.matrix_power(ops.sminus, 4)
        if (k, q) == (4, 4):
            out = 0.5 * p4
        else:
            poly = 11 * sz2 - (X + 38) * eye
            out = 0.25 * (poly @ p4 + p4 @ poly)
    out = out.astype(complex)
    out.setflags(write=False)
    return out


def build_stevens_operator(S: float, k: int, q: int) -> NDArray[np.complex128]:
    """Extended Stevens operator O_k^q for the supported (k, q) pairs.

    Supported: (2,0), (4,0), (4,4), (6,0), (6,4).  The returned array is
    read-only and shared between calls.
    """
    _check_spin(S)
    if (k, q) not in STEVENS_TERMS:
        raise ValueError(f"unsupported Stevens operator O_{k}^{q}; supported: {STEVENS_TERMS}")
    return _stevens_cached(int(round(2 * S)), k, q)


def crystal_field_hamiltonian(S: float, cf: CrystalFieldParams) -> NDArray[np.complex128]:
    n = int(round(2 * S)) + 1
    H = np.zeros((n, n), dtype=complex)
    for k, q, b in cf.items():
        if b != 0.0:
            H += b * build_stevens_operator(S, k, q)
    return H


def zeeman_operator(sp: SpinParams, theta: float, phi: float = 0.0) -> NDArray[np.complex128]:
    """Zeeman term per Gauss of applied field along (theta, phi), in MHz/G."""
    ops = build_spin_operators(sp.S)
    hx, hy, hz = ZeemanConfig(1.0, theta, phi).unit_vector()
    return MU_B_OVER_H * (sp.g_perp * (hx * ops.sx + hy * ops.sy) + sp.g_par * hz * ops.sz)


def build_spin_hamiltonian(
    sp: SpinParams, cf: CrystalFieldParams, z: ZeemanConfig
) -> NDArray[np.complex128]:
    """Axial-g Zeeman plus crystal-field Hamiltonian, E/h in MHz."""
    return z.H0 * zeeman_operator(sp, z.theta, z.phi) + crystal_field_hamiltonian(sp.S, cf)
