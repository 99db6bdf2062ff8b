"""Single-spin and ensemble coupling from a vacuum-field map.

Field maps hold the rms vacuum field of the resonator mode (Gauss) on a
regular grid in micrometres.  Each node is treated as the centre of a cell,
so integrals are midpoint-rule sums.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ellipe, ellipk

from .constants import GAMMA_E, HBAR, MU_0, PLANCK, TESLA_TO_GAUSS
from .dicke import EigenSystem, _index
from .spin import build_spin_operators

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class FieldMap:
    x: NDArray[np.float64]
    y: NDArray[np.float64]
    z: NDArray[np.float64]
    H: NDArray[np.float64]  # (nx, ny, nz, 3), Gauss
    pref_dbm: float | None = None

    def __post_init__(self):
        for name in AXES:
            ax = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, ax)
            if ax.ndim != 1 or ax.size < 1:
                raise ValueError(f"{name} axis must be a non-empty 1-D array")
            if ax.size > 1:
                d = np.diff(ax)
                if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-6, atol=0):
                    raise ValueError(f"{name} axis is not uniformly spaced")
        H = np.asarray(self.H, dtype=float)
        object.__setattr__(self, "H", H)
        if H.shape != (self.x.size, self.y.size, self.z.size, 3):
            raise ValueError(f"field array shape {H.shape} does not match the grid")
        if not np.all(np.isfinite(H)):
            raise ValueError("field map contains non-finite values")

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(float(ax[1] - ax[0]) if ax.size > 1 else 1.0 for ax in (self.x, self.y, self.z))

    @property
    def cell_volume(self) -> float:
        dx, dy, dz = self.spacing
        return dx * dy * dz

    @property
    def volume(self) -> float:
        return self.cell_volume * self.x.size * self.y.size * self.z.size

    def scaled(self, factor: float) -> "FieldMap":
        return dataclasses.replace(self, H=self.H * factor)


@dataclass(frozen=True)
class CouplingEstimate:
    gc: float  # MHz
    g0: float  # Hz
    Ns: float
    Vm: float  # um^3 actually integrated
    integral: float  # G^2 um^3

    def __post_init__(self):
        if self.Ns > 0 and not math.isclose(self.gc * 1e6, self.g0 * math.sqrt(self.Ns), rel_tol=1e-9):
            raise ValueError("inconsistent estimate: gc != g0 sqrt(Ns)")


def vacuum_power(omega_c: float, kappa_c: float) -> float:
    """Single-photon drive power hbar*omega_c*kappa_c/2 in dBm (rates in angular units)."""
    if omega_c <= 0 or kappa_c <= 0:
        raise ValueError("omega_c and kappa_c must be positive")
    watts = HBAR * (2 * math.pi * omega_c * 1e6) * (2 * math.pi * kappa_c * 1e6) / 2
    return 10 * math.log10(watts / 1e-3)


def photon_number(pin_dbm: float, omega_c: float, kappa_c: float) -> float:
    """Intra-cavity photon bound P_in / (h nu_c kappa_c), with ordinary frequencies."""
    if omega_c <= 0 or kappa_c <= 0:
        raise ValueError("omega_c and kappa_c must be positive")
    if pin_dbm == -math.inf:
        return 0.0
    watts = 1e-3 * 10 ** (pin_dbm / 10)
    return watts / (PLANCK * omega_c * 1e6 * kappa_c * 1e6)


def spin_density(
    concentration: float = 5e-4, sites_per_cell: int = 4, a: float = 5.24, c: float = 11.38
) -> float:
    """Dopant density in spins / um^3 for a tetragonal cell with lattice constants in Angstrom."""
    cell_um3 = a * a * c * 1e-12
    return concentration * sites_per_cell / cell_um3


def matrix_element(es: EigenSystem, i: int, f: int, axis: str) -> float:
    """|<f| I_photon (x) S_axis |i>| for 1-based labels."""
    ii, ff = _index(i, es.dim), _index(f, es.dim)
    op = build_spin_operators(es.S).axis(axis)
    full = np.kron(np.eye(es.n_max + 1), op)
    return float(abs(es.states[:, ff].conj() @ full @ es.states[:, ii]))


def loop_field_model(
    radius: float,
    current: float,
    x: ArrayLike,
    y: ArrayLike,
    z: ArrayLike,
    wire_radius: float = 1.0,
    pref_dbm: float | None = None,
) -> FieldMap:
    """Field of a circular current loop (radius in um, current in A) centred
    at the origin in the z = 0 plane, in Gauss.

    Off-axis values use the complete elliptic integral form of the
    Biot-Savart law.  Within ``wire_radius`` of the conductor the field is
    scaled by (d / wire_radius)^2, the profile inside a round wire.
    """
    if radius <= 0:
        raise ValueError("loop radius must be positive")
    X, Y, Z = np.meshgrid(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float), indexing="ij")
    B = _loop_field_tesla(radius * 1e-6, current, X * 1e-6, Y * 1e-6, Z * 1e-6)
    d = np.hypot(np.hypot(X, Y) - radius, Z)
    inside = d < wire_radius
    B[inside] *= ((d[inside] / wire_radius) ** 2)[:, None]
    return FieldMap(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float), B * TESLA_TO_GAUSS, pref_dbm)


def _loop_field_tesla(a, current, X, Y, Z):
    rho = np.hypot(X, Y)
    r2 = a * a + rho * rho + Z * Z
    alpha2 = np.maximum(r2 - 2 * a * rho, 1e-300)
    beta = np.sqrt(r2 + 2 * a * rho)
    m = 1.0 - alpha2 / beta**2
    K, E = ellipk(m), ellipe(m)
    C = MU_0 * current / np.pi
    Bz = C / (2 * alpha2 * beta) * ((a * a - rho * rho - Z * Z) * E + alpha2 * K)
    with np.errstate(invalid="ignore", divide="ignore"):
        Brho = np.where(rho > 1e-15, C * Z / (2 * alpha2 * beta * rho) * (r2 * E - alpha2 * K), 0.0)
        cphi = np.where(rho > 1e-15, X / rho, 0.0)
        sphi = np.where(rho > 1e-15, Y / rho, 0.0)
    return np.stack([Brho * cphi, Brho * sphi, Bz], axis=-1)


def on_axis_loop_field(radius: float, current: float, z: ArrayLike) -> NDArray[np.float64]:
    """Closed-form axial field mu0 I R^2 / (2 (R^2 + z^2)^(3/2)) in Gauss (lengths in um)."""
    R, zz = radius * 1e-6, np.asarray(z, float) * 1e-6
    return MU_0 * current * R * R / (2 * (R * R + zz * zz) ** 1.5) * TESLA_TO_GAUSS


def _region(fmap: FieldMap, vm: float, center) -> NDArray[np.int64]:
    """Flat indices of the cells nearest ``center`` whose total volume is ``vm``."""
    n_cells = max(1, int(round(vm / fmap.cell_volume)))
    total = fmap.x.size * fmap.y.size * fmap.z.size
    if vm > fmap.volume * (1 + 1e-9) or n_cells > total:
        raise ValueError(f"mode volume {vm} um^3 exceeds the map volume {fmap.volume:.6g} um^3")
    X, Y, Z = np.meshgrid(fmap.x, fmap.y, fmap.z, indexing="ij")
    c = np.asarray(center, float)
    d2 = ((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2).ravel()
    return np.argsort(d2, kind="stable")[:n_cells]


def ensemble_coupling(
    fmap: FieldMap,
    vm: float,
    matrix_element: float | dict[str, float],
    rho: float,
    abundance: float = 0.7,
    selectivity: float = 1.0,
    center=(0.0, 0.0, 0.0),
    component: str = "x",
) -> CouplingEstimate:
    """Ensemble and single-spin coupling over a mode volume grown around ``center``.

    gc = gamma_e * |M| * sqrt(rho_eff * integral |H_component|^2 dV), with
    rho_eff = rho * abundance * selectivity and N_s = rho_eff * V_m counted
    over the same cells.  Passing ``matrix_element`` as a mapping
    {axis: M_axis} switches to the full sum over axes of |M_axis H_axis|^2.
    """
    if rho <= 0:
        raise ValueError("spin density must be positive")
    idx = _region(fmap, vm, center)
    H = fmap.H.reshape(-1, 3)[idx]
    dv = fmap.cell_volume
    if isinstance(matrix_element, dict):
        weighted = sum((M * H[:, AXES.index(ax)]) ** 2 for ax, M in matrix_element.items())
        integral = float(np.sum(weighted) * dv)
        prefactor = 1.0
    else:
        integral = float(np.sum(H[:, AXES.index(component)] ** 2) * dv)
        prefactor = abs(matrix_element)
    rho_eff = rho * abundance * selectivity
    vol = idx.size * dv
    gc = GAMMA_E * prefactor * math.sqrt(rho_eff * integral)
    ns = rho_eff * vol
    return CouplingEstimate(gc=gc, g0=gc * 1e6 / math.sqrt(ns), Ns=ns, Vm=vol, integral=integral)


def normalize_map(fmap: FieldMap, target_gc: float, vm: float, matrix_element: float, rho: float, **kw) -> FieldMap:
    """Rescale ``fmap`` so that ``ensemble_coupling`` gives ``target_gc`` at ``vm``."""
    est = ensemble_coupling(fmap, vm, matrix_element, rho, **kw)
    if est.gc == 0:
        raise ValueError("map has no field in the integration region")
    return fmap.scaled(target_gc / est.gc)


def coupling_scan(fmap: FieldMap, vms, matrix_element, rho: float, **kw) -> list[CouplingEstimate]:
    return [ensemble_coupling(fmap, v, matrix_element, rho, **kw) for v in vms]


def write_field_map_csv(fmap: FieldMap, path: str | Path) -> None:
    pref = "" if fmap.pref_dbm is None else f"{fmap.pref_dbm:.9g}"
    X, Y, Z = np.meshgrid(fmap.x, fmap.y, fmap.z, indexing="ij")
    cols = np.column_stack([X.ravel(), Y.ravel(), Z.ravel(), fmap.H.reshape(-1, 3)])
    with open(path, "w") as fh:
        fh.write(f"# x_um,y_um,z_um,Hx_G,Hy_G,Hz_G,Pref_dBm={pref}\n")
        for row in cols:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def read_field_map_csv(path: str | Path) -> FieldMap:
    """Load a field map; rows may come in any order but must fill a regular grid."""
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    prefix = "# x_um,y_um,z_um,Hx_G,Hy_G,Hz_G"
    if not header.startswith(prefix):
        raise ValueError(f"{path}: expected header starting with {prefix!r}")
    pref = None
    if "Pref_dBm=" in header:
        val = header.split("Pref_dBm=", 1)[1].strip()
        pref = float(val) if val else None
    rows = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2) if body.strip() else np.empty((0, 6))
    if rows.shape[1] != 6 or rows.shape[0] == 0:
        raise ValueError(f"{path}: expected non-empty rows of 6 columns")
    axes = [np.unique(rows[:, k]) for k in range(3)]
    shape = tuple(a.size for a in axes)
    if np.prod(shape) != rows.shape[0]:
        raise ValueError(f"{path}: rows do not form a complete regular grid")
    idx = tuple(np.searchsorted(axes[k], rows[:, k]) for k in range(3))
    H = np.full(shape + (3,), np.nan)
    H[idx] = rows[:, 3:]
    if np.isnan(H).any():
        raise ValueError(f"{path}: duplicate or missing grid nodes")
    return FieldMap(*axes, H, pref)


def default_loop_grid(half_width: float = 30.0, z_max: float = 30.0, spacing: float = 1.0):
    """Cell-centred grid over the half-space above the chip."""
    n_xy = int(round(2 * half_width / spacing))
    n_z = int(round(z_max / spacing))
    xy = -half_width + spacing * (np.arange(n_xy) + 0.5)
    z = spacing * (np.arange(n_z) + 0.5)
    return xy, xy.copy(), z
