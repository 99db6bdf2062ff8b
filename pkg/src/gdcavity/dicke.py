"""Spin-photon Dicke Hamiltonian, exact diagonalization and transition spectra.

The product basis is |n> (x) |S_z>: photon number is the outer (slow) index,
ascending, and S_z is the inner index, descending.  State labels used by the
public functions follow the energy ordering and are 1-based, so ``1`` is the
ground state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

from .constants import KB_OVER_H, MU_B_OVER_H
from .spin import (
    CrystalFieldParams,
    SpinParams,
    ZeemanConfig,
    build_spin_operators,
    build_stevens_operator,
    crystal_field_hamiltonian,
    zeeman_operator,
)

HERMITIAN_RTOL = 1e-9


@dataclass(frozen=True)
class CavityParams:
    omega_c: float
    kappa_c: float = 10.485
    kappa_e: float = 10.38
    n_max: int = 1

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")
        if not 0 < self.kappa_e <= self.kappa_c:
            raise ValueError("need 0 < kappa_e <= kappa_c")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be an integer >= 1")


@dataclass(frozen=True)
class DickeConfig:
    gc: float
    spin: SpinParams
    cf: CrystalFieldParams
    zeeman: ZeemanConfig
    cavity: CavityParams
    temperature: float = 0.38

    def __post_init__(self):
        if self.gc < 0:
            raise ValueError("gc must be >= 0")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")

    @property
    def dim(self) -> int:
        return (self.cavity.n_max + 1) * self.spin.dim

    def with_field(self, H0: float) -> "DickeConfig":
        return dataclasses.replace(self, zeeman=dataclasses.replace(self.zeeman, H0=H0))

    def with_values(self, **values) -> "DickeConfig":
        """Copy with any of B20..B64, omega_c, theta, phi, H0, gc, n_max replaced."""
        cf = {k: values.pop(k) for k in ("B20", "B40", "B44", "B60", "B64") if k in values}
        zm = {k: values.pop(k) for k in ("H0", "theta", "phi") if k in values}
        cav = {k: values.pop(k) for k in ("omega_c", "kappa_c", "kappa_e", "n_max") if k in values}
        top = {k: values.pop(k) for k in ("gc", "temperature") if k in values}
        if values:
            raise ValueError(f"unknown parameter(s): {sorted(values)}")
        return dataclasses.replace(
            self,
            cf=dataclasses.replace(self.cf, **cf),
            zeeman=dataclasses.replace(self.zeeman, **zm),
            cavity=dataclasses.replace(self.cavity, **cav),
            **top,
        )


@dataclass(frozen=True)
class EigenSystem:
    """Ascending energies (MHz) and eigenvectors stored column-wise."""

    energies: NDArray[np.float64]
    states: NDArray[np.complex128] = field(repr=False)
    n_max: int = 0
    S: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def spin_dim(self) -> int:
        return self.dim // (self.n_max + 1)

    def state(self, label: int) -> NDArray[np.complex128]:
        return self.states[:, _index(label, self.dim)]

    def amplitudes(self, label: int) -> NDArray[np.complex128]:
        """Eigenvector ``label`` reshaped to (photon number, S_z)."""
        return self.state(label).reshape(self.n_max + 1, self.spin_dim)


@dataclass
class TransitionSpectrum:
    fields: NDArray[np.float64]
    transitions: list[tuple[int, int]]
    freqs: NDArray[np.float64]  # (n_fields, n_transitions), MHz
    amplitudes: NDArray[np.float64]  # (n_fields, n_transitions)
    labels: NDArray[np.int64]  # (n_fields, dim); labels[j, l-1] = energy index of label l


def _index(label: int, dim: int) -> int:
    if int(label) != label or not 1 <= label <= dim:
        raise ValueError(f"state label {label} out of range 1..{dim}")
    return int(label) - 1


def photon_annihilation(n_max: int) -> NDArray[np.float64]:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)


def cavity_operator(n_max: int, spin_dim: int) -> NDArray[np.complex128]:
    """a (x) I_spin."""
    return np.kron(photon_annihilation(n_max), np.eye(spin_dim)).astype(complex)


def spin_operator(n_max: int, op: NDArray) -> NDArray[np.complex128]:
    """I_photon (x) op."""
    return np.kron(np.eye(n_max + 1), op).astype(complex)


def _static_and_zeeman(cfg: DickeConfig) -> tuple[NDArray, NDArray]:
    sp, cav = cfg.spin, cfg.cavity
    ops = build_spin_operators(sp.S)
    a = photon_annihilation(cav.n_max)
    eye_n = np.eye(cav.n_max + 1)
    static = (
        np.kron(eye_n, crystal_field_hamiltonian(sp.S, cfg.cf))
        + cav.omega_c * np.kron(a.T @ a, np.eye(sp.dim))
        + cfg.gc * np.kron(a + a.T, ops.splus + ops.sminus)
    )
    zee = np.kron(eye_n, zeeman_operator(sp, cfg.zeeman.theta, cfg.zeeman.phi))
    return static, zee


def build_dicke_hamiltonian(cfg: DickeConfig) -> NDArray[np.complex128]:
    """H_s (x) I + omega_c a^dag a (x) I + gc (a^dag + a)(x)(S+ + S-), in MHz.

    Counter-rotating terms are kept.
    """
    static, zee = _static_and_zeeman(cfg)
    return static + cfg.zeeman.H0 * zee


def hamiltonian_derivative(cfg: DickeConfig, name: str) -> tuple[NDArray, NDArray]:
    """dH/d(name) split as (field-independent part, part per Gauss of H0).

    ``name`` is one of B20..B64, omega_c, gc (MHz per MHz) or theta (MHz per
    degree).
    """
    sp, cav = cfg.spin, cfg.cavity
    ops = build_spin_operators(sp.S)
    a = photon_annihilation(cav.n_max)
    eye_n = np.eye(cav.n_max + 1)
    zero = np.zeros((cfg.dim, cfg.dim), dtype=complex)
    stevens = {"B20": (2, 0), "B40": (4, 0), "B44": (4, 4), "B60": (6, 0), "B64": (6, 4)}
    if name in stevens:
        return np.kron(eye_n, build_stevens_operator(sp.S, *stevens[name])), zero
    if name == "omega_c":
        return np.kron(a.T @ a, np.eye(sp.dim)).astype(complex), zero
    if name == "gc":
        return np.kron(a + a.T, ops.splus + ops.sminus), zero
    if name == "theta":
        th, ph = np.radians(cfg.zeeman.theta), np.radians(cfg.zeeman.phi)
        dz = MU_B_OVER_H * (
            sp.g_perp * np.cos(th) * (np.cos(ph) * ops.sx + np.sin(ph) * ops.sy)
            - sp.g_par * np.sin(th) * ops.sz
        )
        return zero, np.kron(eye_n, dz) * (np.pi / 180.0)
    raise ValueError(f"no derivative for parameter {name!r}")


def dicke_hamiltonian_stack(cfg: DickeConfig, fields: ArrayLike) -> NDArray[np.complex128]:
    """Hamiltonians for every field in ``fields`` (other settings from ``cfg``)."""
    static, zee = _static_and_zeeman(cfg)
    h = np.asarray(fields, dtype=float)
    return static[None] + h[:, None, None] * zee[None]


def _fix_gauge(V: NDArray) -> NDArray:
    idx = np.argmax(np.abs(V), axis=-2)
    lead = np.take_along_axis(V, idx[..., None, :], axis=-2)
    return V * (np.abs(lead) / lead)


def check_hermitian(H: NDArray, rtol: float = HERMITIAN_RTOL) -> None:
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(np.abs(H).max(), 1e-300)
    dev = np.abs(H - np.swapaxes(H.conj(), -1, -2)).max()
    if dev > rtol * scale:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")


def diagonalize(H: ArrayLike, n_max: int = 0, S: float = 0.0) -> EigenSystem:
    """Full eigendecomposition with ascending energies.

    Each eigenvector is rephased so its largest-magnitude component is real
    and positive.  ``n_max`` and ``S`` only annotate the result.
    """
    H = np.asarray(H, dtype=complex)
    check_hermitian(H)
    E, V = np.linalg.eigh(H)
    return EigenSystem(E, _fix_gauge(V), n_max=n_max, S=S)


def diagonalize_config(cfg: DickeConfig) -> EigenSystem:
    return diagonalize(build_dicke_hamiltonian(cfg), cfg.cavity.n_max, cfg.spin.S)


def boltzmann_weights(energies: NDArray, temperature: float) -> NDArray[np.float64]:
    """exp(-(E - E_ground)/kT), energies in MHz."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    e = np.asarray(energies, dtype=float)
    return np.exp(-(e - e.min(axis=-1, keepdims=True)) / (KB_OVER_H * temperature))


def transition_amplitude(es: EigenSystem, i: int, f: int, temperature: float) -> float:
    """Boltzmann-weighted photon matrix element for the i -> f transition.

    Returns |<lower|a|upper>|^2 exp(-(E_i - E_1)/kT) for 1-based labels, where
    the cavity annihilation operator always acts on the higher-energy state of
    the pair: absorption (E_f > E_i) uses <i|a|f>, emission uses <f|a|i>.
    """
    ii, ff = _index(i, es.dim), _index(f, es.dim)
    if ii == ff:
        raise ValueError("initial and final state must differ")
    lo, hi = (ii, ff) if es.energies[ii] <= es.energies[ff] else (ff, ii)
    a = cavity_operator(es.n_max, es.spin_dim)
    m = es.states[:, lo].conj() @ a @ es.states[:, hi]
    return float(abs(m) ** 2 * boltzmann_weights(es.energies, temperature)[ii])


def _track(fields: NDArray, V: NDArray) -> NDArray[np.int64]:
    """Label -> eigen-index map per field point by maximal overlap.

    Each sign branch is tracked outward from its point of smallest |H|,
    where labels coincide with the energy order.  Points at H = 0 keep the
    energy order.
    """
    n, dim = V.shape[0], V.shape[-1]
    labels = np.tile(np.arange(dim), (n, 1))
    for sign in (1.0, -1.0):
        branch = np.flatnonzero(np.sign(fields) == sign)
        branch = branch[np.argsort(np.abs(fields[branch]), kind="stable")]
        for prev, cur in zip(branch[:-1], branch[1:]):
            Vp = V[prev][:, labels[prev]]
            overlap = np.abs(Vp.conj().T @ V[cur]) ** 2
            _, cols = linear_sum_assignment(-overlap)
            labels[cur] = cols
    return labels


def sweep_spectrum(
    cfg: DickeConfig,
    fields: ArrayLike,
    transitions: Sequence[tuple[int, int]] = ((2, 4), (2, 5)),
    track: bool = True,
) -> TransitionSpectrum:
    """Line positions E_f - E_i and amplitudes A_if over a field grid.

    Output rows follow the order of ``fields``.
    """
    h = np.atleast_1d(np.asarray(fields, dtype=float))
    if h.size == 0:
        raise ValueError("field grid is empty")
    E, V = np.linalg.eigh(dicke_hamiltonian_stack(cfg, h))
    dim = E.shape[1]
    for i, f in transitions:
        _index(i, dim), _index(f, dim)
    labels = _track(h, V) if track else np.tile(np.arange(dim), (h.size, 1))
    a = cavity_operator(cfg.cavity.n_max, cfg.spin.dim)
    boltz = boltzmann_weights(E, cfg.temperature)
    ii = np.array([labels[:, i - 1] for i, _ in transitions]).T
    ff = np.array([labels[:, f - 1] for _, f in transitions]).T
    rows = np.arange(h.size)[:, None]
    freqs = E[rows, ff] - E[rows, ii]
    up = freqs >= 0
    lo_idx, hi_idx = np.where(up, ii, ff), np.where(up, ff, ii)
    Vlo = np.take_along_axis(V, lo_idx[:, None, :], axis=2)
    Vhi = np.take_along_axis(V, hi_idx[:, None, :], axis=2)
    m = np.einsum("kjt,jl,klt->kt", Vlo.conj(), a, Vhi)
    amps = np.abs(m) ** 2 * boltz[rows, ii]
    return TransitionSpectrum(h, [tuple(t) for t in transitions], freqs, amps, labels)


def lorentzian(x: ArrayLike, center: ArrayLike, hwhm: float) -> NDArray[np.float64]:
    """Unit-peak Lorentzian."""
    d = np.asarray(x) - np.asarray(center)
    return hwhm**2 / (d**2 + hwhm**2)


def render_map(
    spec: TransitionSpectrum, freq_grid: ArrayLike, gamma: float = 8.8, depth: float = 0.9
) -> NDArray[np.float64]:
    """Synthetic reflected-power map (fields x freqs, linear, <= 1).

    Each line is a Lorentzian absorption dip of half-width ``gamma`` with a
    depth proportional to its amplitude, normalized to the largest amplitude
    over the whole map.
    """
    f = np.asarray(freq_grid, dtype=float)
    peak = spec.amplitudes.max()
    weights = spec.amplitudes / peak if peak > 0 else np.zeros_like(spec.amplitudes)
    absorb = np.einsum(
        "kt,ktf->kf", weights, lorentzian(f[None, None, :], spec.freqs[:, :, None], gamma)
    )
    return 1.0 - depth * np.clip(absorb, 0.0, 1.0)


def ground_state_perturbation_scan(
    cfg: DickeConfig, scan_var: str, grid: ArrayLike
) -> NDArray[np.float64]:
    """Zero-field shift of the ground manifold, rows of (value, shift_MHz).

    ``scan_var="B44"``: E_1(B44) - E_1(B44=0) at the configured gc.
    ``scan_var="gc"``: (E_3 - E_1) - omega_c at the configured B44.
    """
    if cfg.zeeman.H0 != 0.0:
        raise ValueError("perturbation scans are defined at zero field (H0 = 0)")
    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, 2))
    if scan_var == "B44":
        ref = diagonalize_config(cfg.with_values(B44=0.0)).energies[0]
        for j, v in enumerate(grid):
            out[j] = v, diagonalize_config(cfg.with_values(B44=v)).energies[0] - ref
    elif scan_var == "gc":
        for j, v in enumerate(grid):
            E = diagonalize_config(cfg.with_values(gc=v)).energies
            out[j] = v, (E[2] - E[0]) - cfg.cavity.omega_c
    else:
        raise ValueError(f"scan_var must be 'B44' or 'gc', got {scan_var!r}")
    return out


def perturbation_comparison(cfg: DickeConfig, b44_grid: ArrayLike, gc_grid: ArrayLike) -> dict:
    """Both zero-field perturbation traces, side by side."""
    cfg0 = cfg.with_field(0.0)
    return {
        "B44": ground_state_perturbation_scan(cfg0.with_values(gc=0.0), "B44", b44_grid),
        "gc": ground_state_perturbation_scan(cfg0, "gc", gc_grid),
    }
