"""Driven, dissipative dynamics of the dressed spin-photon system.

The density matrix is propagated in the eigenbasis of the undriven Dicke
Hamiltonian.  Every dressed state carries an excitation-manifold index
K = round((E - E_1) / omega_c); in the frame rotating at the drive frequency
omega_d its energy becomes E - K*omega_d.  The cavity drive
eps*(a e^{+i w t} + a^dag e^{-i w t}) then keeps only its static part, the
K -> K-1 component of a (rotating-wave approximation on the drive only; the
spin-photon coupling inside H is exact).  Collapse operators are split into
their Delta-K components and the oscillating cross terms dropped.

Frequencies and rates are inputs in MHz; the generator is built in angular
units (rad/us) once, and times are in microseconds.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.signal import find_peaks

from .dicke import (
    DickeConfig,
    EigenSystem,
    _index,
    boltzmann_weights,
    build_dicke_hamiltonian,
    cavity_operator,
    diagonalize,
    spin_operator,
)
from .errors import NumericalError
from .reflection import _parabolic_vertex
from .spin import build_spin_operators

TWO_PI = 2.0 * np.pi
STEPS_PER_PERIOD = 20
NORM_TOLERANCE = 1e-4
REPORTED = (1, 2, 4, 5)


@dataclass(frozen=True)
class PulseSpec:
    drive_freq: float
    drive_amp: float
    duration: float
    shape: str = "rectangular"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be > 0")
        if self.drive_amp < 0:
            raise ValueError("drive amplitude must be >= 0")
        if self.shape != "rectangular":
            raise ValueError(f"unsupported pulse shape {self.shape!r}")


@dataclass(frozen=True)
class DynamicsConfig:
    """``initial`` is ``"thermal"`` or a 1-based dressed-state label.

    ``time_step=None`` picks the largest step allowed by the resolution guard.
    """

    dicke: DickeConfig
    kappa_c: float = 10.485
    gamma_s: float = 8.8
    initial: str | int = "thermal"
    time_step: float | None = None

    def __post_init__(self):
        if self.dicke.cavity.n_max < 2:
            raise ValueError("driven dynamics need n_max >= 2")
        if self.kappa_c < 0 or self.gamma_s < 0:
            raise ValueError("dissipation rates must be >= 0")
        if self.time_step is not None and not self.time_step > 0:
            raise ValueError("time_step must be > 0")
        if isinstance(self.initial, str):
            if self.initial != "thermal":
                raise ValueError("initial must be 'thermal' or a state label")
        else:
            _index(self.initial, self.dicke.dim)


@dataclass
class PopulationTrace:
    """Output samples of one run; ``populations[t, l-1]`` is P(|l>)."""

    times: NDArray[np.float64]
    populations: NDArray[np.float64]
    norm: NDArray[np.float64]
    purity: NDArray[np.float64]
    min_eigenvalue: NDArray[np.float64]
    emission: NDArray[np.float64]  # |<a>|, proxy for the ring-down signal
    leak: NDArray[np.float64]  # population of the top Fock level
    time_step: float = 0.0
    final_state: NDArray[np.complex128] | None = field(default=None, repr=False)

    def population(self, label: int) -> NDArray[np.float64]:
        return self.populations[:, _index(label, self.populations.shape[1])]

    def concat(self, other: "PopulationTrace") -> "PopulationTrace":
        """Append ``other`` (whose first sample duplicates our last one)."""
        def cat(a, b):
            return np.concatenate([a, b[1:]])

        return PopulationTrace(
            cat(self.times, other.times),
            cat(self.populations, other.populations),
            cat(self.norm, other.norm),
            cat(self.purity, other.purity),
            cat(self.min_eigenvalue, other.min_eigenvalue),
            cat(self.emission, other.emission),
            cat(self.leak, other.leak),
            min(self.time_step or np.inf, other.time_step or np.inf),
            other.final_state,
        )


@dataclass
class InversionScan:
    amps: NDArray[np.float64]
    tau_inv: NDArray[np.float64]  # NaN where no minimum was found
    p2_min: NDArray[np.float64]

    @property
    def found(self) -> NDArray[np.bool_]:
        return np.isfinite(self.tau_inv)


@dataclass
class CoolingResult:
    trace: PopulationTrace
    p1_per_cycle: NDArray[np.float64]  # entry 0 is the initial state


class DressedSystem:
    """Dressed-basis operators shared by all runs of one configuration."""

    def __init__(self, cfg: DynamicsConfig):
        self.cfg = cfg
        d = cfg.dicke
        self.eigen: EigenSystem = diagonalize(build_dicke_hamiltonian(d), d.cavity.n_max, d.spin.S)
        V = self.eigen.states
        self.energies = self.eigen.energies - self.eigen.energies[0]
        self.K = np.rint(self.energies / d.cavity.omega_c).astype(int)
        self.dK = self.K[:, None] - self.K[None, :]
        spin_dim = d.spin.dim
        n = d.cavity.n_max
        self.a = V.conj().T @ cavity_operator(n, spin_dim) @ V
        self.sz = V.conj().T @ spin_operator(n, build_spin_operators(d.spin.S).sz) @ V
        self.a_drive = np.where(self.dK == -1, self.a, 0.0)
        top = np.zeros(V.shape[0])
        top[n * spin_dim :] = 1.0
        self.top_projector = V.conj().T @ (top[:, None] * V)
        self.dim = V.shape[0]
        self._dissipator = self._build_dissipator()

    def _build_dissipator(self) -> NDArray[np.complex128]:
        d = self.dim
        eye = np.eye(d)
        out = np.zeros((d * d, d * d), dtype=complex)
        for op, rate in ((self.a, self.cfg.kappa_c), (self.sz, self.cfg.gamma_s)):
            if rate == 0:
                continue
            for k in np.unique(self.dK):
                c = np.where(self.dK == k, op, 0.0)
                if not np.any(np.abs(c) > 1e-14):
                    continue
                cdc = c.conj().T @ c
                # row-major vec: vec(A X B) = kron(A, B.T) vec(X)
                out += TWO_PI * rate * (
                    np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
                )
        return out

    def hamiltonian(self, drive_freq: float, drive_amp: float) -> NDArray[np.complex128]:
        """Rotating-frame Hamiltonian in MHz."""
        H = np.diag(self.energies - self.K * drive_freq).astype(complex)
        return H + drive_amp * (self.a_drive + self.a_drive.conj().T)

    def max_frequency(self, drive_freq: float, drive_amp: float) -> float:
        return float(np.abs(np.linalg.eigvalsh(self.hamiltonian(drive_freq, drive_amp))).max())

    def liouvillian(self, drive_freq: float, drive_amp: float) -> NDArray[np.complex128]:
        H = TWO_PI * self.hamiltonian(drive_freq, drive_amp)
        eye = np.eye(self.dim)
        return -1j * (np.kron(H, eye) - np.kron(eye, H.T)) + self._dissipator

    def initial_state(self) -> NDArray[np.complex128]:
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        init = self.cfg.initial
        if init == "thermal":
            # spins in the zero-excitation manifold, Boltzmann-distributed
            ground = np.flatnonzero(self.K == 0)
            w = boltzmann_weights(self.energies[ground], self.cfg.dicke.temperature)
            rho[ground, ground] = w / w.sum()
        else:
            i = _index(init, self.dim)
            rho[i, i] = 1.0
        return rho

    def change_frame(self, rho: NDArray, old_freq: float, new_freq: float, t: float) -> NDArray:
        """Re-express ``rho`` from the frame rotating at ``old_freq`` to ``new_freq`` at time t."""
        ph = np.exp(1j * TWO_PI * (new_freq - old_freq) * self.K * t)
        return ph[:, None] * rho * ph.conj()[None, :]

    def observe(self, rho: NDArray) -> tuple:
        pops = np.real(np.diag(rho))
        herm = 0.5 * (rho + rho.conj().T)
        return (
            pops,
            float(np.real(np.trace(rho))),
            float(np.real(np.vdot(rho.conj().T, rho))),
            float(np.linalg.eigvalsh(herm).min()),
            float(abs(np.trace(rho @ self.a_drive))),
            float(np.real(np.trace(self.top_projector @ rho))),
        )


def rk4_propagator(L: NDArray, dt: float) -> NDArray[np.complex128]:
    """One classical RK4 step for the linear system dv/dt = L v."""
    X = L * dt
    X2 = X @ X
    X3 = X2 @ X
    return np.eye(L.shape[0]) + X + X2 / 2 + X3 / 6 + X3 @ X / 24


def propagate(
    system: DressedSystem,
    L: NDArray,
    rho0: NDArray,
    dt: float,
    steps_per_output: int,
    n_out: int,
    t0: float = 0.0,
) -> PopulationTrace:
    """Fixed-step RK4 integration sampled every ``steps_per_output`` steps.

    Raises NumericalError when the trace drifts by more than 1e-4.
    """
    P = np.linalg.matrix_power(rk4_propagator(L, dt), steps_per_output)
    d = system.dim
    v = np.ascontiguousarray(rho0).ravel().astype(complex)
    samples = []
    for s in range(n_out + 1):
        if s:
            v = P @ v
        obs = system.observe(v.reshape(d, d))
        if not np.isfinite(obs[1]) or abs(obs[1] - 1.0) > NORM_TOLERANCE:
            raise NumericalError(
                f"trace drifted to {obs[1]:.6g} at t={t0 + s * steps_per_output * dt:.6g} us "
                f"with step {dt:.3g} us; reduce the time step"
            )
        samples.append(obs)
    pops, norm, purity, mineig, emission, leak = (np.array(x) for x in zip(*samples))
    times = t0 + np.arange(n_out + 1) * steps_per_output * dt
    return PopulationTrace(times, pops, norm, purity, mineig, emission, leak, dt, v.reshape(d, d))


def _schedule(duration: float, n_out: int, dt_max: float) -> tuple[float, int]:
    """Step and steps-per-sample so that n_out samples span ``duration`` exactly."""
    m = max(1, int(np.ceil(duration / (n_out * dt_max) - 1e-9)))
    return duration / (n_out * m), m


def step_guard(system: DressedSystem, pulse: PulseSpec) -> float:
    return 1.0 / (STEPS_PER_PERIOD * system.max_frequency(pulse.drive_freq, pulse.drive_amp))


def _run_pulse(system, pulse, rho0, n_out, t0=0.0):
    guard = step_guard(system, pulse)
    dt_req = system.cfg.time_step
    if dt_req is not None and dt_req > guard * (1 + 1e-12):
        raise ValueError(
            f"time_step {dt_req:.3g} us exceeds the resolution guard {guard:.3g} us "
            f"(1/(20 * {1 / (20 * guard):.6g} MHz))"
        )
    dt, m = _schedule(pulse.duration, n_out, dt_req or guard)
    L = system.liouvillian(pulse.drive_freq, pulse.drive_amp)
    return propagate(system, L, rho0, dt, m, n_out, t0)


def evolve(cfg: DynamicsConfig, pulse: PulseSpec, n_out: int = 200, system: DressedSystem | None = None) -> PopulationTrace:
    """Evolve the initial state of ``cfg`` under one rectangular pulse."""
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    system = system or DressedSystem(cfg)
    return _run_pulse(system, pulse, system.initial_state(), n_out)


def first_minimum(times: NDArray, values: NDArray, prominence: float = 0.01) -> tuple[float, float]:
    """First interior minimum with at least ``prominence``; (nan, nan) if none."""
    peaks, _ = find_peaks(-np.asarray(values), prominence=prominence)
    if peaks.size == 0:
        return float("nan"), float("nan")
    i = int(peaks[0])
    t = float(_parabolic_vertex(times, values, i))
    return t, float(values[i])


def inversion_scan(
    cfg: DynamicsConfig,
    amps: ArrayLike,
    tau_max: float,
    drive_freq: float,
    n_out: int = 400,
    prominence: float = 0.01,
    workers: int = 1,
) -> InversionScan:
    """Inversion pulse length (first minimum of P(|2>)) for each drive amplitude."""
    amps = np.asarray(amps, dtype=float)
    if amps.size == 0 or np.any(amps <= 0) or np.any(np.diff(amps) <= 0):
        raise ValueError("amps must be positive and strictly ascending")
    system = DressedSystem(cfg)

    def one(eps):
        tr = evolve(cfg, PulseSpec(drive_freq, eps, tau_max), n_out, system)
        return first_minimum(tr.times, tr.population(2), prominence)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(one, amps))
    else:
        res = [one(e) for e in amps]
    tau, pmin = (np.array(x) for x in zip(*res))
    return InversionScan(amps, tau, pmin)


def linear_fit_r2(x: ArrayLike, y: ArrayLike) -> float:
    """Coefficient of determination of a straight-line least-squares fit."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))


def cooling_sequence(
    cfg: DynamicsConfig,
    pulse_a: PulseSpec,
    pulse_b: PulseSpec | None,
    repetitions: int,
    idle: float = 0.0,
    n_out: int = 50,
) -> CoolingResult:
    """Alternate pulse A, pulse B (skipped when None) and an idle gap.

    The state is carried between segments by switching rotating frames, so
    coherences keep their lab-frame phase.
    """
    if repetitions < 0:
        raise ValueError("repetitions must be >= 0")
    if idle < 0:
        raise ValueError("idle must be >= 0")
    system = DressedSystem(cfg)
    rho = system.initial_state()
    trace = propagate(system, np.zeros((system.dim**2,) * 2), rho, 1.0, 1, 0)
    p1 = [trace.populations[0, 0]]
    frame, t = pulse_a.drive_freq, 0.0
    segments = [pulse_a] + ([pulse_b] if pulse_b is not None else [])
    if idle > 0:
        segments.append(PulseSpec(pulse_a.drive_freq, 0.0, idle))
    for _ in range(repetitions):
        for seg in segments:
            freq = frame if seg.drive_amp == 0 else seg.drive_freq
            rho = system.change_frame(rho, frame, freq, t)
            frame = freq
            part = _run_pulse(system, seg, rho, n_out, t)
            rho = part.final_state
            t = part.times[-1]
            trace = trace.concat(part)
        p1.append(trace.populations[-1, 0])
    return CoolingResult(trace, np.array(p1))


def reported_populations(trace: PopulationTrace) -> NDArray[np.float64]:
    """Columns P1, P2, P4, P5."""
    return np.stack([trace.population(i) for i in REPORTED], axis=1)


def with_dissipation(cfg: DynamicsConfig, kappa_c: float, gamma_s: float) -> DynamicsConfig:
    return dataclasses.replace(cfg, kappa_c=kappa_c, gamma_s=gamma_s)
