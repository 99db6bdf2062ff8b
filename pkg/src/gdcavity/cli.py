"""Command-line front end: ``gdcavity <command> [options]``.

Every command reads a run configuration (the bundled one unless ``--config``
is given), accepts ``--set section.key=value`` overrides and writes CSV with
9 significant digits.  Exit codes: 0 success, 2 bad input or configuration,
3 numerical failure.  ``GDCAVITY_THREADS`` sets the worker count for
amplitude scans.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import FIT_PARAMS, RunConfig, apply_overrides, load_config, bundled_config
from .coupling import (
    FieldMap,
    coupling_scan,
    default_loop_grid,
    ensemble_coupling,
    loop_field_model,
    matrix_element,
    normalize_map,
    photon_number,
    read_field_map_csv,
    spin_density,
    vacuum_power,
    write_field_map_csv,
)
from .dicke import DickeConfig, diagonalize_config, render_map, sweep_spectrum
from .dynamics import (
    DressedSystem,
    DynamicsConfig,
    PulseSpec,
    cooling_sequence,
    evolve,
    first_minimum,
    inversion_scan,
    reported_populations,
)
from .errors import ConfigError, NumericalError
from .fit import (
    FitProblem,
    crossing_weights,
    fit_crystal_field,
    read_dips_csv,
    synthesize_dips,
    write_dips_csv,
)
from .reflection import (
    ReflectionParams,
    cooperativity,
    fit_s11,
    read_trace_csv,
    synthesize_trace,
    write_trace_csv,
)
from .spin import spin_projections

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


class FitFailed(Exception):
    """Raised after the best-iterate report of a failed fit has been emitted."""


def _g(v) -> str:
    return f"{float(v):.9g}"


def _csv(header, rows) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for r in rows:
        out.write(",".join(x if isinstance(x, str) else _g(x) for x in r) + "\n")
    return out.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _threads() -> int:
    raw = os.environ.get("GDCAVITY_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GDCAVITY_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else bundled_config()
    return apply_overrides(cfg, args.set or [])


def _sweep_fields(cfg: RunConfig) -> np.ndarray:
    sw = cfg.section("sweep")
    n = sw.get("n_points", 401)
    if n < 1:
        raise ConfigError("[sweep] n_points must be >= 1")
    return np.linspace(sw.get("h_min", -200.0), sw.get("h_max", 200.0), n)


# eigen ----------------------------------------------------------------------


def _basis_labels(dk: DickeConfig) -> list[str]:
    ms = spin_projections(dk.spin.S)
    return [f"n{n}_m{m:+g}" for n in range(dk.cavity.n_max + 1) for m in ms]


def cmd_eigen(args) -> int:
    cfg = _load(args)
    dk = cfg.dicke()
    if args.field is not None:
        dk = dk.with_field(args.field)
    es = diagonalize_config(dk)
    labels = _basis_labels(dk)
    rows = []
    if args.table1_style:
        header = ["index", "energy_MHz"] + labels
        for k in range(es.dim):
            c = np.real(es.states[:, k])
            c = np.where(np.abs(c) < 0.01, 0.0, c)
            rows.append([str(k + 1), es.energies[k], *c])
    else:
        header = ["index", "energy_MHz"] + [f"{b}_{p}" for b in labels for p in ("re", "im")]
        for k in range(es.dim):
            c = es.states[:, k]
            rows.append([str(k + 1), es.energies[k], *np.column_stack([c.real, c.imag]).ravel()])
    _emit(_csv(header, rows), args.output)
    return EXIT_OK


# sweep ----------------------------------------------------------------------


def _parse_render(spec: str) -> float:
    gamma = 8.8
    for item in filter(None, (s.strip() for s in spec.split(","))):
        key, sep, value = item.partition("=")
        if key.strip() != "gamma" or not sep:
            raise ConfigError(f"--render: expected gamma=<MHz>, got {item!r}")
        try:
            gamma = float(value)
        except ValueError:
            raise ConfigError(f"--render: invalid gamma {value!r}") from None
    if not gamma > 0:
        raise ConfigError("--render: gamma must be > 0")
    return gamma


def cmd_sweep(args) -> int:
    cfg = _load(args)
    dk = cfg.dicke()
    fields = _sweep_fields(cfg)
    transitions = cfg.get("sweep", "transitions", [(2, 4), (2, 5)])
    map_text = None
    if args.render is not None:
        gamma = _parse_render(args.render) if args.render else cfg.get("sweep", "gamma", 8.8)
        if not args.map_output:
            raise ConfigError("--render needs --map-output")
    spec = sweep_spectrum(dk, fields, transitions)
    header = ["H0_G"]
    for i, f in transitions:
        header += [f"f_{i}_{f}_MHz", f"A_{i}_{f}"]
    rows = [[h, *np.column_stack([fr, am]).ravel()] for h, fr, am in zip(fields, spec.freqs, spec.amplitudes)]
    text = _csv(header, rows)
    if args.render is not None:
        sw = cfg.section("sweep")
        fmin, fmax, step = sw.get("freq_min", 17650.0), sw.get("freq_max", 18050.0), sw.get("freq_step", 0.5)
        fgrid = fmin + step * np.arange(int(round((fmax - fmin) / step)) + 1)
        power = render_map(spec, fgrid, gamma)
        map_rows = ([h, f, p] for h, col in zip(fields, power) for f, p in zip(fgrid, col))
        map_text = _csv(["H0_G", "freq_MHz", "power_linear"], map_rows)
    if len(transitions) >= 2 and fields.size > 1:
        split = spec.freqs[:, 1] - spec.freqs[:, 0]
        j = int(np.argmin(split))
        print(f"minimum splitting {split[j]:.6g} MHz at H0 = {fields[j]:.6g} G", file=sys.stderr)
    _emit(text, args.output)
    if map_text is not None:
        _emit(map_text, args.map_output)
    return EXIT_OK


# fit ------------------------------------------------------------------------


def _fit_problem(cfg: RunConfig, data) -> FitProblem:
    fit = cfg.section("fit")
    fixed = cfg.section("fixed")
    base = cfg.dicke().with_values(**fixed) if fixed else cfg.dicke()
    free = [p for p in fit.get("free", list(FIT_PARAMS)) if p not in fixed]
    try:
        return FitProblem(
            data=data,
            base=base,
            free=free,
            bounds={k: v for k, v in cfg.section("bounds").items() if k in free},
            init={k: v for k, v in cfg.section("init").items() if k in free},
            seed=fit.get("seed", 0),
            restarts=fit.get("restarts", 3),
            max_evals=fit.get("max_evals", 20000),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


UNITS = {"theta": "deg", "gc": "MHz", "omega_c": "MHz"}


def _report(rows, history, args, success: bool) -> None:
    text = _csv(["name", "value", "uncertainty", "unit"], rows)
    _emit(text, args.output)
    if args.history:
        _emit(_csv(["iteration", "cost_MHz2"], enumerate(history)), args.history)
    if not success:
        raise FitFailed


def cmd_fit(args) -> int:
    cfg = _load(args)
    data = read_dips_csv(args.dipfile)
    if len(data) == 0:
        raise ConfigError(f"{args.dipfile}: no dip rows")
    prob = _fit_problem(cfg, data)
    try:
        res = fit_crystal_field(prob)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [[k, res.params[k], res.uncertainties[k], UNITS.get(k, "MHz")] for k in prob.free]
    rows += [
        ["cost", res.cost, "nan", "MHz2"],
        ["iterations", res.nit, "nan", "1"],
        ["evaluations", res.nfev, "nan", "1"],
        ["success", float(res.success), "nan", "1"],
    ]
    _report(rows, res.history, args, res.success)
    return EXIT_OK


def _reflection_params(cfg: RunConfig) -> ReflectionParams:
    dk = cfg.dicke()
    rf = cfg.section("reflection")
    omega_s = rf.get("omega_s")
    try:
        return ReflectionParams(
            omega_c=dk.cavity.omega_c,
            kappa_c=dk.cavity.kappa_c,
            kappa_e=dk.cavity.kappa_e,
            omega_s=dk.cavity.omega_c if omega_s is None else omega_s,
            gc2L=rf.get("gc2L", 73.0),
            gamma_s=rf.get("gamma_s", 8.8),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_fit_s11(args) -> int:
    cfg = _load(args)
    p = _reflection_params(cfg)
    trace = read_trace_csv(args.tracefile)
    res = fit_s11(trace, p.omega_c, p.kappa_c, p.kappa_e, p.omega_s)
    rows = [
        ["gc2L", res.gc2L, res.sigma_gc2L, "MHz"],
        ["gamma_s", res.gamma_s, res.sigma_gamma_s, "MHz"],
        ["cooperativity", cooperativity(res.gc2L, p.kappa_c, res.gamma_s), "nan", "1"],
        ["residual_norm", res.residual_norm, "nan", "1"],
        ["iterations", res.iterations, "nan", "1"],
        ["success", float(res.success), "nan", "1"],
    ]
    _report(rows, res.history, args, res.success)
    return EXIT_OK


# coupling -------------------------------------------------------------------


def _coupling_inputs(cfg: RunConfig):
    cp = cfg.section("coupling")
    # bare spin transition |e1,0> -> |e2,0> driven by the cavity: labels 2 and 3 at gc = 0
    es = diagonalize_config(cfg.dicke().with_values(gc=0.0))
    m_x = matrix_element(es, 2, 3, "x")
    m_z = matrix_element(es, 2, 3, "z")
    m = cp.get("matrix_element") or m_x
    rho = cp.get("rho") or spin_density()
    kw = {"abundance": cp.get("abundance", 0.7), "selectivity": cp.get("selectivity", 1.0)}
    return m, m_x, m_z, rho, kw


def cmd_coupling(args) -> int:
    cfg = _load(args)
    cp = cfg.section("coupling")
    if args.mapfile:
        fmap = read_field_map_csv(args.mapfile)
    elif args.loop_model:
        fmap = _loop_map(cfg)
    else:
        raise ConfigError("coupling needs a field-map file or --loop-model")
    m, m_x, m_z, rho, kw = _coupling_inputs(cfg)
    vm = cp.get("vm", 1e4)
    target = cp.get("target_gc")
    if target is not None:
        fmap = normalize_map(fmap, target, vm, m, rho, **kw)
    if args.vm_scan:
        scan = coupling_scan(fmap, cp.get("vm_scan", [vm]), m, rho, **kw)
        text = _csv(["Vm_um3", "gc_MHz", "Ns", "g0_Hz"], ([e.Vm, e.gc, e.Ns, e.g0] for e in scan))
        _emit(text, args.output)
        return EXIT_OK
    est = ensemble_coupling(fmap, vm, m, rho, **kw)
    dk = cfg.dicke()
    pin = cp.get("pin_dbm", -64.0)
    rows = [
        ["vacuum_power", vacuum_power(dk.cavity.omega_c, dk.cavity.kappa_c), "dBm"],
        ["photon_number", photon_number(pin, dk.cavity.omega_c, dk.cavity.kappa_c), "1"],
        ["input_power", pin, "dBm"],
        ["matrix_element_x", m_x, "1"],
        ["matrix_element_z", m_z, "1"],
        ["spin_density", rho, "um^-3"],
        ["Vm", est.Vm, "um^3"],
        ["integral", est.integral, "G^2 um^3"],
        ["gc", est.gc, "MHz"],
        ["Ns", est.Ns, "1"],
        ["g0", est.g0, "Hz"],
    ]
    _emit(_csv(["quantity", "value", "unit"], rows), args.output)
    return EXIT_OK


def _loop_map(cfg: RunConfig) -> FieldMap:
    cp = cfg.section("coupling")
    x, y, z = default_loop_grid(cp.get("half_width", 30.0), cp.get("z_max", 30.0), cp.get("spacing", 1.0))
    return loop_field_model(
        cp.get("loop_radius", 15.0), cp.get("current", 1e-6), x, y, z, cp.get("wire_radius", 1.0)
    )


# dynamics -------------------------------------------------------------------


def _dynamics_config(cfg: RunConfig) -> tuple[DynamicsConfig, dict]:
    dy = cfg.section("dynamics")
    dk = cfg.dicke().with_values(n_max=dy.get("n_max", max(2, cfg.dicke().cavity.n_max)))
    try:
        dc = DynamicsConfig(
            dk,
            kappa_c=dy.get("kappa_c", dk.cavity.kappa_c),
            gamma_s=dy.get("gamma_s", 8.8),
            initial=dy.get("initial", "thermal"),
            time_step=dy.get("time_step"),
        )
    except ValueError as exc:
        raise ConfigError(f"[dynamics] {exc}") from exc
    return dc, dy


def cmd_dynamics(args) -> int:
    cfg = _load(args)
    dc, dy = _dynamics_config(cfg)
    system = DressedSystem(dc)
    E = system.energies
    drive = dy.get("drive_freq") or float(E[3] - E[1])
    amp = dy.get("drive_amp", 50.0)
    n_out = dy.get("n_out", 200)
    try:
        pulse = PulseSpec(drive, amp, dy.get("duration", 0.05))
    except ValueError as exc:
        raise ConfigError(f"[dynamics] {exc}") from exc
    outputs = []
    tr = evolve(dc, pulse, n_out, system)
    pops = reported_populations(tr)
    rows = ([t, amp, *p, pur] for t, p, pur in zip(tr.times, pops, tr.purity))
    outputs.append((_csv(["tau_us", "amp_MHz", "P1", "P2", "P4", "P5", "purity"], rows), args.output))
    tau, p2 = first_minimum(tr.times, tr.population(2))
    if np.isfinite(tau):
        print(f"inversion minimum P2 = {p2:.4g} at tau = {tau:.6g} us", file=sys.stderr)
    else:
        print("no inversion minimum within the pulse", file=sys.stderr)
    print(f"max top-level photon population {tr.leak.max():.3g}", file=sys.stderr)

    if args.scan:
        sc = inversion_scan(dc, dy.get("amps", [amp]), dy.get("tau_max", 0.4), drive, n_out, workers=_threads())
        outputs.append((_csv(["amp_MHz", "tauInv_us"], zip(sc.amps, sc.tau_inv)), args.scan))
    if args.cooling:
        pulse_a = PulseSpec(drive, amp, tau if np.isfinite(tau) else pulse.duration)
        b_amp, b_dur = dy.get("pulse_b_amp", 0.0), dy.get("pulse_b_duration", 0.0)
        pulse_b = PulseSpec(float(E[3]), b_amp, b_dur) if b_amp > 0 and b_dur > 0 else None
        res = cooling_sequence(dc, pulse_a, pulse_b, dy.get("repetitions", 1), dy.get("idle", 0.2), n_out=50)
        outputs.append((_csv(["cycle", "P1"], enumerate(res.p1_per_cycle)), args.cooling))
    for text, path in outputs:
        _emit(text, path)
    return EXIT_OK


# synth ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load(args)
    if args.kind == "dips":
        fit = cfg.section("fit")
        sw = cfg.section("sweep")
        fields = np.linspace(sw.get("h_min", -200.0), sw.get("h_max", 200.0), fit.get("n_points", 41))
        data = synthesize_dips(cfg.dicke(), fields)
        factor = fit.get("crossing_weight", 1.0)
        if factor != 1.0:
            data.weights = crossing_weights(data, fit.get("crossing_field", 72.0), factor=factor)
        writer = lambda path: write_dips_csv(data, path)  # noqa: E731
    elif args.kind == "trace":
        rf = cfg.section("reflection")
        freqs = np.linspace(rf.get("f_min", 17730.0), rf.get("f_max", 18130.0), rf.get("n_points", 801))
        trace = synthesize_trace(_reflection_params(cfg), freqs, rf.get("noise", 0.0), rf.get("seed", 0))
        writer = lambda path: write_trace_csv(trace, path)  # noqa: E731
    else:
        fmap = _loop_map(cfg)
        writer = lambda path: write_field_map_csv(fmap, path)  # noqa: E731
    writer(args.output)
    return EXIT_OK


# entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdcavity", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (default: bundled paper.cfg)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
    common.add_argument("-o", "--output", help="output CSV path (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", parents=[common], help="dressed energies and eigenvectors")
    p.add_argument("--field", type=float, help="field H0 in G (default: [zeeman] H0)")
    p.add_argument("--table1-style", action="store_true", help="real amplitudes, |c| < 0.01 shown as 0")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("sweep", parents=[common], help="transition frequencies and amplitudes vs field")
    p.add_argument("--render", nargs="?", const="", metavar="gamma=MHZ", help="also render a Lorentzian map")
    p.add_argument("--map-output", help="path of the rendered map CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="fit spin and cavity parameters to dip positions")
    p.add_argument("dipfile")
    p.add_argument("--history", help="write the cost history CSV here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-s11", parents=[common], help="fit coupling and linewidth to a reflection trace")
    p.add_argument("tracefile")
    p.add_argument("--history", help="write the cost history CSV here")
    p.set_defaults(func=cmd_fit_s11)

    p = sub.add_parser("coupling", parents=[common], help="ensemble and single-spin coupling estimate")
    p.add_argument("mapfile", nargs="?")
    p.add_argument("--loop-model", action="store_true", help="use the analytic current-loop field")
    p.add_argument("--vm-scan", action="store_true", help="emit coupling vs mode volume")
    p.set_defaults(func=cmd_coupling)

    p = sub.add_parser("dynamics", parents=[common], help="driven population dynamics")
    p.add_argument("--scan", metavar="PATH", help="write the inversion-time scan CSV here")
    p.add_argument("--cooling", metavar="PATH", help="write per-cycle ground population CSV here")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("synth", parents=[common], help="write synthetic input data")
    p.add_argument("kind", choices=["dips", "trace", "fieldmap"])
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not args.output:
        parser.error("synth needs -o/--output")
    try:
        return args.func(args)
    except FitFailed:
        print("error: fit did not converge; best iterate reported", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
