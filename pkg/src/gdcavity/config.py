"""Plain-text run configuration: ``[section]`` headers and ``key = value`` lines.

Every key is typed by a fixed schema; unknown sections or keys are errors,
and every error message names the line, section and key involved.
"""

from __future__ import annotations

import copy

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .dicke import CavityParams, DickeConfig
from .errors import ConfigError
from .spin import CrystalFieldParams, SpinParams, ZeemanConfig

FIT_PARAMS = ("B20", "B40", "B44", "B60", "B64", "omega_c", "theta", "gc")


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _str_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split()]


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in _str_list(text):
        i, f = tok.split("-")
        out.append((int(i), int(f)))
    return out


def _bound(text: str) -> tuple[float, float]:
    lo, hi = _float_list(text)
    if not lo < hi:
        raise ValueError("lower bound must be below upper bound")
    return lo, hi


def _float_or_auto(text: str) -> float | None:
    return None if text.strip().lower() == "auto" else float(text)


def _initial(text: str) -> str | int:
    t = text.strip().lower()
    return "thermal" if t == "thermal" else int(t)


_fit_float = {name: float for name in FIT_PARAMS}

SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "spin": {"S": float, "g_par": float, "g_perp": float},
    "crystal_field": {"B20": float, "B40": float, "B44": float, "B60": float, "B64": float},
    "zeeman": {"H0": float, "theta": float, "phi": float},
    "cavity": {"omega_c": float, "kappa_c": float, "kappa_e": float, "n_max": int},
    "dicke": {"gc": float, "temperature": float},
    "sweep": {
        "h_min": float,
        "h_max": float,
        "n_points": int,
        "transitions": _pairs,
        "gamma": float,
        "freq_min": float,
        "freq_max": float,
        "freq_step": float,
    },
    "reflection": {
        "omega_s": _float_or_auto,
        "gc2L": float,
        "gamma_s": float,
        "f_min": float,
        "f_max": float,
        "n_points": int,
        "noise": float,
        "seed": int,
    },
    "fit": {
        "free": _str_list,
        "seed": int,
        "restarts": int,
        "max_evals": int,
        "crossing_field": float,
        "crossing_weight": float,
        "n_points": int,
    },
    "fixed": dict(_fit_float),
    "init": dict(_fit_float),
    "bounds": {name: _bound for name in FIT_PARAMS},
    "dynamics": {
        "n_max": int,
        "kappa_c": float,
        "gamma_s": float,
        "drive_freq": _float_or_auto,
        "drive_amp": float,
        "duration": float,
        "time_step": _float_or_auto,
        "initial": _initial,
        "n_out": int,
        "amps": _float_list,
        "tau_max": float,
        "pulse_b_amp": float,
        "pulse_b_duration": float,
        "idle": float,
        "repetitions": int,
    },
    "coupling": {
        "loop_radius": float,
        "current": float,
        "wire_radius": float,
        "half_width": float,
        "z_max": float,
        "spacing": float,
        "rho": _float_or_auto,
        "abundance": float,
        "selectivity": float,
        "matrix_element": _float_or_auto,
        "vm": float,
        "target_gc": _float_or_auto,
        "vm_scan": _float_list,
        "pin_dbm": float,
    },
}


@dataclass
class RunConfig:
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: str = "<string>"

    def section(self, name: str) -> dict[str, Any]:
        return self.sections.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str):
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"{self.source}: missing required key [{section}] {key}") from None

    def dicke(self) -> DickeConfig:
        sp = self.section("spin")
        cf = self.section("crystal_field")
        zm = self.section("zeeman")
        cav = self.section("cavity")
        dk = self.section("dicke")
        try:
            return DickeConfig(
                gc=dk.get("gc", 0.0),
                spin=SpinParams(**sp),
                cf=CrystalFieldParams(**cf),
                zeeman=ZeemanConfig(**zm),
                cavity=CavityParams(omega_c=self.require("cavity", "omega_c"), **{
                    k: v for k, v in cav.items() if k != "omega_c"
                }),
                temperature=dk.get("temperature", 0.38),
            )
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    sections: dict[str, dict[str, Any]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{where}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"{where}: entry outside of any section")
        if "=" not in line:
            raise ConfigError(f"{where}: [{current}] expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[current]:
            raise ConfigError(f"{where}: [{current}] unknown key {key!r}")
        if key in sections[current]:
            raise ConfigError(f"{where}: [{current}] duplicate key {key!r}")
        try:
            sections[current][key] = SCHEMA[current][key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: [{current}] {key}: invalid value {value!r} ({exc})") from None
    cfg = RunConfig(sections, source)
    for name in cfg.section("fit").get("free", []):
        if name not in FIT_PARAMS:
            raise ConfigError(f"{source}: [fit] free: unknown parameter {name!r}")
    return cfg


def apply_overrides(cfg: RunConfig, items: list[str]) -> RunConfig:
    """Copy of ``cfg`` with ``section.key=value`` overrides applied."""
    sections = copy.deepcopy(cfg.sections)
    for item in items:
        head, sep, value = item.partition("=")
        section, dot, key = head.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override {item!r}: unknown key [{section}] {key}")
        try:
            sections.setdefault(section, {})[key] = SCHEMA[section][key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"override {item!r}: invalid value ({exc})") from None
    return RunConfig(sections, cfg.source)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def bundled_config_text() -> str:
    return resources.files("gdcavity").joinpath("data/paper.cfg").read_text()


def bundled_config() -> RunConfig:
    """The bundled regression configuration with the published constants."""
    return parse_config(bundled_config_text(), "paper.cfg")
