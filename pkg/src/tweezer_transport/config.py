"""TOML run configuration in lab units, validated into SI objects."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .evolution import SCHEMES, EvolutionConfig
from .model import LAB_UNITS, PhysicalParams
from .optimizer import CONTROLS, BasisConfig, OptimizerConfig
from .pulses import TrajectoryKind


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "physical": {
        "mass_kg": 6.47e-26,
        "a_static_mhz": 0.53,
        "sigma_static_um": 0.35,
        "n_static": 2,
        "separation_um": 7.0,
        "sigma_moving_um": 0.47,
    },
    "grid": {"padding_um": 2.0, "dx_um": 0.02},
    "evolution": {
        "n_steps": 5000,
        "scheme": "strang",
        "record_stride": 1,
        "occupation_stride": 25,
        "k_states": 60,
    },
    "pulse": {
        "family": "sta",
        "total_time_ms": 1.0,
        "a_max_mhz": 3.57,
        "eta": 0.4,
        "amplitude_reference": "global",
    },
    "sweep": {
        "families": ["linear", "hybrid_0.8", "hybrid_0.4", "min_jerk", "quadratic", "sta"],
        "t_min_ms": 0.01,
        "t_max_ms": 3.0,
        "n_t": 60,
        "t_ms": [],
        "a_max_mhz": [3.57],
        "threshold": 1e-4,
        "occupations": True,
    },
    "optimizer": {
        "families": ["min_jerk"],
        "t_ms": [1.0],
        "n_functions": 6,
        "center_range": [0.05, 0.95],
        "width_range": [0.05, 0.5],
        "n_superiterations": 4,
        "max_evals_per_si": 400,
        "simplex_init_scale": 0.05,
        "convergence_tol": 1e-7,
        "controls": ["position", "amplitude"],
        "amplitude_cap_mhz": 0.0,
    },
    "validate": {
        "dx_um": [0.005, 0.0077, 0.0119, 0.0183, 0.0281, 0.0432, 0.0665, 0.1],
        "exponent_range": [1.8, 2.8],
        "max_error": 1e-4,
        "strang_max_infidelity": 1e-6,
        "min_scheme_gap": 100.0,
    },
    "output": {"dir": "results"},
}

_REQUIRED = {"physical": set(DEFAULTS["physical"])}


def _check_type(section, key, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"[{section}] {key}: expected {type(default).__name__}, got {value!r}")


def merge(raw: dict) -> dict:
    """Overlay ``raw`` on the defaults, rejecting unknown keys and missing physics."""
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key not in cfg:
            raise ConfigError(f"unknown key or section {key!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be a section")
            missing = _REQUIRED.get(key, set()) - set(value)
            if missing:
                raise ConfigError(f"[{key}] missing required field(s): {', '.join(sorted(missing))}")
            for k, v in value.items():
                if k not in cfg[key]:
                    raise ConfigError(f"[{key}] unknown key {k!r}")
                _check_type(key, k, v, cfg[key][k])
                cfg[key][k] = v
        else:
            _check_type("top", key, value, cfg[key])
            cfg[key] = value
    return cfg


def load(path=None, overrides: dict | None = None) -> "RunConfig":
    """Read a TOML file (or the defaults) and apply ``{section: {key: value}}`` overrides."""
    raw = {}
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    cfg = merge(raw)
    for section, values in (overrides or {}).items():
        if isinstance(values, dict):
            cfg[section].update(values)
        else:
            cfg[section] = values
    return RunConfig.from_dict(cfg)


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive, got {value!r}")


def _family(name):
    if name in ("sta", "sta_approx"):
        return name
    try:
        return TrajectoryKind.parse(name).label
    except ValueError as exc:
        raise ConfigError(f"unknown pulse family {name!r}") from exc


@dataclass
class RunConfig:
    """Validated configuration; all attributes are SI."""

    physical: PhysicalParams
    padding: float
    dx: float
    evolution: EvolutionConfig
    family: str
    total_time: float
    a_max: float
    eta: float
    amplitude_reference: str
    sweep_families: list
    sweep_times: np.ndarray
    sweep_amplitudes: np.ndarray
    threshold: float
    sweep_occupations: bool
    opt_families: list
    opt_times: np.ndarray
    basis: BasisConfig
    optimizer: OptimizerConfig
    validate: dict
    output_dir: Path
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        ph = cfg["physical"]
        for k in ("mass_kg", "a_static_mhz", "sigma_static_um", "separation_um", "sigma_moving_um"):
            _positive(f"[physical] {k}", ph[k])
        if ph["n_static"] < 1:
            raise ConfigError("[physical] n_static must be >= 1")
        p = PhysicalParams.from_lab(ph["mass_kg"], ph["a_static_mhz"], ph["sigma_static_um"],
                                    ph["n_static"], ph["separation_um"], ph["sigma_moving_um"])
        g = cfg["grid"]
        _positive("[grid] padding_um", g["padding_um"])
        _positive("[grid] dx_um", g["dx_um"])

        ev = cfg["evolution"]
        if ev["scheme"] not in SCHEMES:
            raise ConfigError(f"[evolution] scheme must be one of {SCHEMES}")
        try:
            evo = EvolutionConfig(ev["n_steps"], ev["scheme"], ev["record_stride"],
                                  ev["occupation_stride"], ev["k_states"])
        except ValueError as exc:
            raise ConfigError(f"[evolution] {exc}") from exc

        pu = cfg["pulse"]
        _positive("[pulse] total_time_ms", pu["total_time_ms"])
        _positive("[pulse] a_max_mhz", pu["a_max_mhz"])
        if not 0 < pu["eta"] < 1:
            raise ConfigError("[pulse] eta must lie in (0, 1)")
        if pu["amplitude_reference"] not in ("global", "capture"):
            raise ConfigError("[pulse] amplitude_reference must be 'global' or 'capture'")

        sw = cfg["sweep"]
        if sw["t_ms"]:
            times = np.array(sw["t_ms"], dtype=float)
        else:
            _positive("[sweep] t_min_ms", sw["t_min_ms"])
            if not sw["t_max_ms"] > sw["t_min_ms"]:
                raise ConfigError("[sweep] t_max_ms must exceed t_min_ms")
            if sw["n_t"] < 1:
                raise ConfigError("[sweep] n_t must be >= 1")
            times = np.geomspace(sw["t_min_ms"], sw["t_max_ms"], sw["n_t"])
        if np.any(~(times > 0)):
            raise ConfigError("[sweep] times must be positive")
        amps = np.array(sw["a_max_mhz"], dtype=float)
        if amps.size == 0 or np.any(~(amps > 0)):
            raise ConfigError("[sweep] a_max_mhz must be a non-empty list of positive values")
        if not 0 < sw["threshold"] < 1:
            raise ConfigError("[sweep] threshold must lie in (0, 1)")

        op = cfg["optimizer"]
        opt_times = np.array(op["t_ms"], dtype=float)
        if np.any(~(opt_times > 0)):
            raise ConfigError("[optimizer] t_ms must be positive")
        if any(c not in CONTROLS for c in op["controls"]):
            raise ConfigError(f"[optimizer] controls must be a subset of {CONTROLS}")
        try:
            basis = BasisConfig(op["n_functions"], tuple(op["center_range"]),
                                tuple(op["width_range"]), cfg["seed"])
            cap = op["amplitude_cap_mhz"]
            if cap < 0:
                raise ValueError("amplitude_cap_mhz must be >= 0 (0 means the guess maximum)")
            ocfg = OptimizerConfig(op["n_superiterations"], op["max_evals_per_si"],
                                   op["simplex_init_scale"], op["convergence_tol"],
                                   tuple(op["controls"]),
                                   float(LAB_UNITS.depth_to_si(cap)) if cap > 0 else None)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[optimizer] {exc}") from exc

        va = cfg["validate"]
        if len(va["dx_um"]) < 6 or any(not v > 0 for v in va["dx_um"]):
            raise ConfigError("[validate] dx_um needs at least 6 positive values")

        return cls(
            physical=p,
            padding=float(LAB_UNITS.length_to_si(g["padding_um"])),
            dx=float(LAB_UNITS.length_to_si(g["dx_um"])),
            evolution=evo,
            family=_family(pu["family"]),
            total_time=float(LAB_UNITS.time_to_si(pu["total_time_ms"])),
            a_max=float(LAB_UNITS.depth_to_si(pu["a_max_mhz"])),
            eta=float(pu["eta"]),
            amplitude_reference=pu["amplitude_reference"],
            sweep_families=[_family(f) for f in sw["families"]],
            sweep_times=LAB_UNITS.time_to_si(times),
            sweep_amplitudes=LAB_UNITS.depth_to_si(amps),
            threshold=float(sw["threshold"]),
            sweep_occupations=bool(sw["occupations"]),
            opt_families=[_family(f) for f in op["families"]],
            opt_times=LAB_UNITS.time_to_si(opt_times),
            basis=basis,
            optimizer=ocfg,
            validate=dict(va),
            output_dir=Path(cfg["output"]["dir"]),
            seed=int(cfg["seed"]),
            raw=cfg,
        )
