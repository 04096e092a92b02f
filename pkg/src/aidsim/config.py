"""Run configuration: YAML file merged over built-in defaults.

Every section has complete defaults, so an empty file reproduces the
reference scenario. Unknown keys are rejected with their dotted path.
"""

from __future__ import annotations

import copy
import dataclasses
from typing import Any, Dict, Optional

import yaml

from .carrier_dynamics import MaterialParams
from .sensitivity import QubitReadoutParams, TimingBudget

__all__ = ["ConfigError", "DEFAULTS", "load_config", "resolve", "build"]


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _fields(cls) -> Dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(cls)}


DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "material": _fields(MaterialParams),
    "qubit": _fields(QubitReadoutParams),
    "timing": {
        "t_i": 1e-6,
        "t_r": 3e-7,
        "t_e": 15e-6,
        "t_scc": 1e-7,
        "t_ia": 5e-3,
        "t_ra": 5e-3,
        "n": 10000,
    },
    "sensitivity": {
        "parameter": "ka_mean",
        "values": [1, 2, 5, 10, 22, 50, 100, 200, 500, 1000],
    },
    "pde": {
        "n_max": 10000,
        "spacing": "linear",
        "samples": 41,
        "per_decade": 10,
        "epsilons": [0.0],
        "profile_cycles": None,
        "rtol": 1e-4,
        "grid": {"dr_min": 0.08, "dr_max": 5.0, "refine": 1},
    },
    "odmr": {
        "mode": "sos",
        "start_hz": 2.84e9,
        "stop_hz": 2.90e9,
        "points": 61,
        "n": 10000,
        "runs": 200,
        "off_point_hz": None,
        "fwhm_hz": 7e6,
        "center_hz": 2.87e9,
        "contrast_aid": 0.36,
        "background_defects": 0,
        "q_w": 0.8,
        "schedule": {"mode": "constant", "value": 1.0, "path": None},
    },
    "curve": {
        "n_values": [100, 300, 1000, 3000, 10000, 30000, 100000, 300000, 1000000, 3000000, 10000000],
        "runs": 1000,
        "epsilons": [1.0],
        "background_defects": [0],
        "q_w": 0.8,
        "contrast_aid": 0.36,
        "schedule": {"mode": "pde", "value": 1.0, "path": None, "per_decade": 8},
        "resamples": 1000,
    },
    "image": {
        "source": "forward",
        "on_path": None,
        "off_path": None,
        "pitch_um": 0.8,
        "shape": [50, 50],
        "front_radius_um": 11.5,
        "carrier_ratio": 0.9,
        "capture_length_um": 1.0,
        "ancilla_density_um3": 70.0,
        "photons_per_ancilla": 22.0,
        "background_counts": 100.0,
        "noise": True,
        "mode": "siv",
        "inner_mask_um": 2.0,
        "r_grid_um": [float(r) for r in range(2, 20)],
        "w_grid_um": [float(w) for w in range(1, 11)],
    },
}

# sections whose values may legitimately be null or lists of any length
_FREE = {"sensitivity.values", "pde.epsilons", "pde.profile_cycles", "curve.n_values",
         "curve.epsilons", "curve.background_defects", "image.r_grid_um", "image.w_grid_um",
         "image.shape", "image.on_path", "image.off_path", "odmr.off_point_hz",
         "odmr.schedule.path", "curve.schedule.path", "qubit.k_mean"}


def _merge(base, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(override).__name__}")
    out = copy.deepcopy(base)
    for key, value in override.items():
        p = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"{p}: unknown key")
        if isinstance(base[key], dict) and p not in _FREE:
            out[key] = _merge(base[key], value if value is not None else {}, p)
        else:
            if p not in _FREE and base[key] is not None:
                value = _coerce(base[key], value, p)
            out[key] = value
    return out


def _coerce(default, value, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            if isinstance(value, str):
                try:
                    value = float(value)
                except ValueError:
                    raise ConfigError(f"{path}: expected a number, got {value!r}") from None
            else:
                raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(default, int) and not isinstance(default, bool):
            if float(value) != int(value):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            return int(value)
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def resolve(overrides: Optional[dict] = None, seed: Optional[int] = None) -> dict:
    """Defaults merged with ``overrides``; ``seed`` (if given) wins over the file."""
    cfg = _merge(DEFAULTS, overrides or {})
    if seed is not None:
        cfg["seed"] = seed
    if int(cfg["seed"]) != cfg["seed"] or not 0 <= int(cfg["seed"]) < 2**64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {cfg['seed']!r}")
    cfg["seed"] = int(cfg["seed"])
    return cfg


def load_config(path: Optional[str], seed: Optional[int] = None) -> dict:
    """Read a YAML file (or nothing) and return the fully resolved configuration."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"<file>: {path} is not valid YAML: {exc}") from None
    return resolve(data, seed)


def build(cls, section: dict, path: str):
    """Instantiate a parameter dataclass, re-raising validation errors with ``path``."""
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def material(cfg) -> MaterialParams:
    return build(MaterialParams, cfg["material"], "material")


def qubit(cfg, **changes) -> QubitReadoutParams:
    return build(QubitReadoutParams, {**cfg["qubit"], **changes}, "qubit")


def timing(cfg, **changes) -> TimingBudget:
    return build(TimingBudget, {**cfg["timing"], **changes}, "timing")
