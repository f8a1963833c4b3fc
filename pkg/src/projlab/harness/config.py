"""Scenario configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

SCHEMA_VERSION = 1
TOP_LEVEL = {"schema_version", "id", "kind", "seed", "description", "physical", "numerical"}


class ConfigError(ValueError):
    """The configuration does not validate."""


_REQUIRED = object()

# per kind: (physical defaults, numerical defaults); _REQUIRED marks keys without a default
SCHEMAS = {
    "classical_drift": (
        {"system": "harmonic_pair", "mass": 1.0, "k": 1.0, "c": 0.5, "lam": 0.1, "n_env": 1,
         "beta": _REQUIRED},
        {"samples": 1_000_000, "chains": 8, "burn_in": 10_000, "thin": 10, "half_width": 5.0,
         "bins": 64, "min_count": 25, "z": 3.0},
    ),
    "relevant_density": (
        {"system": "harmonic_pair", "mass": 1.0, "k": 1.0, "c": 0.5, "lam": 0.1, "n_env": 1,
         "beta": _REQUIRED, "displacement": 0.0},
        {"samples": 1_000_000, "chains": 8, "burn_in": 10_000, "thin": 10, "half_width": 5.0,
         "bins": 64, "min_count": 25, "z": 3.0, "delta": 0.05, "dt": 1e-3,
         "times": [0.0, 0.5, 1.0]},
    ),
    "quantum_innerproduct": (
        {"dim_system": 2, "dim_env": 2, "g": 0.5, "beta": _REQUIRED, "trial_betas": [0.1, 1.0, 5.0],
         "factorized_betas": [0.1, 1.0, 2.0]},
        {"n_trials": 50, "dims": [2, 4, 8, 16], "quadrature_points": 64},
    ),
    "appendix_probe": (
        {"p": [[0.4, 0.1], [0.1, 0.4]], "beta": _REQUIRED, "observable": "sigma_x", "eps": 1.0,
         "sweep_p": [[0.5, 0.1], [0.1, 0.3]]},
        {"sweep_eps": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]},
    ),
    "tcl_split": (
        {"dim_env": 4, "omega": 1.0, "g": 0.2, "beta": _REQUIRED, "env_scale": 1.0,
         "initial_state": "excited"},
        {"t_max": 10.0, "n_steps": 200, "delta": 1e-3,
         "specs": ["hilbert_schmidt", "kubo_averaged", "deformed", "classical_weighted"],
         "weight": "reduced_equilibrium", "alpha": 0.5, "equilibration_tol": 0.05},
    ),
    "decomposition_identity": (
        {"dim_system": 2, "dim_env": 2, "beta": _REQUIRED, "scale": 1.0},
        {"n_trials": 5, "times": [0.5, 1.0, 2.0], "n_checkpoints": 1},
    ),
}

CHOICES = {
    "system": ("harmonic_pair", "harmonic_star", "quartic_pair"),
    "observable": ("sigma_x", "sigma_y", "sigma_z"),
    "initial_state": ("excited", "ground", "plus", "mixed"),
    "weight": ("reduced_equilibrium", "system_gibbs", "instantaneous"),
}
SPEC_KINDS = ("hilbert_schmidt", "deformed", "kubo_averaged", "classical_weighted")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_value(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if key in CHOICES:
        if value not in CHOICES[key]:
            raise ConfigError(f"{where} must be one of {list(CHOICES[key])}, got {value!r}")
        return value
    if key == "specs":
        if not isinstance(value, list) or not value or any(v not in SPEC_KINDS for v in value):
            raise ConfigError(f"{where} must be a non-empty list drawn from {list(SPEC_KINDS)}")
        return value
    if key in ("p", "sweep_p"):
        try:
            rows = [[float(v) for v in row] for row in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a matrix of probabilities") from None
        if len(rows) < 2 or len({len(r) for r in rows}) != 1:
            raise ConfigError(f"{where} must be a rectangular matrix with at least two rows")
        return rows
    if isinstance(default, list):
        if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
            raise ConfigError(f"{where} must be a non-empty list of numbers")
        if isinstance(default[0], int) and any(float(v) != int(v) for v in value):
            raise ConfigError(f"{where} must contain integers")
        return [type(default[0])(v) for v in value]
    if not _is_number(value):
        raise ConfigError(f"{where} must be a finite number, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if float(value) != int(value):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return int(value)
    return float(value)


_POSITIVE = {"beta", "mass", "k", "samples", "chains", "thin", "half_width", "bins", "t_max",
             "n_steps", "delta", "dt", "n_trials", "quadrature_points", "z", "dim_system",
             "dim_env", "n_env", "n_checkpoints", "env_scale", "scale"}


def validate(raw: dict) -> dict:
    """Return a normalized config with every default filled in; raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kind = raw.get("kind")
    if kind not in SCHEMAS:
        raise ConfigError(f"kind must be one of {sorted(SCHEMAS)}, got {kind!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    out = {"schema_version": SCHEMA_VERSION, "id": str(raw.get("id", kind)), "kind": kind,
           "seed": seed}
    if "description" in raw:
        out["description"] = str(raw["description"])
    for section, defaults in zip(("physical", "numerical"), SCHEMAS[kind]):
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{section} must be an object")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown {section} field(s) for {kind}: {sorted(unknown)}")
        block = {}
        for key, default in defaults.items():
            if key not in given:
                if default is _REQUIRED:
                    raise ConfigError(f"missing required field {section}.{key}")
                block[key] = copy.deepcopy(default)
                continue
            value = _check_value(section, key, given[key], default)
            if key in _POSITIVE and not value > 0:
                raise ConfigError(f"{section}.{key} must be positive, got {value!r}")
            block[key] = value
        out[section] = block
    _check_kind(out)
    return out


def _check_kind(cfg: dict) -> None:
    ph, nu = cfg["physical"], cfg["numerical"]
    kind = cfg["kind"]
    if "bins" in nu and nu["bins"] < 8:
        raise ConfigError("numerical.bins must be at least 8")
    if kind == "appendix_probe" and not 0.0 <= ph["eps"] <= 1.0:
        raise ConfigError("physical.eps must lie in [0, 1]")
    if kind == "appendix_probe":
        for key in ("p", "sweep_p"):
            if any(v < 0 for row in ph[key] for v in row) or abs(sum(map(sum, ph[key])) - 1) > 1e-9:
                raise ConfigError(f"physical.{key} must be non-negative and sum to 1")
            if len(ph[key]) != 2:
                raise ConfigError(f"physical.{key} needs exactly two rows (the observables are Pauli matrices)")
        if any(not 0.0 <= e <= 1.0 for e in nu["sweep_eps"]):
            raise ConfigError("numerical.sweep_eps values must lie in [0, 1]")
    if kind == "tcl_split":
        if 2 * ph["dim_env"] > 64:
            raise ConfigError("composite dimension exceeds 64")
        if not 0.0 <= nu["alpha"] <= 1.0:
            raise ConfigError("numerical.alpha must lie in [0, 1]")
    if kind == "quantum_innerproduct" and any(int(d) != d or d < 2 or d > 16 for d in nu["dims"]):
        raise ConfigError("numerical.dims must be integers between 2 and 16")
    if kind == "decomposition_identity" and (ph["dim_system"] < 2 or ph["dim_system"] * ph["dim_env"] > 8):
        raise ConfigError("decomposition_identity needs dim_system >= 2 and a composite dimension <= 8")


def load(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return validate(raw)


def parameter_path(cfg: dict, name: str) -> tuple[str, str]:
    """Resolve ``name`` or ``section.name`` to a schema location."""
    phys, num = SCHEMAS[cfg["kind"]]
    if "." in name:
        section, key = name.split(".", 1)
        if section in ("physical", "numerical") and key in (phys if section == "physical" else num):
            return section, key
    elif name in phys:
        return "physical", name
    elif name in num:
        return "numerical", name
    raise ConfigError(f"parameter {name!r} does not exist for kind {cfg['kind']}")
