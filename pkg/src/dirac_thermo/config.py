"""JSON run configuration: parsing, validation and model instantiation.

Schema::

    {
      "model": {"name": "lcr", "params": {"R": 2.0, "V": {"offset": 1.0}}},
      "initial": {"q": [...], "v": [...], "S": 0.0, "N": 0.05},
      "t_span": [0.0, 1.0],
      "dt": 0.001,
      "scheme": "rk4",
      "projection": true,
      "tolerances": {"energy_rel": 1e-8},
      "outputs": {"trajectory": "traj.csv", "report": "report.json"},
      "seed": 0
    }

Only ``model.name`` is required.  Omitted parameters and initial values take
the built-in defaults; signals (``T_ext``, ``V``, ``F_ext``) are a number or
``{"offset", "amplitude", "omega", "phase"}``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dynamics import SCHEMES
from .models import (
    BUILTINS,
    Drive,
    GasPistonParams,
    IdealGasParams,
    PortParams,
    SourceParams,
    get_builtin,
)

DEFAULT_TOLERANCES = {
    "energy_rel": 1e-8,
    "dirac": 1e-8,
    "cotangent": 1e-8,
    "constraint": 1e-10,
    "entropy_step": 1e-12,
    "gradient": 1e-6,
    "certify": 1e-10,
    "decomposition": 1e-12,
}

SIGNAL_KEYS = ("T_ext", "V", "F_ext")
NESTED = {"gas": IdealGasParams, "piston": GasPistonParams}
SEQUENCES = {"ports": PortParams, "sources": SourceParams}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""


@dataclass
class RunConfig:
    model_name: str
    params: Any
    initial: dict
    t_span: tuple
    dt: float
    scheme: str = "rk4"
    projection: bool = True
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    trajectory_path: str | None = None
    report_path: str | None = None
    seed: int = 0

    @property
    def spec(self):
        return get_builtin(self.model_name)


def _number(value, key) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(f"{key}: must be finite")
    return x


def _signal(value, key):
    if isinstance(value, dict):
        allowed = {f.name for f in dataclasses.fields(Drive)}
        for k in value:
            if k not in allowed:
                raise ConfigError(f"{key}.{k}: unknown signal key (allowed: {sorted(allowed)})")
        return Drive(**{k: _number(v, f"{key}.{k}") for k, v in value.items()})
    return _number(value, key)


def build_params(cls, data, base=None, path="model.params"):
    """Overlay the mapping ``data`` onto ``base`` (default-constructed if None)."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    base = cls() if base is None else base
    names = {f.name for f in dataclasses.fields(cls)}
    changes = {}
    for key, value in data.items():
        kp = f"{path}.{key}"
        if key not in names:
            raise ConfigError(f"{kp}: unknown parameter (allowed: {sorted(names)})")
        if key in SIGNAL_KEYS:
            changes[key] = _signal(value, kp)
        elif key in NESTED:
            changes[key] = build_params(NESTED[key], value, getattr(base, key), kp)
        elif key in SEQUENCES:
            if not isinstance(value, list):
                raise ConfigError(f"{kp}: expected a list")
            changes[key] = tuple(_sequence_item(SEQUENCES[key], item, f"{kp}[{i}]")
                                 for i, item in enumerate(value))
        else:
            changes[key] = _number(value, kp)
    return dataclasses.replace(base, **changes)


def _sequence_item(cls, item, path):
    if not isinstance(item, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    required = {f.name for f in dataclasses.fields(cls) if f.default is dataclasses.MISSING}
    for key in item:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown parameter (allowed: {sorted(names)})")
    missing = required - set(item)
    if missing:
        raise ConfigError(f"{path}.{sorted(missing)[0]}: required")
    return cls(**{k: _number(v, f"{path}.{k}") for k, v in item.items()})


def _vector(value, key, n):
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"{key}: expected a list of {n} numbers")
    return [_number(x, f"{key}[{i}]") for i, x in enumerate(value)]


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    known = {"model", "initial", "t_span", "dt", "scheme", "projection", "tolerances", "outputs", "seed"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown key (allowed: {sorted(known)})")
    model = raw.get("model")
    if not isinstance(model, dict) or "name" not in model:
        raise ConfigError("model.name: required")
    name = model["name"]
    if name not in BUILTINS:
        raise ConfigError(f"model.name: unknown model {name!r} (available: {sorted(BUILTINS)})")
    for key in model:
        if key not in ("name", "params"):
            raise ConfigError(f"model.{key}: unknown key")
    spec = BUILTINS[name]
    params = build_params(spec.params_type, model.get("params"), spec.default_params())
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"model.params: {exc}") from None

    initial = dict(spec.initial(params))
    init_raw = raw.get("initial", {})
    if not isinstance(init_raw, dict):
        raise ConfigError("initial: expected an object")
    n = len(initial["q"])
    for key, value in init_raw.items():
        if key in ("q", "v"):
            initial[key] = _vector(value, f"initial.{key}", n)
        elif key == "S" or (key == "N" and spec.is_open):
            initial[key] = _number(value, f"initial.{key}")
        else:
            raise ConfigError(f"initial.{key}: unknown key")

    t_span = raw.get("t_span", [0.0, 1.0])
    if not isinstance(t_span, list) or len(t_span) != 2:
        raise ConfigError("t_span: expected [t0, t1]")
    t0, t1 = _number(t_span[0], "t_span[0]"), _number(t_span[1], "t_span[1]")
    if not t1 > t0:
        raise ConfigError("t_span: need t1 > t0")
    dt = _number(raw.get("dt", 1e-3), "dt")
    if not dt > 0:
        raise ConfigError("dt: must be positive")
    if dt > t1 - t0:
        raise ConfigError("dt: must not exceed t1 - t0")
    scheme = raw.get("scheme", "rk4")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme: expected one of {list(SCHEMES)}, got {scheme!r}")
    projection = raw.get("projection", True)
    if not isinstance(projection, bool):
        raise ConfigError("projection: expected true or false")

    tolerances = dict(DEFAULT_TOLERANCES)
    tol_raw = raw.get("tolerances", {})
    if not isinstance(tol_raw, dict):
        raise ConfigError("tolerances: expected an object")
    for key, value in tol_raw.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}: unknown tolerance (allowed: {sorted(DEFAULT_TOLERANCES)})")
        tolerances[key] = _number(value, f"tolerances.{key}")
        if not tolerances[key] > 0:
            raise ConfigError(f"tolerances.{key}: must be positive")

    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("outputs: expected an object")
    for key in outputs:
        if key not in ("trajectory", "report"):
            raise ConfigError(f"outputs.{key}: unknown key")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")

    return RunConfig(name, params, initial, (t0, t1), dt, scheme, projection, tolerances,
                     outputs.get("trajectory"), outputs.get("report"), seed)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw)


def initial_tuple(cfg: RunConfig):
    init = cfg.initial
    q, v = np.asarray(init["q"], dtype=float), np.asarray(init["v"], dtype=float)
    if cfg.spec.is_open:
        return q, v, float(init["S"]), float(init["N"])
    return q, v, float(init["S"])
