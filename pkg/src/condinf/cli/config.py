"""Experiment configuration: one JSON document per run, validated up front.

Each subcommand has a schema mapping field names to :class:`Field`
descriptors. Validation is total: unknown fields, missing required fields,
wrong types and out-of-range values all raise :class:`ConfigError` naming
the offending field before any computation starts. Without a config file
the subcommand's built-in defaults describe the reference scenario.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable

from ..exceptions import ConfigError

__all__ = ["Field", "SCHEMAS", "DEFAULTS", "load_config", "validate"]

_REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: str  # int, float, str, bool, float_list, int_list, dict, float_or_null, object
    default: Any = _REQUIRED
    choices: tuple | None = None
    check: Callable[[Any], str | None] | None = None


def _positive(v):
    return None if v > 0 else "must be positive"


def _seed(v):
    return None if 0 <= v < 2 ** 64 else "must be an unsigned 64-bit integer"


def _sorted_nonempty(v):
    if not v:
        return "must be a nonempty list"
    if any(b < a for a, b in zip(v, v[1:])):
        return "must be sorted in increasing order"
    return None


def _positive_sorted(v):
    return _sorted_nonempty(v) or (None if all(x > 0 for x in v) else "entries must be positive")


def _levels(v):
    return _sorted_nonempty(v) or (None if all(0 < x < 1 for x in v) else "entries must lie in (0, 1)")


def _k_or_null(v):
    return None if v is None or v >= 1 else "must be at least 1"


_COMMON = {
    "seed": Field("int", 0, check=_seed),
}

_CENTRING = Field("str", "recentred", choices=("recentred", "literal"))
_PROPOSAL = Field("str", "tilted", choices=("tilted", "base"))
_MODELS = ("gamma_shape", "gamma_scale", "normal_variance", "normal_parabola")

SCHEMAS: dict[str, dict[str, Field]] = {
    "sufficiency-scan": {
        **_COMMON,
        "family": Field("str", choices=("gamma", "inverse_gaussian")),
        "statistic": Field("str", choices=("x", "log", "inv")),
        "params": Field("dict"),
        "sweep": Field("str", choices=("shape", "scale", "mean")),
        "grid": Field("float_list", None, check=_positive_sorted),
        "grid_points": Field("int", 50, check=_positive),
        "hold": Field("str", "canonical", choices=("canonical", "classical")),
        "n": Field("int", 100, check=_positive),
        "k": Field("int", 80, check=_positive),
        "centring": _CENTRING,
    },
    "rao-blackwell": {
        **_COMMON,
        "family": Field("str", choices=("gamma", "normal")),
        "params": Field("dict"),
        "divisor": Field("float_or_null", None),
        "n": Field("int", 100, check=_positive),
        "k_grid": Field("int_list", [2, 5, 10, 20, 40, 80], check=_positive_sorted),
        "outer_reps": Field("int", 500, check=_positive),
        "inner_reps": Field("int", 1000, check=_positive),
        "centring": _CENTRING,
        "proposal": _PROPOSAL,
    },
    "mc-test": {
        **_COMMON,
        "model": Field("str", choices=_MODELS),
        "interest": Field("float"),
        "nuisance": Field("float"),
        "interest0": Field("float_or_null", None),
        "n": Field("int", 100, check=_positive),
        "k": Field("int_or_null", None, check=_k_or_null),
        "L": Field("int", 100, check=lambda v: None if v >= 20 else "must be at least 20"),
        "method": Field("str", "both", choices=("conditional", "bootstrap", "both")),
        "nr_start": Field("float_or_null", None),
        "alternative": Field("str", "greater", choices=("greater", "less", "two-sided")),
        "centring": _CENTRING,
        "proposal": _PROPOSAL,
    },
    "power": {
        **_COMMON,
        "model": Field("str", choices=_MODELS),
        "interest0": Field("float"),
        "nuisance": Field("float"),
        "interest_grid": Field("float_list", check=_sorted_nonempty),
        "alpha_grid": Field("float_list", [0.01, 0.05, 0.1], check=_levels),
        "datasets_per_theta": Field("int", 500, check=_positive),
        "n": Field("int", 100, check=_positive),
        "k": Field("int_or_null", None, check=_k_or_null),
        "L": Field("int", 100, check=lambda v: None if v >= 20 else "must be at least 20"),
        "method": Field("str", "both", choices=("conditional", "bootstrap", "both")),
        "nr_start": Field("float_or_null", None),
        "alternative": Field("str", "greater", choices=("greater", "less", "two-sided")),
        "centring": _CENTRING,
        "proposal": _PROPOSAL,
    },
    "condmle-profile": {
        **_COMMON,
        "model": Field("str", "normal_parabola", choices=_MODELS),
        "interest": Field("float", 1.0),
        "nuisance": Field("float", 2.0),
        "n": Field("int", 100, check=_positive),
        "k": Field("int", 99, check=_positive),
        "theta_grid": Field("float_list", None, check=_sorted_nonempty),
        "nr_starts": Field("dict", {"good": 1.5, "bad": -1.5}),
        "centring": _CENTRING,
    },
    "oracle-check": {
        **_COMMON,
        "n_values": Field("int_list", [20, 50, 100, 200], check=_positive_sorted),
        "n": Field("int", 100, check=_positive),
        "u_total": Field("float_or_null", None),
        "draws": Field("int", 10_000, check=_positive),
        "ks_level": Field("float", 0.01, check=lambda v: None if 0 < v < 1 else "must lie in (0, 1)"),
        "rel_err_max": Field("float", 0.05, check=_positive),
        "tv_max": Field("float", 0.03, check=_positive),
        "tv_bins": Field("int", 10, check=_positive),
        "normal_k": Field("int", 50, check=_positive),
        "normal_loglik_tol": Field("float", 0.05, check=_positive),
        "tilt_points": Field("int", 20, check=_positive),
        "cumulant_rtol": Field("float", 1e-4, check=_positive),
        "k": Field("int", 1, check=_positive),
    },
}

# Built-in reference scenarios used when no config file is given.
DEFAULTS: dict[str, dict] = {
    "sufficiency-scan": {"family": "gamma", "statistic": "x", "params": {"shape": 2.0, "scale": 1.0},
                         "sweep": "scale"},
    "rao-blackwell": {"family": "gamma", "params": {"shape": 2.0, "scale": 1.0}},
    "mc-test": {"model": "gamma_shape", "interest": 2.0, "nuisance": 1.0, "k": 80},
    "power": {"model": "normal_parabola", "interest0": 1.0, "nuisance": 2.0, "interest_grid": [1.0, 2.0]},
    "condmle-profile": {},
    "oracle-check": {},
}


def _coerce(name, f: Field, v):
    def bad(msg):
        return ConfigError(f"field {name!r}: {msg} (got {v!r})")

    kind = f.kind
    if kind.endswith("_or_null"):
        if v is None:
            return None
        kind = kind[: -len("_or_null")]
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise bad("expected an integer")
    elif kind == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise bad("expected a finite number")
        v = float(v)
    elif kind == "str":
        if not isinstance(v, str):
            raise bad("expected a string")
    elif kind == "bool":
        if not isinstance(v, bool):
            raise bad("expected true or false")
    elif kind in ("float_list", "int_list"):
        if not isinstance(v, list):
            raise bad("expected a list")
        inner = Field(kind.split("_")[0])
        v = [_coerce(f"{name}[{i}]", inner, x) for i, x in enumerate(v)]
    elif kind == "dict":
        if not isinstance(v, dict):
            raise bad("expected an object")
        for key, x in v.items():
            _coerce(f"{name}.{key}", Field("float"), x)
        v = {key: float(x) for key, x in v.items()}
    if f.choices is not None and v not in f.choices:
        raise bad(f"must be one of {list(f.choices)}")
    if f.check is not None and v is not None:
        msg = f.check(v)
        if msg:
            raise bad(msg)
    return v


def validate(command: str, raw: dict) -> dict:
    """Full config for ``command`` with defaults filled in, or :class:`ConfigError`."""
    schema = SCHEMAS[command]
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown} for {command}; allowed: {sorted(schema)}")
    out = {}
    for name, f in schema.items():
        if name in raw:
            out[name] = _coerce(name, f, raw[name])
        elif f.default is _REQUIRED:
            raise ConfigError(f"missing required field {name!r} for {command}")
        else:
            d = f.default
            out[name] = list(d) if isinstance(d, list) else dict(d) if isinstance(d, dict) else d
    return out


def load_config(command: str, path: str | None, overrides: dict | None = None) -> dict:
    """Read, merge command-line overrides into, and validate a config.

    Overrides replace top-level scalar fields; ``None`` values are ignored.
    JSON syntax errors are reported with line and column.
    """
    if path is None:
        raw = json.loads(json.dumps(DEFAULTS[command]))
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in SCHEMAS[command]:
            raise ConfigError(f"--{key} is not applicable to {command}")
        raw[key] = v
    return validate(command, raw)
