"""Flat typed key-value configuration.

Grammar, one entry per line::

    # comment
    section.key = <python literal>

Keys are dotted identifiers.  Values are Python literals (numbers, strings,
booleans, ``None``, tuples and lists of those) read with
:func:`ast.literal_eval`.  Blank lines and ``#`` comments are ignored; a key
may appear only once per file.  Every key must exist in the preset being
overridden, and the value must have a compatible type (an int is accepted
where a float is expected, a list where a tuple is expected).
"""
from __future__ import annotations

import ast
import copy
import re

KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class ConfigError(ValueError):
    pass


LV_DEFAULTS = {
    "alpha": 1.0,
    "beta": 1.0,
    "gamma": 1.0,
    "delta": 1.0,
    "domain": (0.5, 2.5),
    "n_sub": 10,
    "n_nodes": 4,
    "sizes": (2, 4, 4, 4, 2),
    "T": 1.0,
    "tableau": "rk4",
    "eps": [1e-3, 1e-4, 1e-5],
    "h": [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9],
    "eps_sweep": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
    "eps_sweep_h": 2.0**-9,
    "oracle_tol": 1e-12,
    "init_scale": 0.5,
    "params": "",
    "fit.T": 1.0,
    "fit.eps": 1e-6,
    "fit.N": 2000,
    "fit.tableau": "rk4",
    "fit.threshold": 1e-2,
}

DW_DEFAULTS = {
    "M": 12,
    "grid": None,
    "T": 3.0,
    "alpha2": -0.125,
    "alpha4": 0.015625,
    "q_ell": -2.0,
    "kinetic": 0.5,
    "node_scale": 2.0**-0.5,
    "eps_init": 1e-10,
    "variant": "plain",
    "tableau": "rk4",
    "eps": [1e-2, 1e-3, 1e-4, 1e-5],
    "h": [0.05, 0.025, 0.0125, 0.00625, 0.003125],
    "reference.lo": -12.0,
    "reference.hi": 12.0,
    "reference.n": 2048,
    "reference.dt": 1e-4,
    "trajectories": True,
}

DW_PAPER = {"M": 36, "grid": (6, 6), "T": 12.0, "node_scale": 1.0,
            "h": [0.032, 0.016, 0.008, 0.004], "eps": [1e-2, 1e-3, 1e-4, 1e-5]}

SWEEP_DEFAULTS = {
    "experiment": "lv",
    "axis": "h",
    "values": [],
    "fixed": 1e-3,
}

RUN_DEFAULTS = {"seed": 0, "threads": 0}


def defaults(paper_scale: bool = False) -> dict:
    dw = dict(DW_DEFAULTS)
    if paper_scale:
        dw.update(DW_PAPER)
    return {
        "run": dict(RUN_DEFAULTS),
        "lv": dict(LV_DEFAULTS),
        "dw": dw,
        "sweep": dict(SWEEP_DEFAULTS),
    }


def parse_text(text: str) -> dict:
    """Flat ``{dotted_key: value}`` mapping from config text."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: invalid key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        value = value.strip()
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"line {lineno}: cannot read value {value!r} for {key!r}") from exc
    return out


def _coerce(key: str, value, default):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a sequence, got {value!r}")
        return type(default)(value)
    return value


def apply_overrides(cfg: dict, flat: dict) -> dict:
    cfg = copy.deepcopy(cfg)
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section not in cfg or name not in cfg[section]:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[section][name] = _coerce(key, value, cfg[section][name])
    return cfg


def load(path: str | None = None, paper_scale: bool = False) -> dict:
    cfg = defaults(paper_scale)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = apply_overrides(cfg, parse_text(text))
    validate(cfg)
    return cfg


def parse_grid(value):
    """``None``, ``(nx, nxi)`` or the string ``"6x6"``."""
    if value is None:
        return None
    if isinstance(value, str):
        parts = value.lower().split("x")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise ConfigError(f"grid must look like '6x6', got {value!r}")
        return int(parts[0]), int(parts[1])
    if len(value) != 2:
        raise ConfigError(f"grid needs two entries, got {value!r}")
    return int(value[0]), int(value[1])


def _positive_sorted(key, values):
    if not values:
        raise ConfigError(f"{key}: empty list")
    if any(not v > 0 for v in values):
        raise ConfigError(f"{key}: values must be positive")


def validate(cfg: dict) -> None:
    lv, dw, sw = cfg["lv"], cfg["dw"], cfg["sweep"]
    for k in ("alpha", "beta", "gamma", "delta"):
        if not lv[k] > 0:
            raise ConfigError(f"lv.{k} must be positive")
    lo, hi = lv["domain"]
    if not lo < hi:
        raise ConfigError("lv.domain must be a nonempty interval")
    for key in ("eps", "h", "eps_sweep"):
        _positive_sorted(f"lv.{key}", lv[key])
    for key in ("eps", "h"):
        _positive_sorted(f"dw.{key}", dw[key])
    if dw["variant"] not in ("plain", "modified1", "selfadjoint", "modified2", "strang"):
        raise ConfigError(f"dw.variant {dw['variant']!r} is not one of plain, modified1, selfadjoint (modified2), "
                          "strang")
    dw["grid"] = parse_grid(dw["grid"])
    if sw["experiment"] not in ("lv", "dw"):
        raise ConfigError("sweep.experiment must be 'lv' or 'dw'")
    if sw["axis"] not in ("h", "eps"):
        raise ConfigError("sweep.axis must be 'h' or 'eps'")
    if sw["values"]:
        _positive_sorted("sweep.values", sw["values"])
    if cfg["run"]["threads"] < 0:
        raise ConfigError("run.threads must be nonnegative")


def dumps(cfg: dict) -> str:
    """Config text that :func:`load` reads back to ``cfg``."""
    lines = []
    for section, values in cfg.items():
        for name, value in values.items():
            lines.append(f"{section}.{name} = {value!r}")
    return "\n".join(lines) + "\n"
