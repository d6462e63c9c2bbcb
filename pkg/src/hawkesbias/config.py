"""Flat ``key = value`` config files with includes.

Values are Python literals (numbers, strings, lists, dicts); anything that
does not parse as a literal is kept as a bare string.  Dotted keys address
nested sections, e.g. ``multistart.top_k = 3`` or ``params.n_values = [0.1]``.
A line ``include = name`` merges another file first (later keys win); the
name is resolved against the including file's directory, then the bundled
presets.
"""

from __future__ import annotations

import ast
from importlib import resources
from pathlib import Path

from .calibrate import MultiStartConfig
from .experiments import ExperimentConfig

__all__ = ["ConfigError", "parse_config", "load_config", "preset_path", "list_presets", "experiment_config"]


class ConfigError(ValueError):
    pass


def preset_path(name):
    base = resources.files("hawkesbias") / "presets"
    fname = name if name.endswith(".cfg") else name + ".cfg"
    p = Path(str(base / fname))
    return p if p.is_file() else None


def list_presets():
    base = Path(str(resources.files("hawkesbias") / "presets"))
    return sorted(p.stem for p in base.glob("*.cfg"))


def _value(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _resolve(name, here):
    if here is not None:
        cand = (here / name).resolve()
        if cand.is_file():
            return cand
    p = Path(name)
    if p.is_file():
        return p.resolve()
    p = preset_path(name)
    if p is None:
        raise ConfigError(f"cannot resolve include {name!r}")
    return p


def parse_config(text, here=None, _seen=()):
    """Parse config text into a flat ``{dotted_key: value}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if " #" in line:
            line = line.split(" #", 1)[0].strip()
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key == "include":
            path = _resolve(str(_value(val)), here)
            if path in _seen:
                raise ConfigError(f"include cycle through {path}")
            out.update(parse_config(path.read_text(), path.parent, _seen + (path,)))
        else:
            out[key] = _value(val)
    return out


def load_config(path):
    path = _resolve(str(path), None) if not Path(path).is_file() else Path(path).resolve()
    return parse_config(path.read_text(), path.parent, (path,))


_TOP = {"experiment", "realizations", "T", "burn_in", "scale", "seed", "jobs"}
_MULTI = {"grid_size", "top_k", "xatol", "fatol", "maxiter", "initial_step", "jobs", "start_bounds", "search_bounds"}


def experiment_config(flat, **overrides):
    """Build an :class:`ExperimentConfig` from a flat dict (plus keyword overrides)."""
    flat = {**flat, **{k: v for k, v in overrides.items() if v is not None}}
    top, multi, params = {}, {}, {}
    for key, val in flat.items():
        if key in _TOP:
            top[key] = val
        elif key.startswith("multistart."):
            sub = key.split(".", 1)[1]
            if sub not in _MULTI:
                raise ConfigError(f"unknown multistart option {sub!r}")
            multi[sub] = val
        elif key.startswith("params."):
            params[key.split(".", 1)[1]] = val
        else:
            raise ConfigError(f"unknown config key {key!r}")
    ms = MultiStartConfig()
    for k, v in multi.items():
        if k in ("start_bounds", "search_bounds"):
            getattr(ms, k).update({name: tuple(b) for name, b in v.items()})
        else:
            setattr(ms, k, v)
    if "jobs" in top:
        ms.jobs = 1  # parallelism lives at the realization level
    for k in ("T", "burn_in", "scale"):
        if top.get(k) is not None:
            top[k] = float(top[k])
    for k in ("realizations", "seed", "jobs"):
        if k in top:
            top[k] = int(top[k])
    return ExperimentConfig(multistart=ms, params=params, **top)
