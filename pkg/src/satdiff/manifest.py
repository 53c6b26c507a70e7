"""Scenario manifests: one JSON tree holding the simulation, diagnostics and
verification settings.  Every validation error carries the dotted path of
the offending field.

Reference manifests ship with the package and can be named instead of a
path (``--manifest gibbs-1d``).
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError, SatDiffError
from .mesh import Grid
from .model import EnergyDensity, Potential, PotentialSpec, Saturation
from .solver import InitialDatum, SimulationConfig

CHECKS = ("caccioppoli", "log", "degiorgi", "geometric")
LEVEL_RULES = ("rho_max-omega/2", "omega/2", "mu_plus-omega/2", "mu_minus+omega/2")


@dataclass
class CascadeSpec:
    vertex: tuple[float, ...]
    R: float
    t0: Optional[float] = None
    eps: Optional[float] = None
    max_levels: int = 12


@dataclass
class DiagnosticsSpec:
    cascades: list[CascadeSpec] = field(default_factory=list)
    nu: float = 0.5
    tail_fraction: float = 0.1
    gap_tol: float = 1e-4
    residual_tol: Optional[float] = None


@dataclass
class Manifest:
    scenario: str
    config: SimulationConfig
    diagnostics: DiagnosticsSpec
    verify: list[dict]
    output: Optional[str]
    source: dict

    @property
    def interaction_free(self) -> bool:
        return self.config.pots.W.is_zero


# helpers --------------------------------------------------------------------------

def _obj(tree: Any, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(tree, dict):
        raise ConfigError(path, "expected an object")
    unknown = set(tree) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
                          "unknown field")
    for key in sorted(required):
        if key not in tree:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return tree


def _num(tree: dict, key: str, path: str, default=None, *, lo=None, hi=None,
         lo_open=False, hi_open=False, integer=False, optional=False):
    p = f"{path}.{key}" if path else key
    if key not in tree or tree[key] is None:
        if default is None and not optional:
            raise ConfigError(p, "missing required field")
        return default
    v = tree[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(p, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(p, "must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(p, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(p, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
    return int(v) if integer else float(v)


def _vec(tree: dict, key: str, path: str, dim: Optional[int] = None, optional=False):
    p = f"{path}.{key}"
    if key not in tree or tree[key] is None:
        if optional:
            return None
        raise ConfigError(p, "missing required field")
    v = tree[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                          for x in v):
        raise ConfigError(p, "expected a list of numbers")
    if dim is not None and len(v) != dim:
        raise ConfigError(p, f"expected {dim} coordinates, got {len(v)}")
    return tuple(float(x) for x in v)


def _table(tree: dict, key: str, path: str):
    p = f"{path}.{key}"
    v = tree.get(key)
    if (not isinstance(v, list) or len(v) != 2 or not all(isinstance(c, list) for c in v)
            or len(v[0]) != len(v[1]) or len(v[0]) < 2):
        raise ConfigError(p, "expected two equal-length columns [[x...], [y...]]")
    return tuple(float(x) for x in v[0]), tuple(float(y) for y in v[1])


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (SatDiffError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


# blocks ------------------------------------------------------------------------------

def _grid(tree) -> Grid:
    g = _obj(tree, "grid", {"extents", "cells", "domain", "n", "dim"})
    if "extents" in g:
        ext, cells = g.get("extents"), g.get("cells")
        if not isinstance(ext, list) or not all(isinstance(e, list) and len(e) == 2 for e in ext):
            raise ConfigError("grid.extents", "expected a list of [a, b] pairs")
        if not isinstance(cells, list) or len(cells) != len(ext):
            raise ConfigError("grid.cells", "expected one cell count per axis")
        return _wrap("grid", Grid, tuple(tuple(e) for e in ext), tuple(cells))
    dom = g.get("domain")
    if not isinstance(dom, list) or len(dom) != 2:
        raise ConfigError("grid.domain", "expected [a, b]")
    n = _num(g, "n", "grid", integer=True, lo=4)
    dim = _num(g, "dim", "grid", 1, integer=True, lo=1, hi=2)
    return _wrap("grid", Grid.uniform, float(dom[0]), float(dom[1]), n, dim)


def _saturation(tree) -> Saturation:
    s = _obj(tree, "saturation", {"form", "m", "rho_max", "beta", "c0", "c1", "knots"}, {"form"})
    form = s["form"]
    rho_max = _num(s, "rho_max", "saturation", 1.0, lo=0, lo_open=True)
    if form == "power":
        m = _num(s, "m", "saturation", 2.0, lo=0, lo_open=True)
        return _wrap("saturation", Saturation.power, m, rho_max)
    if form == "constant":
        return _wrap("saturation", Saturation.constant, rho_max)
    if form == "tabulated":
        xs, ys = _table(s, "knots", "saturation")
        return _wrap("saturation", Saturation.tabulated, xs, ys,
                     beta=_num(s, "beta", "saturation", lo=0, lo_open=True),
                     c0=_num(s, "c0", "saturation", lo=0, lo_open=True),
                     c1=_num(s, "c1", "saturation", lo=0, lo_open=True))
    raise ConfigError("saturation.form", f"unknown preset {form!r}")


def _energy(tree) -> EnergyDensity:
    e = _obj(tree if tree is not None else {"kind": "boltzmann"}, "energy", {"kind", "m"}, {"kind"})
    if e["kind"] not in ("boltzmann", "porous"):
        raise ConfigError("energy.kind", f"unknown preset {e['kind']!r}")
    if e["kind"] == "porous":
        return _wrap("energy", EnergyDensity, "porous", _num(e, "m", "energy", lo=1, lo_open=True))
    return EnergyDensity("boltzmann")


def _potential(tree, path: str) -> Potential:
    p = _obj(tree if tree is not None else {"preset": "zero"}, path,
             {"preset", "center", "table"}, {"preset"})
    kind = p["preset"]
    if kind == "zero":
        return Potential.zero()
    if kind == "quadratic":
        return Potential.quadratic(_vec(p, "center", path, optional=True) or ())
    if kind == "tabulated":
        return _wrap(path, Potential, "tabulated", table=_table(p, "table", path))
    raise ConfigError(f"{path}.preset", f"unknown preset {kind!r}")


def _initial(tree, grid: Grid) -> InitialDatum:
    keys = {"preset", "value", "center", "centers", "width", "height", "base", "values", "table"}
    d = _obj(tree, "initial", keys, {"preset"})
    preset = d["preset"]
    path = "initial"
    if preset == "constant":
        return InitialDatum("constant", value=_num(d, "value", path))
    if preset in ("gaussian-bump", "two-bumps"):
        common = dict(width=_num(d, "width", path, lo=0, lo_open=True),
                      height=_num(d, "height", path),
                      base=_num(d, "base", path, 0.0))
        if preset == "gaussian-bump":
            center = _vec(d, "center", path, grid.dim, optional=True) or ()
            return _wrap(path, InitialDatum, preset, center=center, **common)
        cs = d.get("centers")
        if not isinstance(cs, list) or len(cs) != 2:
            raise ConfigError(f"{path}.centers", "expected two centers")
        centers = tuple(_vec({"c": c}, "c", f"{path}.centers[{i}]", grid.dim)
                        for i, c in enumerate(cs))
        return _wrap(path, InitialDatum, preset, centers=centers, **common)
    if preset == "tabulated":
        if "values" in d:
            vals = d["values"]
            if not isinstance(vals, list) or len(vals) != grid.size:
                raise ConfigError(f"{path}.values", f"expected {grid.size} cell values")
            return _wrap(path, InitialDatum, preset, values=tuple(float(v) for v in vals))
        return _wrap(path, InitialDatum, preset, table=_table(d, "table", path))
    raise ConfigError(f"{path}.preset", f"unknown preset {preset!r}")


def _diagnostics(tree, dim: int) -> DiagnosticsSpec:
    d = _obj(tree or {}, "diagnostics", {"cascade", "nu", "tail_fraction", "gap_tol", "residual_tol"})
    out = DiagnosticsSpec(
        nu=_num(d, "nu", "diagnostics", 0.5, lo=0, hi=1, lo_open=True, hi_open=True),
        tail_fraction=_num(d, "tail_fraction", "diagnostics", 0.1, lo=0, hi=1, lo_open=True),
        gap_tol=_num(d, "gap_tol", "diagnostics", 1e-4, lo=0, lo_open=True),
        residual_tol=_num(d, "residual_tol", "diagnostics", lo=0, lo_open=True, optional=True))
    for i, c in enumerate(d.get("cascade", [])):
        p = f"diagnostics.cascade[{i}]"
        c = _obj(c, p, {"vertex", "R", "t0", "eps", "max_levels"}, {"vertex", "R"})
        out.cascades.append(CascadeSpec(
            vertex=_vec(c, "vertex", p, dim), R=_num(c, "R", p, lo=0, lo_open=True),
            t0=_num(c, "t0", p, optional=True),
            eps=_num(c, "eps", p, lo=0, hi=2, lo_open=True, hi_open=True, optional=True),
            max_levels=_num(c, "max_levels", p, 12, integer=True, lo=1)))
    return out


_CHECK_FIELDS = {
    "caccioppoli": {"check", "vertex", "t0", "r", "tau", "inner_r", "inner_tau", "profile",
                    "time_ramp", "k", "sign", "slack"},
    "log": {"check", "vertex", "t0", "r", "tau", "inner_r", "inner_tau", "profile",
            "time_ramp", "k", "sign", "c", "s0", "slack"},
    "degiorgi": {"check", "snapshot", "k0", "k1", "x0", "r", "C", "slack"},
    "geometric": {"check", "Y0", "Z0", "C", "b", "kappa", "upsilon", "n_max"},
}


def _verify(tree, dim: int) -> list[dict]:
    if tree is None:
        return []
    if not isinstance(tree, list):
        raise ConfigError("verify", "expected a list of checks")
    out = []
    for i, chk in enumerate(tree):
        p = f"verify[{i}]"
        if not isinstance(chk, dict) or chk.get("check") not in CHECKS:
            raise ConfigError(f"{p}.check", f"expected one of {', '.join(CHECKS)}")
        _obj(chk, p, _CHECK_FIELDS[chk["check"]])
        kind = chk["check"]
        if kind in ("caccioppoli", "log"):
            _vec(chk, "vertex", p, dim)
            for key in ("r", "tau", "inner_r"):
                _num(chk, key, p, lo=0, lo_open=True)
            if chk.get("sign", "+") not in ("+", "-"):
                raise ConfigError(f"{p}.sign", "expected '+' or '-'")
            k = chk.get("k")
            if not (isinstance(k, (int, float)) and not isinstance(k, bool) or k in LEVEL_RULES):
                raise ConfigError(f"{p}.k", f"expected a number or one of {', '.join(LEVEL_RULES)}")
            if chk.get("profile", "linear") not in ("linear", "smoothed"):
                raise ConfigError(f"{p}.profile", "expected 'linear' or 'smoothed'")
            if kind == "log" and ("c" in chk) == ("s0" in chk):
                raise ConfigError(f"{p}.c", "give exactly one of c, s0")
        elif kind == "degiorgi":
            k0, k1 = _num(chk, "k0", p), _num(chk, "k1", p)
            if not k1 < k0:
                raise ConfigError(f"{p}.k1", "must be below k0")
        else:
            _num(chk, "C", p, lo=1, lo_open=True)
            _num(chk, "b", p, lo=1, lo_open=True)
            _num(chk, "Y0", p, lo=0)
            _num(chk, "Z0", p, lo=0)
        out.append(copy.deepcopy(chk))
    return out


def parse_manifest(tree: dict) -> Manifest:
    top = {"scenario", "grid", "saturation", "energy", "potentials", "initial", "time",
           "diagnostics", "verify", "output", "sweep", "description"}
    _obj(tree, "", top, {"grid", "saturation", "initial", "time"})
    grid = _grid(tree["grid"])
    sat = _saturation(tree["saturation"])
    energy = _energy(tree.get("energy"))
    pots_tree = _obj(tree.get("potentials", {}), "potentials", {"V", "W"})
    pots = PotentialSpec(_potential(pots_tree.get("V"), "potentials.V"),
                         _potential(pots_tree.get("W"), "potentials.W"))
    initial = _initial(tree["initial"], grid)
    t = _obj(tree["time"], "time", {"t_end", "cfl", "snapshot_every", "dt_override"}, {"t_end"})
    cfl = _num(t, "cfl", "time", 0.5, lo=0, hi=1, lo_open=True)
    t_end = _num(t, "t_end", "time", lo=0)
    every = _num(t, "snapshot_every", "time", 1, integer=True, lo=1)
    dt_override = _num(t, "dt_override", "time", lo=0, lo_open=True, optional=True)
    config = _wrap("initial", SimulationConfig, grid, sat, energy, pots, initial,
                   t_end, cfl, every, dt_override)
    scenario = tree.get("scenario", "unnamed")
    if not isinstance(scenario, str):
        raise ConfigError("scenario", "expected a string")
    return Manifest(scenario, config, _diagnostics(tree.get("diagnostics"), grid.dim),
                    _verify(tree.get("verify"), grid.dim), tree.get("output"), copy.deepcopy(tree))


def reference_names() -> list[str]:
    root = resources.files("satdiff") / "manifests"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_tree(spec: str | Path) -> dict:
    """JSON tree from a path, or from a packaged reference manifest by name."""
    path = Path(spec)
    if path.is_file():
        text = path.read_text()
    else:
        ref = resources.files("satdiff") / "manifests" / f"{spec}.json"
        if not ref.is_file():
            raise ConfigError("manifest", f"no file or reference manifest named {str(spec)!r}")
        text = ref.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("manifest", f"invalid JSON: {exc}") from exc


def load_manifest(spec: str | Path) -> Manifest:
    return parse_manifest(load_tree(spec))


def set_path(tree: dict, dotted: str, value) -> dict:
    """Copy of ``tree`` with ``a.b.c`` replaced by ``value`` (used by sweeps)."""
    out = copy.deepcopy(tree)
    node = out
    keys = dotted.split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"sweep.parameter", f"{dotted!r} does not name a manifest field")
        node = node[key]
    node[keys[-1]] = value
    return out
