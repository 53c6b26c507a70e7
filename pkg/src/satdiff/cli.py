"""Command line interface: ``satdiff {run,pair,analyze,verify,sweep}``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical abort.  Data files are deterministic; wall-clock timings go to
a separate ``timing.json``.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import math
import random
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .diagnostics import Cylinder, alternative_classify, convergence_monitor, oscillation_cascade
from .errors import ConfigError, ContractError, SatDiffError, SolverAbort
from .estimates import (Truncation, b_hat_default, build_cutoff, caccioppoli_check,
                        degiorgi_check, geometric_convergence, kappa_default,
                        log_estimate_check)
from .manifest import CascadeSpec, Manifest, load_manifest, load_tree, parse_manifest, set_path
from .mesh import Trajectory
from .solver import run, run_pair

logger = logging.getLogger("satdiff")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


# seedless guard ---------------------------------------------------------------------

_RNG_NAMES = ("default_rng", "seed", "rand", "randn", "random", "uniform", "normal",
              "randint", "choice", "shuffle", "permutation", "RandomState", "Generator")


@contextlib.contextmanager
def forbid_rng():
    """Make every entry point into numpy's and Python's RNGs raise."""
    def refuse(*_a, **_k):
        raise RuntimeError("random number generation used in a --seedless run")

    saved = []
    for mod, names in ((np.random, _RNG_NAMES), (random, ("random", "seed", "uniform", "randint",
                                                          "choice", "shuffle", "gauss"))):
        for name in names:
            if hasattr(mod, name):
                saved.append((mod, name, getattr(mod, name)))
                setattr(mod, name, refuse)
    try:
        yield
    finally:
        for mod, name, obj in saved:
            setattr(mod, name, obj)


# commands -------------------------------------------------------------------------------

def _out_dir(manifest: Manifest, out: Optional[str]) -> Path:
    path = Path(out or manifest.output or Path("out") / manifest.scenario)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_summary(manifest: Manifest, traj: Trajectory, ledger) -> dict:
    tab = ledger.table
    drift = ledger.relative_mass_drift()
    return {
        "scenario": manifest.scenario,
        "steps": len(ledger) - 1,
        "snapshots": len(traj),
        "t_final": float(traj.times[-1]),
        "mass": float(tab[-1, 2]),
        "F": float(tab[-1, 3]),
        "D": float(tab[-1, 4]),
        "min_rho": float(tab[:, 5].min()),
        "max_rho": float(tab[:, 6].max()),
        "max_relative_mass_change": float(drift.max()) if drift.size else 0.0,
        "F_increases_above_1e-9": ledger.energy_increases(1e-9),
        "F_monotone": ledger.energy_increases(1e-9) == 0,
        "bounds_ok": bool(tab[:, 5].min() >= 0.0
                          and tab[:, 6].max() <= manifest.config.saturation.rho_max),
    }


def cmd_run(manifest: Manifest, out: Optional[str] = None) -> int:
    out_dir = _out_dir(manifest, out)
    start = time.perf_counter()
    try:
        traj, ledger = run(manifest.config)
    except SolverAbort as exc:
        logger.error("%s", exc)
        if exc.state is not None:
            io.write_field_csv(out_dir / "abort_state.csv", exc.state)
        io.write_json(out_dir / "summary.json", {"scenario": manifest.scenario,
                                                 "status": "aborted", "time": exc.time,
                                                 "message": str(exc)})
        return EXIT_ABORT
    io.write_trajectory(out_dir / "trajectory.bin", traj)
    ledger.write_csv(out_dir / "ledger.csv")
    summary = run_summary(manifest, traj, ledger)
    summary["status"] = "ok"
    io.write_json(out_dir / "summary.json", summary)
    io.write_json(out_dir / "timing.json", {"wall_seconds": time.perf_counter() - start})
    logger.info("run %s: %d steps, F=%.6g", manifest.scenario, summary["steps"], summary["F"])
    return EXIT_OK


def cmd_pair(manifest_a: Manifest, manifest_b: Manifest, out: Optional[str] = None,
             tol: float = 1e-10) -> int:
    for label, m in (("a", manifest_a), ("b", manifest_b)):
        if not m.interaction_free:
            raise ConfigError(f"{label}.potentials.W",
                              "the L1 contraction holds only without interaction (W = 0)")
    try:
        res = run_pair(manifest_a.config, manifest_b.config)
    except ContractError as exc:
        raise ConfigError("pair", str(exc)) from exc
    except SolverAbort as exc:
        logger.error("%s", exc)
        return EXIT_ABORT
    out_dir = Path(out or Path("out") / f"pair-{manifest_a.scenario}-{manifest_b.scenario}")
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_rows_csv(out_dir / "pair.csv", ["t", "l1", "order_violation"],
                      zip(res.times, res.l1, res.order_violation))
    summary = res.to_dict()
    summary.update(a=manifest_a.scenario, b=manifest_b.scenario, tolerance=tol,
                   contracting=res.max_increase <= tol)
    io.write_json(out_dir / "pair_summary.json", summary)
    return EXIT_OK if summary["contracting"] else EXIT_VERIFY


def _read_traj(path: Optional[str]) -> Trajectory:
    if path is None:
        raise ConfigError("--traj", "a trajectory file is required")
    if not Path(path).is_file():
        raise ConfigError("--traj", f"no such file {path!r}")
    try:
        return io.read_trajectory(path)
    except ContractError as exc:
        raise ConfigError("--traj", str(exc)) from exc


def _default_cascade(traj: Trajectory) -> CascadeSpec:
    center = tuple(0.5 * (a + b) for a, b in traj.grid.extents)
    return CascadeSpec(center, 0.25 * min(b - a for a, b in traj.grid.extents))


def cmd_analyze(manifest: Manifest, traj_path: Optional[str], out: Optional[str] = None) -> int:
    traj = _read_traj(traj_path)
    out_dir = _out_dir(manifest, out)
    spec = manifest.config.saturation
    diag = manifest.diagnostics
    cascades = diag.cascades or [_default_cascade(traj)]
    for i, c in enumerate(cascades):
        rec = oscillation_cascade(traj, c.vertex, c.R, spec, t0=c.t0, eps=c.eps,
                                  max_levels=c.max_levels)
        rec.write_csv(out_dir / f"cascade_{i}.csv")
        io.write_json(out_dir / f"cascade_{i}.json", rec.summary())
        classes = []
        t0 = float(traj.times[-1]) if c.t0 is None else c.t0
        enclosing = rec.omega0
        for lv in rec.levels:
            cyl = Cylinder(c.vertex, t0, lv.r, lv.tau, lv.theta)
            res = alternative_classify(traj, cyl, enclosing, diag.nu, spec).to_dict()
            res.update(k=lv.k, omega=enclosing)
            classes.append(res)
            enclosing = lv.omega
        io.write_json(out_dir / f"classify_{i}.json", {"levels": classes})
    if len(traj) >= 10:
        conv = convergence_monitor(traj, diag.tail_fraction, manifest.config,
                                   gap_tol=diag.gap_tol, residual_tol=diag.residual_tol)
        io.write_json(out_dir / "convergence.json", conv.to_dict())
        io.write_rows_csv(out_dir / "gaps.csv", ["t", "gap"], zip(conv.times, conv.gaps))
    else:
        logger.warning("fewer than 10 snapshots; convergence monitor skipped")
    return EXIT_OK


def _level(chk: dict, samples: np.ndarray, rho_max: float) -> tuple[float, float]:
    """Truncation level from a number or a rule; also returns omega."""
    mu_plus, mu_minus = float(samples.max()), float(samples.min())
    omega = mu_plus - mu_minus
    rules = {"rho_max-omega/2": rho_max - omega / 2.0, "omega/2": omega / 2.0,
             "mu_plus-omega/2": mu_plus - omega / 2.0, "mu_minus+omega/2": mu_minus + omega / 2.0}
    k = chk["k"]
    return (rules[k] if isinstance(k, str) else float(k)), omega


def run_check(chk: dict, traj: Trajectory, manifest: Manifest) -> tuple[str, dict, bool]:
    """Execute one verify entry; returns (name, report dict, passed)."""
    kind = chk["check"]
    cfg = manifest.config
    spec, pots = cfg.saturation, cfg.pots
    if kind in ("caccioppoli", "log"):
        t0 = float(traj.times[-1]) if chk.get("t0") is None else float(chk["t0"])
        vertex = tuple(np.atleast_1d(chk["vertex"]).astype(float))
        outer = Cylinder(vertex, t0, chk["r"], chk["tau"])
        inner = Cylinder(vertex, t0, chk["inner_r"], chk.get("inner_tau", chk["tau"] / 2))
        ramp = chk.get("time_ramp", kind == "caccioppoli")
        zeta = build_cutoff(outer, inner, chk.get("profile", "linear"), time_ramp=ramp)
        k, omega = _level(chk, outer.samples(traj), spec.rho_max)
        sign = chk.get("sign", "+")
        slack = chk.get("slack", 0.10)
        if kind == "caccioppoli":
            rep = caccioppoli_check(traj, outer, k, sign, zeta, spec, pots, slack=slack)
        else:
            c = chk["c"] if "c" in chk else omega / 2.0 ** (chk["s0"] + 1)
            rep = log_estimate_check(traj, outer, k, c, sign, zeta, spec, pots, slack=slack)
        d = rep.to_dict()
        d["terms"].update(k=k, omega=omega)
        return kind, d, rep.passed
    if kind == "degiorgi":
        field = traj.field(int(chk.get("snapshot", -1)) % len(traj))
        x0 = chk.get("x0")
        rep = degiorgi_check(field, chk["k0"], chk["k1"],
                             x0=None if x0 is None else tuple(np.atleast_1d(x0).astype(float)),
                             r=chk.get("r"), C=chk.get("C"), slack=chk.get("slack", 0.10))
        return kind, rep.to_dict(), rep.passed
    dim = traj.grid.dim
    res = geometric_convergence(chk["Y0"], chk["Z0"], chk["C"], chk["b"],
                                chk.get("kappa", kappa_default(dim)),
                                chk.get("upsilon", b_hat_default(dim)),
                                int(chk.get("n_max", 200)))
    d = res.to_dict()
    passed = res.converged or not res.below_threshold
    d.update(name="geometric", **{"pass": passed})
    return kind, d, passed


def cmd_verify(manifest: Manifest, traj_path: Optional[str], out: Optional[str] = None) -> int:
    if not manifest.verify:
        return EXIT_OK
    traj = _read_traj(traj_path)
    out_dir = _out_dir(manifest, out)
    failed = []
    for i, chk in enumerate(manifest.verify):
        try:
            name, report, passed = run_check(chk, traj, manifest)
        except SatDiffError as exc:
            raise ConfigError(f"verify[{i}]", str(exc)) from exc
        path = out_dir / f"report_{i:03d}_{name}.json"
        io.write_json(path, report)
        if not passed:
            failed.append(path)
            logger.error("check %d (%s) failed: %s", i, name, path)
    for path in failed:
        print(f"FAILED {path}")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_sweep(tree: dict, out: Optional[str] = None) -> int:
    sweep = tree.get("sweep")
    if not isinstance(sweep, dict) or "parameter" not in sweep or "values" not in sweep:
        raise ConfigError("sweep", "expected {\"parameter\": \"a.b\", \"values\": [...]}")
    base = parse_manifest(tree)
    out_dir = _out_dir(base, out)
    rows, status = [], EXIT_OK
    for i, value in enumerate(sweep["values"]):
        variant = set_path(tree, sweep["parameter"], value)
        variant.pop("sweep")
        try:
            m = parse_manifest(variant)
        except ConfigError as exc:
            raise ConfigError(f"sweep.values[{i}]", str(exc)) from exc
        sub = out_dir / f"sweep_{i:03d}"
        code = cmd_run(m, str(sub))
        status = max(status, code)
        s = io.read_json(sub / "summary.json")
        rows.append([i, str(value), s.get("status", "ok"), s.get("steps", -1),
                     s.get("F", math.nan), s.get("max_relative_mass_change", math.nan),
                     s.get("F_increases_above_1e-9", -1)])
    io.write_rows_csv(out_dir / "sweep.csv",
                      ["index", "value", "status", "steps", "F", "max_relative_mass_change",
                       "F_increases"], rows)
    return status


# argument parsing -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satdiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "integrate a manifest"),
                        ("pair", "L1 distance between two runs (give --manifest twice)"),
                        ("analyze", "oscillation cascade, classifier and convergence"),
                        ("verify", "run the manifest's inequality checks"),
                        ("sweep", "run a manifest over a list of parameter values")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--manifest", action="append", required=True,
                        help="manifest path or reference name")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--traj", help="trajectory file (analyze, verify)")
        sp.add_argument("--seedless", action="store_true",
                        help="fail if any random number generator is used")
    return p


def _dispatch(args) -> int:
    manifests = args.manifest
    if args.command == "pair":
        if len(manifests) != 2:
            raise ConfigError("--manifest", "pair needs exactly two manifests")
        return cmd_pair(load_manifest(manifests[0]), load_manifest(manifests[1]), args.out)
    if len(manifests) != 1:
        raise ConfigError("--manifest", f"{args.command} takes a single manifest")
    if args.command == "sweep":
        return cmd_sweep(load_tree(manifests[0]), args.out)
    m = load_manifest(manifests[0])
    if args.command == "run":
        return cmd_run(m, args.out)
    if args.command == "analyze":
        return cmd_analyze(m, args.traj, args.out)
    return cmd_verify(m, args.traj, args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    guard = forbid_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
