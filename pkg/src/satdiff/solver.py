"""Finite-volume scheme with upwind mobility splitting and forward Euler.

On every interior face the total flux is

    J = -(Phi(rho_R) - Phi(rho_L)) / h + v+ rho_L sigma(rho_R) + v- rho_R sigma(rho_L)

with ``v = -(phi_R - phi_L) / h`` and ``phi = V + W * rho``; boundary faces
carry zero flux and the cell rate is ``-div J``.  The donor cell supplies
``rho`` and the receiving cell supplies ``sigma``, so an empty donor or a
saturated receiver blocks transport.
"""
from __future__ import annotations

import csv
import logging
import math
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ContractError, DomainError, ShapeError, SolverAbort, StepRejected
from .mesh import DensityField, Grid, Trajectory, face_gradient
from .model import (EnergyDensity, PotentialSpec, Saturation, convolve_values,
                    diffusion_primitive, dissipation_values, free_energy_values)

logger = logging.getLogger(__name__)

BOUND_ATOL = 1e-12
MAX_HALVINGS = 40
LEDGER_HEADER = ("t", "dt", "mass", "F", "D", "min_rho", "max_rho")


@dataclass(frozen=True)
class InitialDatum:
    """Deterministic initial presets sampled at cell centres.

    ``constant``: ``value``.  ``gaussian-bump``: ``base + height *
    exp(-|x - center|^2 / (2 width^2))``.  ``two-bumps``: the same with one
    bump per entry of ``centers``.  ``tabulated``: explicit cell values
    (``values``, row-major) or a 1D table ``table = (xs, ys)`` interpolated
    linearly (radially in 2D).
    """

    preset: str = "constant"
    value: float = 0.5
    center: tuple[float, ...] = ()
    centers: tuple[tuple[float, ...], ...] = ()
    width: float = 0.1
    height: float = 0.5
    base: float = 0.0
    values: Optional[tuple[float, ...]] = None
    table: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None

    def __post_init__(self):
        if self.preset not in ("constant", "gaussian-bump", "two-bumps", "tabulated"):
            raise DomainError(f"unknown initial preset {self.preset!r}")
        if self.preset in ("gaussian-bump", "two-bumps") and not self.width > 0:
            raise DomainError("bump width must be positive")
        if self.preset == "two-bumps" and len(self.centers) != 2:
            raise DomainError("two-bumps needs exactly two centers")
        if self.preset == "tabulated" and (self.values is None) == (self.table is None):
            raise DomainError("tabulated initial datum needs exactly one of values, table")

    def sample(self, grid: Grid) -> np.ndarray:
        if self.preset == "constant":
            return np.full(grid.shape, float(self.value))
        if self.preset == "gaussian-bump":
            return self.base + self._bump(grid, self.center)
        if self.preset == "two-bumps":
            return self.base + sum(self._bump(grid, c) for c in self.centers)
        if self.values is not None:
            vals = np.asarray(self.values, dtype=float)
            if vals.size != grid.size:
                raise ShapeError(f"{vals.size} tabulated values for {grid.size} cells")
            return vals.reshape(grid.shape)
        xs, ys = (np.asarray(t, dtype=float) for t in self.table)
        c = grid.centers
        r = c[0] if grid.dim == 1 else np.sqrt(sum(ci * ci for ci in c))
        return np.interp(r, xs, ys)

    def _bump(self, grid: Grid, center: Sequence[float]) -> np.ndarray:
        center = tuple(center) or tuple(0.5 * (a + b) for a, b in grid.extents)
        r2 = grid.distance_from(center) ** 2
        return self.height * np.exp(-r2 / (2.0 * self.width ** 2))

    def to_dict(self) -> dict:
        d: dict = {"preset": self.preset}
        if self.preset == "constant":
            d["value"] = self.value
        elif self.preset in ("gaussian-bump", "two-bumps"):
            if self.preset == "gaussian-bump":
                d["center"] = list(self.center)
            else:
                d["centers"] = [list(c) for c in self.centers]
            d.update(width=self.width, height=self.height, base=self.base)
        elif self.values is not None:
            d["values"] = list(self.values)
        else:
            d["table"] = [list(self.table[0]), list(self.table[1])]
        return d


@dataclass(frozen=True)
class SimulationConfig:
    grid: Grid
    saturation: Saturation = field(default_factory=Saturation.power)
    energy: EnergyDensity = field(default_factory=EnergyDensity)
    pots: PotentialSpec = field(default_factory=PotentialSpec)
    initial: InitialDatum = field(default_factory=InitialDatum)
    t_end: float = 1.0
    cfl: float = 0.5
    snapshot_every: int = 1
    dt_override: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise DomainError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end >= 0 or not math.isfinite(self.t_end):
            raise DomainError("t_end must be finite and nonnegative")
        if self.snapshot_every < 1:
            raise DomainError("snapshot_every must be >= 1")
        if self.dt_override is not None and not self.dt_override > 0:
            raise DomainError("dt_override must be positive")
        rho0 = self.initial.sample(self.grid)
        if rho0.min() < 0 or rho0.max() > self.saturation.rho_max:
            raise DomainError(f"initial datum leaves [0, {self.saturation.rho_max}]: "
                              f"range [{rho0.min()}, {rho0.max()}]")

    def initial_field(self) -> DensityField:
        return DensityField(self.grid, self.initial.sample(self.grid))

    def replace(self, **changes) -> "SimulationConfig":
        from dataclasses import replace
        return replace(self, **changes)


class Scheme:
    """Per-configuration operators (sampled V, kernel, primitive Phi)."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.grid = config.grid
        self.sat = config.saturation
        self.energy = config.energy
        self.prim = diffusion_primitive(self.sat, self.energy)
        self.V = config.pots.V_values(self.grid)
        self.kernel = None if config.pots.W.is_zero else config.pots.W_kernel(self.grid)
        self._slices = []
        for axis in range(self.grid.dim):
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[axis], hi[axis] = slice(None, -1), slice(1, None)
            inner = [slice(None)] * self.grid.dim
            inner[axis] = slice(1, -1)
            self._slices.append((tuple(lo), tuple(hi), tuple(inner)))

    def interaction(self, rho: np.ndarray) -> np.ndarray:
        if self.kernel is None:
            return np.zeros(self.grid.shape)
        return convolve_values(self.grid, self.kernel, rho)

    def potential(self, rho: np.ndarray) -> np.ndarray:
        return self.V + self.interaction(rho)

    def velocity(self, phi: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(-g for g in face_gradient(self.grid, phi))

    def fluxes(self, rho: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, ...]:
        """Face fluxes including the zero boundary faces."""
        out = []
        for axis, J in enumerate(self._interior_fluxes(rho, phi)):
            shape = list(self.grid.shape)
            shape[axis] += 1
            full = np.zeros(shape)
            full[self._slices[axis][2]] = J
            out.append(full)
        return tuple(out)

    def _interior_fluxes(self, rho: np.ndarray, phi: np.ndarray) -> list[np.ndarray]:
        Phi = self.prim.unchecked(rho)
        sig = self.sat.sigma_unchecked(rho)
        out = []
        for (lo, hi, _), h in zip(self._slices, self.grid.h):
            v = (phi[lo] - phi[hi]) / h
            drift = (np.maximum(v, 0.0) * rho[lo] * sig[hi]
                     + np.minimum(v, 0.0) * rho[hi] * sig[lo])
            out.append(drift - (Phi[hi] - Phi[lo]) / h)
        return out

    def rate(self, rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """``-div J`` with zero flux through the boundary."""
        out = np.zeros(self.grid.shape)
        for (lo, hi, _), J, h in zip(self._slices, self._interior_fluxes(rho, phi), self.grid.h):
            Jh = J / h
            out[lo] -= Jh
            out[hi] += Jh
        return out

    def max_dt(self, phi: np.ndarray) -> float:
        """Largest step for which forward Euler is monotone, times ``cfl``."""
        inv = 0.0
        for (lo, hi, _), h in zip(self._slices, self.grid.h):
            vmax = float(np.max(np.abs(phi[hi] - phi[lo]))) / h
            inv += 2.0 * self.prim.lipschitz / h ** 2 + 2.0 * vmax * self.sat.drift_bound / h
        return self.config.cfl / inv

    def energy_terms(self, rho: np.ndarray, phi: np.ndarray) -> tuple[float, float]:
        F = free_energy_values(self.grid, rho, self.energy, self.V, phi - self.V)
        D = dissipation_values(self.grid, rho, phi, self.sat, self.energy)
        return F, D

    def advance(self, rho: np.ndarray, phi: np.ndarray, dt: float) -> np.ndarray:
        new = rho + dt * self.rate(rho, phi)
        lo, hi = float(new.min()), float(new.max())
        rho_max = self.sat.rho_max
        violation = max(-lo, hi - rho_max, 0.0)
        if violation > BOUND_ATOL:
            raise StepRejected(f"step dt={dt:.3e} leaves [0, {rho_max}] by {violation:.3e}",
                               violation)
        if violation > 0:
            np.clip(new, 0.0, rho_max, out=new)
        return new


_SCHEMES: dict[int, tuple[weakref.ref, Scheme]] = {}


def scheme_for(config: SimulationConfig) -> Scheme:
    """Cached :class:`Scheme`, keyed on the identity of ``config``."""
    key = id(config)
    hit = _SCHEMES.get(key)
    if hit is not None and hit[0]() is config:
        return hit[1]
    scheme = Scheme(config)
    _SCHEMES[key] = (weakref.ref(config, lambda _r, k=key, cache=_SCHEMES: cache.pop(k, None)), scheme)
    return scheme


def _check_grid(field: DensityField, config: SimulationConfig) -> np.ndarray:
    if field.grid != config.grid:
        raise ShapeError("field grid differs from the configured grid")
    return field.values


# public single-state operations -------------------------------------------

def drift_velocity(field: DensityField, pots: PotentialSpec) -> tuple[np.ndarray, ...]:
    """Face velocities ``-(phi_R - phi_L)/h``; boundary faces are zero."""
    grid = field.grid
    phi = pots.V_values(grid)
    if not pots.W.is_zero:
        phi = phi + convolve_values(grid, pots.W_kernel(grid), field.values)
    return tuple(-g for g in face_gradient(grid, phi))


def face_flux(rho_L, rho_R, v, spec: Saturation):
    """Upwind drift flux ``v+ rho_L sigma(rho_R) + v- rho_R sigma(rho_L)``."""
    rho_L, rho_R, v = (np.asarray(a, dtype=float) for a in (rho_L, rho_R, v))
    out = np.maximum(v, 0.0) * rho_L * spec.sigma(rho_R) + np.minimum(v, 0.0) * rho_R * spec.sigma(rho_L)
    return out if out.ndim else float(out)


def rhs(field: DensityField, config: SimulationConfig) -> np.ndarray:
    rho = _check_grid(field, config)
    sch = scheme_for(config)
    return sch.rate(rho, sch.potential(rho))


def cfl_dt(field: DensityField, config: SimulationConfig) -> float:
    rho = _check_grid(field, config)
    sch = scheme_for(config)
    dt = sch.max_dt(sch.potential(rho))
    if not (dt > 0 and math.isfinite(dt)):
        raise ContractError(f"degenerate time step {dt}")
    return dt


def step(field: DensityField, dt: float, config: SimulationConfig) -> DensityField:
    """One forward-Euler step; raises :class:`StepRejected` on a bound violation."""
    rho = _check_grid(field, config)
    sch = scheme_for(config)
    return DensityField(field.grid, sch.advance(rho, sch.potential(rho), dt))


def stationary_residual(field: DensityField, config: SimulationConfig) -> float:
    """``D[rho] + max |rhs(rho)|``; vanishes at discrete stationary states."""
    rho = _check_grid(field, config)
    sch = scheme_for(config)
    phi = sch.potential(rho)
    _, D = sch.energy_terms(rho, phi)
    return D + float(np.max(np.abs(sch.rate(rho, phi))))


# energy ledger --------------------------------------------------------------

@dataclass
class EnergyLedger:
    """One row per accepted step (row 0 is the initial state, with dt = 0)."""

    rows: list[tuple[float, ...]] = field(default_factory=list)

    def append(self, t, dt, mass, F, D, min_rho, max_rho) -> None:
        self.rows.append((float(t), float(dt), float(mass), float(F), float(D),
                          float(min_rho), float(max_rho)))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def table(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(LEDGER_HEADER))

    def column(self, name: str) -> np.ndarray:
        return self.table[:, LEDGER_HEADER.index(name)]

    def relative_mass_drift(self) -> np.ndarray:
        """Per-step ``|mass_{k+1} - mass_k| / mass_0``."""
        m = self.column("mass")
        return np.abs(np.diff(m)) / max(abs(m[0]), np.finfo(float).tiny)

    def energy_increases(self, tol: float = 1e-9) -> int:
        return int(np.sum(np.diff(self.column("F")) > tol))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_HEADER)
            for row in self.rows:
                w.writerow(["%.17g" % x for x in row])

    @classmethod
    def read_csv(cls, path: str | Path) -> "EnergyLedger":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = tuple(next(r))
            if header != LEDGER_HEADER:
                raise ContractError(f"unexpected ledger header {header}")
            return cls([tuple(float(x) for x in row) for row in r])


# time integration -------------------------------------------------------------

class _State:
    def __init__(self, sch: Scheme, rho: np.ndarray):
        self.sch = sch
        self.rho = rho
        self.phi = sch.potential(rho)

    def record(self, ledger: EnergyLedger, t: float, dt: float) -> None:
        F, D = self.sch.energy_terms(self.rho, self.phi)
        mass = float(self.rho.sum()) * self.sch.grid.cell_volume
        ledger.append(t, dt, mass, F, D, self.rho.min(), self.rho.max())

    def try_step(self, dt: float) -> np.ndarray:
        return self.sch.advance(self.rho, self.phi, dt)

    def accept(self, rho: np.ndarray) -> None:
        self.rho = rho
        self.phi = self.sch.potential(rho)


def _proposed_dt(states: Sequence[_State], config: SimulationConfig, remaining: float) -> float:
    if config.dt_override is not None:
        dt = config.dt_override
    else:
        dt = min(s.sch.max_dt(s.phi) for s in states)
    return min(dt, remaining)


def _end_reached(t: float, t_end: float) -> bool:
    return t >= t_end or t_end - t <= 1e-12 * max(t_end, 1.0)


def _step_all(states: Sequence[_State], dt: float, t: float) -> tuple[list[np.ndarray], float]:
    last = None
    for _ in range(MAX_HALVINGS + 1):
        try:
            return [s.try_step(dt) for s in states], dt
        except StepRejected as exc:
            last = exc
            logger.debug("rejected at t=%g: %s", t, exc)
            dt *= 0.5
    raise SolverAbort(f"step rejected {MAX_HALVINGS} times at t={t:.6g}: {last}",
                      state=DensityField(states[0].sch.grid, states[0].rho), time=t)


def run(config: SimulationConfig) -> tuple[Trajectory, EnergyLedger]:
    """Integrate to ``t_end``; snapshots every ``snapshot_every`` accepted steps
    and at the final time, ledger rows at every accepted step."""
    sch = scheme_for(config)
    state = _State(sch, config.initial.sample(config.grid))
    ledger = EnergyLedger()
    state.record(ledger, 0.0, 0.0)
    times, snaps = [0.0], [state.rho.copy()]
    t, k = 0.0, 0
    while not _end_reached(t, config.t_end):
        dt = _proposed_dt([state], config, config.t_end - t)
        (new,), dt = _step_all([state], dt, t)
        state.accept(new)
        k += 1
        t = config.t_end if _end_reached(t + dt, config.t_end) else t + dt
        state.record(ledger, t, dt)
        if k % config.snapshot_every == 0 or _end_reached(t, config.t_end):
            times.append(t)
            snaps.append(state.rho.copy())
    return Trajectory(config.grid, np.asarray(times), np.stack(snaps)), ledger


@dataclass
class PairResult:
    times: np.ndarray
    l1: np.ndarray
    order_violation: np.ndarray
    trajectories: tuple[Trajectory, Trajectory]
    ledgers: tuple[EnergyLedger, EnergyLedger]

    @property
    def max_increase(self) -> float:
        return float(max(np.max(np.diff(self.l1), initial=0.0), 0.0))

    def to_dict(self) -> dict:
        return {"steps": int(self.times.size - 1),
                "l1_initial": float(self.l1[0]),
                "l1_final": float(self.l1[-1]),
                "max_step_increase": self.max_increase,
                "max_order_violation": float(self.order_violation.max())}


def run_pair(config_a: SimulationConfig, config_b: SimulationConfig) -> PairResult:
    """Integrate two data in lockstep with a shared step.

    The shared step is the smaller of the two CFL steps, so the L1 distance
    is measured between states at identical times.  ``order_violation`` is
    ``max(rho_a - rho_b)_+`` when ``rho_a(0) <= rho_b(0)`` (with the roles
    swapped otherwise) and zero for unordered data.
    """
    if (config_a.grid, config_a.saturation, config_a.energy, config_a.pots, config_a.t_end) != \
            (config_b.grid, config_b.saturation, config_b.energy, config_b.pots, config_b.t_end):
        raise ContractError("paired runs must differ only in their initial datum")
    cfg = config_a
    states = [_State(scheme_for(c), c.initial.sample(c.grid)) for c in (config_a, config_b)]
    lo, hi = states
    if np.all(lo.rho <= hi.rho):
        sign = 1.0
    elif np.all(lo.rho >= hi.rho):
        sign = -1.0
    else:
        sign = 0.0
    dv = cfg.grid.cell_volume

    def measure():
        d = states[0].rho - states[1].rho
        return float(np.abs(d).sum() * dv), float(max(sign * d.max() if sign > 0 else
                                                      -d.min() if sign < 0 else 0.0, 0.0))

    ledgers = (EnergyLedger(), EnergyLedger())
    for s, led in zip(states, ledgers):
        s.record(led, 0.0, 0.0)
    times, l1, viol = [0.0], [], []
    snaps = ([states[0].rho.copy()], [states[1].rho.copy()])
    a, b = measure()
    l1.append(a)
    viol.append(b)
    t, k = 0.0, 0
    while not _end_reached(t, cfg.t_end):
        dt = _proposed_dt(states, cfg, cfg.t_end - t)
        new, dt = _step_all(states, dt, t)
        for s, r in zip(states, new):
            s.accept(r)
        k += 1
        t = cfg.t_end if _end_reached(t + dt, cfg.t_end) else t + dt
        for s, led in zip(states, ledgers):
            s.record(led, t, dt)
        times.append(t)
        a, b = measure()
        l1.append(a)
        viol.append(b)
        if k % cfg.snapshot_every == 0 or _end_reached(t, cfg.t_end):
            for s, buf in zip(states, snaps):
                buf.append(s.rho.copy())
    times = np.asarray(times)
    snap_times = np.concatenate([[0.0], times[1:][_snapshot_mask(len(times) - 1, cfg.snapshot_every)]])
    trajs = tuple(Trajectory(cfg.grid, snap_times, np.stack(buf)) for buf in snaps)
    return PairResult(times, np.asarray(l1), np.asarray(viol), trajs, ledgers)


def _snapshot_mask(n_steps: int, every: int) -> np.ndarray:
    k = np.arange(1, n_steps + 1)
    mask = k % every == 0
    if n_steps:
        mask[-1] = True
    return mask


# equilibria -------------------------------------------------------------------

def truncated_gibbs(grid: Grid, config_or_pots: SimulationConfig | PotentialSpec,
                    rho_max: float, mass: float) -> tuple[DensityField, float]:
    """``min(rho_max, Z exp(-V))`` sampled at cell centres with ``Z`` chosen
    so that the discrete mass equals ``mass``.  Returns the field and ``Z``."""
    pots = config_or_pots.pots if isinstance(config_or_pots, SimulationConfig) else config_or_pots
    if not 0 < mass < rho_max * grid.volume:
        raise DomainError("mass must lie strictly between 0 and rho_max |Omega|")
    v_min = float(pots.V_values(grid).min())
    g = np.exp(-(pots.V_values(grid) - v_min))
    dv = grid.cell_volume

    def excess(logZ: float) -> float:
        return float(np.minimum(rho_max, math.exp(logZ) * g).sum() * dv) - mass

    lo = math.log(mass / (g.sum() * dv))
    hi = lo
    while excess(hi) < 0:
        hi += 1.0
    logZ = optimize.brentq(excess, lo - 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    Z = math.exp(logZ + v_min)
    return DensityField(grid, np.minimum(rho_max, math.exp(logZ) * g)), Z
