"""Measurement geometry on sampled trajectories.

Backward cylinders ``B_r(x0) x (t0 - tau, t0]`` are evaluated on the
(cell centre, snapshot) lattice: a sample belongs to a cylinder when its
centre satisfies ``|x - x0| < r`` and ``t0 - tau < t <= t0``.  Essential
suprema and infima become plain extrema over those samples, since a grid
function has no null sets.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError, GeometryError
from .mesh import DensityField, Trajectory, sup_distance
from .model import Saturation
from .solver import stationary_residual

logger = logging.getLogger(__name__)

GAMMA_DEFAULT = 1.0 - 2.0 ** -5
_TIME_TOL = 1e-12


def default_eta(gamma: float, beta: float) -> float:
    """``2^{-3/2} gamma^{beta/2}``."""
    return 2.0 ** -1.5 * gamma ** (beta / 2.0)


def ball_volume(r: float, dim: int) -> float:
    return 2.0 * r if dim == 1 else math.pi * r * r


def time_weights(times: np.ndarray) -> np.ndarray:
    """Midpoint quadrature weights for samples at ``times``."""
    times = np.asarray(times, dtype=float)
    if times.size == 1:
        return np.ones(1)
    edges = np.concatenate([[times[0]], 0.5 * (times[1:] + times[:-1]), [times[-1]]])
    return np.diff(edges)


@dataclass(frozen=True)
class Cylinder:
    """``B_r(x0) x (t0 - tau, t0]``; ``theta`` is set for intrinsic cylinders."""

    x0: tuple[float, ...]
    t0: float
    r: float
    tau: float
    theta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(x) for x in np.atleast_1d(self.x0)))
        if not (self.r > 0 and self.tau > 0):
            raise GeometryError(f"cylinder needs r > 0 and tau > 0, got r={self.r}, tau={self.tau}")

    @classmethod
    def intrinsic(cls, x0: Sequence[float], t0: float, r: float, theta: float) -> "Cylinder":
        return cls(tuple(x0), t0, r, theta * r * r, theta)

    @property
    def is_intrinsic(self) -> bool:
        return self.theta is not None

    def measure(self) -> float:
        return self.tau * ball_volume(self.r, len(self.x0))

    def contains(self, other: "Cylinder", tol: float = 1e-12) -> bool:
        """Geometric inclusion ``other subset self``."""
        dx = math.dist(self.x0, other.x0)
        return (dx + other.r <= self.r + tol and other.t0 <= self.t0 + tol
                and other.t0 - other.tau >= self.t0 - self.tau - tol)

    def space_mask(self, traj: Trajectory) -> np.ndarray:
        if len(self.x0) != traj.grid.dim:
            raise GeometryError(f"vertex {self.x0} does not match grid dimension {traj.grid.dim}")
        return traj.grid.distance_from(self.x0) < self.r

    def time_index(self, traj: Trajectory) -> np.ndarray:
        t = traj.times
        tol = _TIME_TOL * max(1.0, abs(self.t0))
        return np.flatnonzero((t > self.t0 - self.tau + tol) & (t <= self.t0 + tol))

    def samples(self, traj: Trajectory) -> np.ndarray:
        """Values at all lattice samples, shape (n_times, n_cells_in_ball)."""
        mask, idx = self.space_mask(traj), self.time_index(traj)
        if not mask.any() or idx.size == 0:
            raise GeometryError(f"{self} contains no lattice samples")
        return traj.data[idx][:, mask]

    def sample_count(self, traj: Trajectory) -> int:
        return int(self.space_mask(traj).sum()) * int(self.time_index(traj).size)

    def __str__(self) -> str:
        return f"cylinder(x0={self.x0}, t0={self.t0:g}, r={self.r:g}, tau={self.tau:g})"


def sampled_measure(traj: Trajectory, cyl: Cylinder, selector: np.ndarray | None = None) -> float:
    """Space-time measure of the sample set: count x h^N x midpoint time weight."""
    mask, idx = cyl.space_mask(traj), cyl.time_index(traj)
    w = time_weights(traj.times)[idx]
    if selector is None:
        counts = np.full(idx.size, mask.sum())
    else:
        counts = selector[idx][:, mask].sum(axis=1)
    return float(np.dot(counts, w) * traj.grid.cell_volume)


def intrinsic_theta(omega: float, spec: Saturation) -> float:
    """``1 / (c0 (omega/4)^beta)``; ``inf`` is never returned for omega > 0."""
    if not omega > 0:
        raise DomainError(f"oscillation must be positive, got {omega}")
    if omega > spec.rho_max * (1 + 1e-12):
        raise DomainError(f"oscillation {omega} exceeds rho_max {spec.rho_max}")
    if spec.is_validation_mode:
        return 1.0
    return 1.0 / (spec.c0 * (omega / 4.0) ** spec.beta)


def ess_osc(traj: Trajectory, cyl: Cylinder) -> float:
    vals = cyl.samples(traj)
    return float(vals.max() - vals.min())


# oscillation cascade --------------------------------------------------------

@dataclass
class CascadeLevel:
    k: int
    r: float
    theta: float
    tau: float
    omega: float
    samples: int
    apriori: float
    radius_dominated: bool

    def to_row(self) -> list:
        return [self.k, self.r, self.theta, self.omega]


@dataclass
class OscillationRecord:
    levels: list[CascadeLevel]
    eta: float
    gamma: float
    omega0: float
    alpha: Optional[float] = None
    Gamma: Optional[float] = None
    residual: Optional[float] = None
    truncated: bool = False

    @property
    def omegas(self) -> np.ndarray:
        return np.array([lv.omega for lv in self.levels])

    @property
    def radii(self) -> np.ndarray:
        return np.array([lv.r for lv in self.levels])

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.omegas) <= 0.0))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "r", "theta", "omega"])
            for lv in self.levels:
                w.writerow([lv.k] + ["%.17g" % x for x in (lv.r, lv.theta, lv.omega)])

    @staticmethod
    def read_csv(path: str | Path) -> list[tuple[int, float, float, float]]:
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            if next(r) != ["k", "r", "theta", "omega"]:
                raise ContractError("unexpected cascade header")
            return [(int(k), float(a), float(b), float(c)) for k, a, b, c in r]

    def summary(self) -> dict:
        return {"alpha": self.alpha, "Gamma": self.Gamma, "residual": self.residual,
                "levels": len(self.levels), "eta": self.eta, "gamma": self.gamma,
                "monotone": self.is_monotone(), "truncated": self.truncated,
                "radius_dominated": [lv.k for lv in self.levels if lv.radius_dominated],
                "apriori": [lv.apriori for lv in self.levels]}


def _theta_or_inf(omega: float, spec: Saturation) -> float:
    return math.inf if omega <= 0 else intrinsic_theta(min(omega, spec.rho_max), spec)


def oscillation_cascade(traj: Trajectory, vertex: Sequence[float], R: float, spec: Saturation,
                        *, t0: Optional[float] = None, eta: Optional[float] = None,
                        gamma: Optional[float] = None, eps: Optional[float] = None,
                        max_levels: int = 12, min_samples: int = 8) -> OscillationRecord:
    """Nested intrinsic cylinders ``Q_k = Q(tau_k, R_k)``, ``R_k = eta^{k-1} R``.

    The enclosing cylinder is ``Q(R^{2-eps}, R)`` (or the whole recorded
    history if ``eps`` is None) and its oscillation sets ``theta_1``; each
    later ``theta_k`` comes from the oscillation of ``Q_{k-1}``.  Heights
    are ``tau_k = min(theta_k R_k^2, tau_{k-1})`` so the cylinders nest.
    """
    gamma = GAMMA_DEFAULT if gamma is None else gamma
    eta = default_eta(gamma, spec.beta) if eta is None else eta
    if not (0 < eta < 1 and 0 < gamma < 1 and R > 0):
        raise DomainError("need 0 < eta, gamma < 1 and R > 0")
    t0 = float(traj.times[-1]) if t0 is None else t0
    history = t0 - float(traj.times[0])
    tau_prev = history if eps is None else min(R ** (2.0 - eps), history)
    if tau_prev <= 0:
        # a single snapshot: give the cylinder a token height around t0
        tau_prev = 1.0
    outer = Cylinder(vertex, t0, R, tau_prev)
    omega_prev = ess_osc(traj, outer)
    levels: list[CascadeLevel] = []
    truncated = False
    for k in range(1, max_levels + 1):
        r = R * eta ** (k - 1)
        theta = _theta_or_inf(omega_prev, spec)
        tau = min(theta * r * r, tau_prev)
        cyl = Cylinder(vertex, t0, r, tau)
        n = cyl.sample_count(traj)
        if n < min_samples:
            logger.warning("cascade stopped at level %d: %d samples in %s", k, n, cyl)
            truncated = True
            break
        omega = ess_osc(traj, cyl)
        dominated = False
        if eps is not None:
            inv = 0.0 if math.isinf(theta) else 1.0 / theta
            dominated = not (r ** eps <= inv <= spec.c0)
        apriori = gamma ** (k - 1) * (levels[0].omega if levels else omega)
        levels.append(CascadeLevel(k, r, theta, tau, omega, n, apriori, dominated))
        tau_prev, omega_prev = tau, omega
    rec = OscillationRecord(levels, eta, gamma, ess_osc(traj, outer), truncated=truncated)
    _fit(rec, R)
    return rec


def _fit(rec: OscillationRecord, R: float) -> None:
    om, r = rec.omegas, rec.radii
    keep = om > 0
    if keep.sum() < 2:
        return
    x, y = np.log(r[keep] / R), np.log(om[keep] / om[0])
    A = np.vstack([x, np.ones_like(x)]).T
    (alpha, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    rec.alpha = float(alpha)
    rec.Gamma = float(math.exp(c))
    rec.residual = float(np.sqrt(np.mean((A @ [alpha, c] - y) ** 2)))


# alternatives -------------------------------------------------------------------

@dataclass
class Classification:
    alternative: str
    fraction_high: float
    fraction_low: float
    nu: float
    fraction_high_measured: float
    fraction_low_measured: float

    def to_dict(self) -> dict:
        return {"alternative": self.alternative, "fraction_high": self.fraction_high,
                "fraction_low": self.fraction_low, "nu": self.nu,
                "fraction_high_measured": self.fraction_high_measured,
                "fraction_low_measured": self.fraction_low_measured}


def alternative_classify(traj: Trajectory, cyl: Cylinder, omega: float, nu: float,
                         spec: Saturation) -> Classification:
    """``first`` iff ``|{rho > rho_max - omega/2}| <= nu |Q|`` on the samples.

    The ``*_measured`` fractions use the sampled extremes ``mu+ - omega/2``
    and ``mu- + omega/2`` in place of ``rho_max - omega/2`` and ``omega/2``.
    """
    if not 0 < nu < 1:
        raise DomainError("nu must lie in (0, 1)")
    vals = cyl.samples(traj)
    total = sampled_measure(traj, cyl)
    mu_plus, mu_minus = float(vals.max()), float(vals.min())

    def frac(sel):
        return sampled_measure(traj, cyl, sel) / total

    data = traj.data
    high = frac(data > spec.rho_max - omega / 2.0)
    low = frac(data < omega / 2.0)
    high_m = frac(data > mu_plus - omega / 2.0)
    low_m = frac(data < mu_minus + omega / 2.0)
    alt = "first" if high <= nu else "second"
    return Classification(alt, high, low, nu, high_m, low_m)


# time averages and long-time behaviour -------------------------------------------

def steklov_average(traj: Trajectory, h: float) -> Trajectory:
    """``(1/h) int_t^{t+h} rho`` of the piecewise-linear time interpolant,
    evaluated at every snapshot time with ``t + h <= T``."""
    t = traj.times
    span = float(t[-1] - t[0])
    if not 0 < h < span:
        raise DomainError(f"window {h} must lie in (0, {span})")
    d = np.diff(t).reshape(-1, *([1] * traj.grid.dim))
    data = traj.data
    slopes = np.diff(data, axis=0) / d
    cum = np.concatenate([np.zeros((1, *traj.grid.shape)),
                          np.cumsum(0.5 * (data[1:] + data[:-1]) * d, axis=0)])

    def integral(s: float) -> np.ndarray:
        j = int(np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 2))
        u = s - t[j]
        return cum[j] + data[j] * u + 0.5 * slopes[j] * u * u

    keep = np.flatnonzero(t + h <= t[-1] + _TIME_TOL * max(1.0, abs(t[-1])))
    out = np.stack([(integral(min(t[j] + h, t[-1])) - cum[j]) / h for j in keep])
    return Trajectory(traj.grid, t[keep], out)


@dataclass
class ConvergenceResult:
    rho_inf: DensityField
    times: np.ndarray
    gaps: np.ndarray
    residual: Optional[float]
    converged: bool
    gap_tol: float
    residual_tol: Optional[float]
    tail_start: int = 0

    @property
    def tail_monotone(self) -> bool:
        return bool(np.all(np.diff(self.gaps[self.tail_start:]) <= 0.0))

    def to_dict(self) -> dict:
        return {"converged": self.converged, "residual": self.residual,
                "residual_tol": self.residual_tol, "gap_tol": self.gap_tol,
                "max_tail_gap": float(self.gaps[self.tail_start:].max()),
                "tail_monotone": self.tail_monotone}


def convergence_monitor(traj: Trajectory, tail_fraction: float = 0.1, config=None, *,
                        gap_tol: float = 1e-4, residual_tol: Optional[float] = None
                        ) -> ConvergenceResult:
    """Sup-norm gaps to the final snapshot.

    Converged means every gap in the last ``tail_fraction`` of snapshots is
    at most ``gap_tol`` and, when a solver configuration is supplied, the
    stationary residual of the final state is at most ``residual_tol``
    (default ``10 h^2`` with the finest spacing).
    """
    if len(traj) < 10:
        raise ContractError("convergence monitoring needs at least 10 snapshots")
    if not 0 < tail_fraction <= 1:
        raise DomainError("tail_fraction must lie in (0, 1]")
    rho_inf = traj.field(len(traj) - 1)
    gaps = np.array([sup_distance(traj.field(j), rho_inf) for j in range(len(traj))])
    start = len(traj) - max(1, int(math.ceil(tail_fraction * len(traj))))
    ok = bool(np.all(gaps[start:] <= gap_tol))
    residual = None
    if config is not None:
        residual = stationary_residual(rho_inf, config)
        if residual_tol is None:
            residual_tol = 10.0 * min(traj.grid.h) ** 2
        ok = ok and residual <= residual_tol
    return ConvergenceResult(rho_inf, traj.times.copy(), gaps, residual, ok, gap_tol,
                             residual_tol, start)

