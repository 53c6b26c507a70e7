"""Numerical checks of the energy-type inequalities on sampled trajectories.

All space integrals use midpoint (cell) quadrature, gradients of grid
functions are two-point face differences of the already-truncated values,
and time integrals use the trapezoid rule over the snapshots that make up a
cylinder.  Cutoff derivatives are analytic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import Cylinder, time_weights
from .errors import ContractError, DomainError, GeometryError
from .mesh import DensityField, Grid, Trajectory
from .model import PotentialSpec, Saturation
from .solver import SimulationConfig, scheme_for

DEFAULT_SLACK = 0.10
CACCIOPPOLI_C1 = 10.0
CACCIOPPOLI_C2 = 10.0
LOG_C = 6.0


def kappa_default(dim: int) -> float:
    return 1.0 + 4.0 / dim


def b_hat_default(dim: int) -> float:
    return 2.0 / (dim + 4.0)


# truncations and level sets ------------------------------------------------------

@dataclass(frozen=True)
class Truncation:
    k: float
    sign: str = "+"

    def __post_init__(self):
        if self.sign not in ("+", "-"):
            raise DomainError(f"sign must be '+' or '-', got {self.sign!r}")

    def apply(self, values):
        values = np.asarray(values, dtype=float)
        d = values - self.k if self.sign == "+" else self.k - values
        return np.maximum(d, 0.0)


def truncate(field: DensityField | np.ndarray, trunc: Truncation) -> DensityField | np.ndarray:
    """``(rho - k)_+`` or ``(rho - k)_-`` cellwise."""
    if isinstance(field, DensityField):
        return DensityField(field.grid, trunc.apply(field.values))
    return trunc.apply(field)


def _superlevel(values: np.ndarray, k: float, sign: str) -> np.ndarray:
    return values > k if sign == "+" else values < k


def level_set_measure(traj: Trajectory, cyl: Cylinder, k: float, sign: str = "+"
                      ) -> tuple[float, np.ndarray]:
    """``|A_{k,r}^±(t)|`` per snapshot of the cylinder and its time integral."""
    Truncation(k, sign)
    mask, idx = cyl.space_mask(traj), cyl.time_index(traj)
    if not mask.any() or idx.size == 0:
        raise GeometryError(f"{cyl} contains no lattice samples")
    counts = _superlevel(traj.data[idx][:, mask], k, sign).sum(axis=1)
    per_slice = counts * traj.grid.cell_volume
    return float(np.dot(per_slice, time_weights(traj.times)[idx])), per_slice


def psi_log(a: float, b: float, c: float, sign: str, s):
    """``max(log(a / ((a + c) - (s - b)_±)), 0)``.

    Requires ``a > c > 0`` and ``(s - b)_± < a + c``.
    """
    if not (c > 0 and a > c):
        raise DomainError(f"need a > c > 0, got a={a}, c={c}")
    s = np.asarray(s, dtype=float)
    w = Truncation(b, sign).apply(s)
    den = (a + c) - w
    if np.any(den <= 0):
        raise DomainError("argument beyond the domain of the logarithmic function")
    out = np.maximum(np.log(a / den), 0.0)
    return out if out.ndim else float(out)


# cutoff functions -------------------------------------------------------------------

def _ramp(s: np.ndarray, smooth: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ramp g on [0, 1] with g(0) = 0, g(1) = 1 and its first two derivatives."""
    s = np.clip(s, 0.0, 1.0)
    inside = (s > 0) & (s < 1)
    if smooth:
        g = s * s * (3.0 - 2.0 * s)
        g1 = np.where(inside, 6.0 * s * (1.0 - s), 0.0)
        g2 = np.where(inside, 6.0 - 12.0 * s, 0.0)
    else:
        g = s
        g1 = np.where(inside, 1.0, 0.0)
        g2 = np.zeros_like(s)
    return g, g1, g2


@dataclass(frozen=True)
class CutoffFunction:
    """Separable cutoff ``zeta(x, t) = Z(|x - x0|) T(t)``.

    ``Z`` is 1 on ``B_{r_in}`` and 0 outside ``B_{r_out}``; ``T`` is 0 before
    ``t0 - tau_out`` and 1 after ``t0 - tau_in``.  With ``time_ramp=False``
    ``T`` is identically 1.
    """

    outer: Cylinder
    inner: Cylinder
    profile: str = "linear"
    time_ramp: bool = True

    def __post_init__(self):
        if self.profile not in ("linear", "smoothed"):
            raise DomainError(f"unknown cutoff profile {self.profile!r}")

    @property
    def smooth(self) -> bool:
        return self.profile == "smoothed"

    @property
    def dr(self) -> float:
        return self.outer.r - self.inner.r

    @property
    def dtau(self) -> float:
        return self.outer.tau - self.inner.tau

    def _space(self, coords: Sequence[np.ndarray]):
        x0 = self.outer.x0
        diffs = [np.asarray(c, dtype=float) - x for c, x in zip(coords, x0)]
        rad = np.sqrt(sum(d * d for d in diffs))
        g, g1, g2 = _ramp((self.outer.r - rad) / self.dr, self.smooth)
        return diffs, rad, g, -g1 / self.dr, g2 / self.dr ** 2

    def _time(self, t):
        t = np.asarray(t, dtype=float)
        if not self.time_ramp:
            return np.ones_like(t), np.zeros_like(t)
        g, g1, _ = _ramp((t - (self.outer.t0 - self.outer.tau)) / self.dtau, self.smooth)
        return g, g1 / self.dtau

    def value(self, coords: Sequence[np.ndarray], t: float) -> np.ndarray:
        _, _, g, _, _ = self._space(coords)
        return g * self._time(t)[0]

    def grad(self, coords: Sequence[np.ndarray], t: float) -> tuple[np.ndarray, ...]:
        diffs, rad, _, dZ, _ = self._space(coords)
        T = self._time(t)[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = [np.where(rad > 0, d / rad, 0.0) for d in diffs]
        return tuple(T * dZ * u for u in unit)

    def grad_norm(self, coords: Sequence[np.ndarray], t: float) -> np.ndarray:
        _, _, _, dZ, _ = self._space(coords)
        return np.abs(dZ) * self._time(t)[0]

    def time_derivative(self, coords: Sequence[np.ndarray], t: float) -> np.ndarray:
        _, _, g, _, _ = self._space(coords)
        return g * self._time(t)[1]

    def laplacian(self, coords: Sequence[np.ndarray], t: float) -> np.ndarray:
        """Radial Laplacian away from ramp kinks."""
        _, rad, _, dZ, d2Z = self._space(coords)
        dim = len(coords)
        with np.errstate(invalid="ignore", divide="ignore"):
            lap = d2Z + np.where(rad > 0, (dim - 1) * dZ / rad, 0.0)
        return lap * self._time(t)[0]

    # lattice sampling -------------------------------------------------------
    def sample(self, grid: Grid, times: Sequence[float]) -> np.ndarray:
        return np.stack([self.value(grid.centers, t) for t in times])

    def bounds(self, grid: Grid, times: Sequence[float]) -> dict:
        """Measured derivative maxima on the lattice next to their targets."""
        c = grid.centers
        grad = max(float(self.grad_norm(c, t).max()) for t in times)
        dt = max(float(self.time_derivative(c, t).max()) for t in times)
        lap = max(float(np.abs(self.laplacian(c, t)).max()) for t in times)
        g1 = 1.5 if self.smooth else 1.0
        g2 = 6.0 if self.smooth else 0.0
        dim = grid.dim
        return {"grad": grad, "grad_target": g1 / self.dr,
                "dt": dt, "dt_target": g1 / self.dtau if self.time_ramp else 0.0,
                "lap": lap, "lap_target": g2 / self.dr ** 2 + (dim - 1) * g1 / (self.inner.r * self.dr)}


def build_cutoff(outer: Cylinder, inner: Cylinder, profile: str = "linear", *,
                 time_ramp: bool = True) -> CutoffFunction:
    if outer.x0 != inner.x0 or outer.t0 != inner.t0:
        raise GeometryError("inner and outer cylinders must share the vertex")
    if not inner.r < outer.r:
        raise GeometryError(f"inner radius {inner.r} is not below outer radius {outer.r}")
    if time_ramp and not inner.tau < outer.tau:
        raise GeometryError(f"inner height {inner.tau} is not below outer height {outer.tau}")
    if not time_ramp and inner.tau > outer.tau:
        raise GeometryError("inner cylinder is taller than the outer one")
    return CutoffFunction(outer, inner, profile, time_ramp)


# reports --------------------------------------------------------------------------

@dataclass
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    constant: float
    slack: float = DEFAULT_SLACK
    terms: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs <= 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + self.slack)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "constant": self.constant,
                "ratio": self.ratio, "slack": self.slack, "pass": self.passed,
                "terms": dict(self.terms)}

    def write_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_json(cls, path: str | Path) -> "EstimateReport":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["name"], d["lhs"], d["rhs"], d["constant"], d["slack"], d["terms"])

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        terms = ", ".join(f"{k}={v:.4g}" for k, v in self.terms.items())
        return f"{self.name}: {verdict} lhs={self.lhs:.6g} rhs={self.rhs:.6g} ({terms})"


# shared quadrature --------------------------------------------------------------------

@dataclass
class _Window:
    """Snapshots ``j0..j1`` spanning ``[t_b, t0]``, ``t_b <= t0 - tau``."""

    idx: np.ndarray
    times: np.ndarray
    weights: np.ndarray


def _window(traj: Trajectory, cyl: Cylinder) -> _Window:
    t = traj.times
    tol = 1e-12 * max(1.0, abs(cyl.t0))
    top = int(np.searchsorted(t, cyl.t0 + tol, side="right")) - 1
    bottom = int(np.searchsorted(t, cyl.t0 - cyl.tau + tol, side="right")) - 1
    if top < 0 or bottom < 0:
        raise GeometryError(f"{cyl} starts before the first snapshot")
    if top <= bottom:
        raise GeometryError(f"{cyl} spans fewer than two snapshots")
    idx = np.arange(bottom, top + 1)
    ts = t[idx]
    w = np.zeros(idx.size)
    d = np.diff(ts)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return _Window(idx, ts, w)


def _require_resolution(grid: Grid, r: float) -> None:
    if r < 4 * max(grid.h):
        raise GeometryError(f"radius {r} spans fewer than 4 cells (h={max(grid.h)})")


def _face_pairs(grid: Grid):
    for axis, h in enumerate(grid.h):
        lo = (slice(None),) * axis + (slice(None, -1),)
        hi = (slice(None),) * axis + (slice(1, None),)
        fc = grid.face_coordinates(axis)
        fc = tuple(c[(slice(None),) * axis + (slice(1, -1),)] for c in fc)
        yield axis, h, lo, hi, fc


def _grad_sq_faces(grid: Grid, w: np.ndarray, sig: np.ndarray, z: np.ndarray) -> float:
    """``int sigma |grad w|^2 zeta^2`` with face differences of ``w``.

    ``sigma`` is averaged to faces and ``zeta^2`` is taken as ``zeta_L zeta_R``,
    so a face contributes only when both cells lie in the cutoff's support.
    """
    total = 0.0
    for axis, h, lo, hi, _ in _face_pairs(grid):
        dw = (w[hi] - w[lo]) / h
        s = 0.5 * (sig[lo] + sig[hi])
        total += float(np.sum(s * dw * dw * z[lo] * z[hi]))
    return total * grid.cell_volume


def _sigma_of(spec: Saturation, rho: np.ndarray) -> np.ndarray:
    return spec.sigma(np.clip(rho, 0.0, spec.rho_max))


# Caccioppoli-type estimate ----------------------------------------------------------------

def caccioppoli_check(traj: Trajectory, cyl: Cylinder, k: float, sign: str,
                      zeta: CutoffFunction, spec: Saturation, pots: PotentialSpec, *,
                      slack: float = DEFAULT_SLACK, C1: float = CACCIOPPOLI_C1,
                      C2: float = CACCIOPPOLI_C2, C3: Optional[float] = None) -> EstimateReport:
    """Energy estimate for ``w = (rho - k)_±``.

    ``lhs = max_j [ int w^2 zeta^2 (t_j) + int_{t_b}^{t_j} int sigma |grad w|^2 zeta^2 ]``
    and ``rhs = int w^2 zeta^2 (t_b) + C1 int int sigma w^2 |grad zeta|^2
    + C2 int int w^2 zeta |d_t zeta| + C3 int |A_±|`` with ``C3 = 4 sigma_max Lambda``.
    """
    grid = traj.grid
    _require_resolution(grid, cyl.r)
    win = _window(traj, cyl)
    trunc = Truncation(k, sign)
    lam = pots.big_lambda(grid)
    C3 = 4.0 * spec.sigma_max * lam if C3 is None else C3
    c = grid.centers
    dv = grid.cell_volume

    sup_terms, grad_terms, cut_terms, dt_terms = [], [], [], []
    for j, t in zip(win.idx, win.times):
        rho = traj.data[j]
        w = trunc.apply(rho)
        sig = _sigma_of(spec, rho)
        z = zeta.value(c, t)
        sup_terms.append(float(np.sum(w * w * z * z)) * dv)
        grad_terms.append(_grad_sq_faces(grid, w, sig, z))
        cut_terms.append(float(np.sum(sig * w * w * zeta.grad_norm(c, t) ** 2)) * dv)
        dt_terms.append(float(np.sum(w * w * z * np.abs(zeta.time_derivative(c, t)))) * dv)
    sup_terms = np.array(sup_terms)
    grad_terms = np.array(grad_terms)
    # running trapezoid of the gradient term
    running = np.concatenate([[0.0], np.cumsum(0.5 * (grad_terms[1:] + grad_terms[:-1])
                                               * np.diff(win.times))])
    lhs = float(np.max(sup_terms + running))
    level, _ = level_set_measure(traj, cyl, k, sign)
    terms = {
        "initial": float(sup_terms[0]),
        "gradient_cutoff": C1 * float(np.dot(cut_terms, win.weights)),
        "time_cutoff": C2 * float(np.dot(dt_terms, win.weights)),
        "level_set": C3 * level,
        "sup_part": float(sup_terms.max()),
        "dissipation_part": float(running[-1]),
    }
    rhs = terms["initial"] + terms["gradient_cutoff"] + terms["time_cutoff"] + terms["level_set"]
    return EstimateReport("caccioppoli", lhs, rhs, C1, slack, terms)


# logarithmic estimate ---------------------------------------------------------------------

def log_estimate_check(traj: Trajectory, cyl: Cylinder, k: float, c: float, sign: str,
                       zeta: CutoffFunction, spec: Saturation, pots: PotentialSpec, *,
                       slack: float = DEFAULT_SLACK, C: float = LOG_C) -> EstimateReport:
    """Logarithmic estimate for ``psi = psi_{H, k, c}^±(rho)``, ``H = sup_Q (rho - k)_±``.

    ``rhs = int psi^2 zeta^2 (t_b) + C int int sigma psi |grad zeta|^2
    + 3 sigma_max Lambda^2 / c^2 (1 + log(H/c)) int |A_±|``, plus
    ``2 int int psi^2 zeta |d_t zeta|`` when ``zeta`` depends on time.
    """
    grid = traj.grid
    _require_resolution(grid, cyl.r)
    win = _window(traj, cyl)
    trunc = Truncation(k, sign)
    H = float(trunc.apply(cyl.samples(traj)).max())
    bottom = trunc.apply(traj.data[win.idx[0]][cyl.space_mask(traj)])
    H = max(H, float(bottom.max()))
    if H == 0.0:
        return EstimateReport("log", 0.0, 0.0, C, slack, {"H": 0.0})
    if not 0 < c < H:
        raise DomainError(f"need 0 < c < H = {H}, got c = {c}")
    lam = pots.big_lambda(grid)
    cc = grid.centers
    dv = grid.cell_volume

    sup_terms, cut_terms, dt_terms = [], [], []
    for j, t in zip(win.idx, win.times):
        rho = traj.data[j]
        # outside the ball zeta vanishes; clipping keeps psi finite there
        w = np.minimum(trunc.apply(rho), H)
        psi = np.maximum(np.log(H / ((H + c) - w)), 0.0)
        sig = _sigma_of(spec, rho)
        z = zeta.value(cc, t)
        sup_terms.append(float(np.sum(psi * psi * z * z)) * dv)
        cut_terms.append(float(np.sum(sig * psi * zeta.grad_norm(cc, t) ** 2)) * dv)
        dt_terms.append(float(np.sum(psi * psi * z * np.abs(zeta.time_derivative(cc, t)))) * dv)
    level, _ = level_set_measure(traj, cyl, k, sign)
    C3 = 3.0 * spec.sigma_max * lam ** 2 / c ** 2 * (1.0 + math.log(H / c))
    terms = {
        "H": H,
        "initial": float(sup_terms[0]),
        "gradient_cutoff": C * float(np.dot(cut_terms, win.weights)),
        "time_cutoff": 2.0 * float(np.dot(dt_terms, win.weights)),
        "level_set": C3 * level,
    }
    rhs = terms["initial"] + terms["gradient_cutoff"] + terms["time_cutoff"] + terms["level_set"]
    return EstimateReport("log", float(max(sup_terms)), rhs, C, slack, terms)


# DeGiorgi isoperimetric inequality ------------------------------------------------------------

def degiorgi_check(field: DensityField, k0: float, k1: float, *,
                   x0: Optional[Sequence[float]] = None, r: Optional[float] = None,
                   C: Optional[float] = None, slack: float = DEFAULT_SLACK) -> EstimateReport:
    """``(k0 - k1) |v > k0| <= C r^{N+1} / |v < k1| int_{k1 < v < k0} |grad v|`` on ``B_r(x0)``.

    The band integral is the total variation of ``clip(v, k1, k0)``: in 1D
    the sum of face jumps (exact for the piecewise-linear interpolant), in
    2D the cell-centred gradient norm.  Defaults: the ball around the domain
    centre that covers the whole grid, and ``C = 4N``.
    """
    if not k1 < k0:
        raise DomainError(f"need k1 < k0, got k1={k1}, k0={k0}")
    grid = field.grid
    dim = grid.dim
    C = 4.0 * dim if C is None else C
    if x0 is None:
        x0 = [0.5 * (a + b) for a, b in grid.extents]
    if r is None:
        r = 0.5 * math.sqrt(sum((b - a) ** 2 for a, b in grid.extents)) * (1 + 1e-12)
    mask = grid.distance_from(x0) < r
    v = field.values
    dv = grid.cell_volume
    below = float(np.sum(mask & (v < k1))) * dv
    if below == 0.0:
        raise ContractError("|v < k1| vanishes on the ball; the inequality is vacuous")
    above = float(np.sum(mask & (v > k0))) * dv
    u = np.clip(v, k1, k0)
    if dim == 1:
        both = mask[:-1] & mask[1:]
        band = float(np.sum(np.abs(np.diff(u))[both]))
    else:
        gx, gy = np.gradient(u, *grid.h)
        band = float(np.sum(np.sqrt(gx * gx + gy * gy)[mask])) * dv
    lhs = (k0 - k1) * above
    rhs = C * r ** (dim + 1) / below * band
    return EstimateReport("degiorgi", lhs, rhs, C, slack,
                          {"above": above, "below": below, "band_variation": band, "r": r})


# fast geometric convergence -----------------------------------------------------------------

@dataclass
class GeometricResult:
    Y: np.ndarray
    Z: np.ndarray
    converged: bool
    threshold: float
    below_threshold: bool

    def to_dict(self) -> dict:
        return {"converged": self.converged, "threshold": self.threshold,
                "below_threshold": self.below_threshold, "iterations": int(self.Y.size - 1),
                "Y_final": float(self.Y[-1]), "Z_final": float(self.Z[-1])}


def geometric_threshold(C: float, b: float, kappa: float, upsilon: float) -> float:
    d = min(kappa, upsilon)
    return (2.0 * C) ** (-(1.0 + kappa) / d) * b ** (-(1.0 + kappa) / d ** 2)


def geometric_convergence(Y0: float, Z0: float, C: float, b: float, kappa: float,
                          upsilon: float, n_max: int = 200, tol: float = 1e-8) -> GeometricResult:
    """Iterate ``Y' = C b^n (Y^{1+u} + Y^u Z^{1+k})``, ``Z' = C b^n (Y + Z^{1+k})``
    with equality, in log space.  Iteration stops early once a term exceeds
    ``1e300`` (divergence)."""
    if not (C > 1 and b > 1 and kappa > 0 and upsilon > 0):
        raise DomainError("need C > 1, b > 1, kappa > 0, upsilon > 0")
    if Y0 < 0 or Z0 < 0:
        raise DomainError("Y0 and Z0 must be nonnegative")
    with np.errstate(divide="ignore"):
        ly, lz = float(np.log(Y0)), float(np.log(Z0))
    lc, lb = math.log(C), math.log(b)
    logs = [(ly, lz)]
    diverged = False
    for n in range(n_max):
        a = lc + n * lb
        ly, lz = (a + float(np.logaddexp((1 + upsilon) * ly, upsilon * ly + (1 + kappa) * lz)),
                  a + float(np.logaddexp(ly, (1 + kappa) * lz)))
        logs.append((ly, lz))
        if max(ly, lz) > math.log(1e300):
            diverged = True
            break
    with np.errstate(over="ignore"):
        arr = np.exp(np.array(logs))
    thr = geometric_threshold(C, b, kappa, upsilon)
    converged = not diverged and arr[-1, 0] < tol and arr[-1, 1] < tol
    return GeometricResult(arr[:, 0], arr[:, 1], bool(converged), thr,
                           bool(Y0 + Z0 ** (1 + kappa) <= thr))


# weak formulation -------------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakTestFunction:
    """Separable test function ``phi(x, t) = f(x) g(t)``.

    ``space`` maps coordinate arrays to values, ``space_grad`` to a tuple of
    partial derivatives; ``time`` and ``time_derivative`` act on scalars.
    """

    space: Callable
    space_grad: Callable
    time: Callable[[float], float]
    time_derivative: Callable[[float], float]

    def value(self, coords, t):
        return self.space(*coords) * self.time(t)

    def grad(self, coords, t):
        return tuple(g * self.time(t) for g in self.space_grad(*coords))

    def dt(self, coords, t):
        return self.space(*coords) * self.time_derivative(t)


def _test_value(test, coords, t):
    return test.value(coords, t)


def _test_dt(test, coords, t):
    if isinstance(test, CutoffFunction):
        return test.time_derivative(coords, t)
    return test.dt(coords, t)


def weak_form_residual(traj: Trajectory, test: WeakTestFunction | CutoffFunction,
                       config: SimulationConfig, *, atol: float = 1e-12) -> float:
    """``int rho_0 phi(0) + int int rho d_t phi + int int J . grad phi``.

    ``J`` is the scheme's face flux, so the last term is the discrete form of
    ``-int int (sigma grad rho + rho sigma grad(V + W * rho)) . grad phi``.
    Space integrals use cells (first two terms) and faces (flux term); time
    integrals use the trapezoid rule over the snapshots.
    """
    grid = traj.grid
    if grid != config.grid:
        raise ContractError("trajectory and configuration grids differ")
    T = float(traj.times[-1])
    centers = grid.centers
    if np.max(np.abs(_test_value(test, centers, T))) > atol:
        raise ContractError("test function does not vanish at the final time")
    sch = scheme_for(config)
    dv = grid.cell_volume
    faces = [fc for _, _, _, _, fc in _face_pairs(grid)]
    vals = []
    for j, t in enumerate(traj.times):
        rho = traj.data[j]
        term = float(np.sum(rho * _test_dt(test, centers, t))) * dv
        J = sch._interior_fluxes(rho, sch.potential(rho))
        for axis, (Ja, fc) in enumerate(zip(J, faces)):
            term += float(np.sum(Ja * test.grad(fc, t)[axis])) * dv
        vals.append(term)
    vals = np.array(vals)
    t = traj.times
    space_time = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t)))
    initial = float(np.sum(traj.data[0] * _test_value(test, centers, t[0]))) * dv
    return initial + space_time
