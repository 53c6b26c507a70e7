"""Continuous model: saturation law, energy densities, potentials, and the
functionals (free energy, dissipation) evaluated by midpoint quadrature.

The PDE being discretised is

    d_t rho = div( sigma(rho) grad rho + rho sigma(rho) grad(V + W * rho) )

with the free energy ``F = int U(rho) + rho V + 1/2 rho (W * rho)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, signal, special

from .errors import DomainError, ShapeError
from .mesh import DensityField, Grid

logger = logging.getLogger(__name__)

_SAMPLES = 4097


@dataclass(frozen=True)
class Saturation:
    """Saturation law sigma on [0, rho_max] with the bounds
    ``c0 * Theta(rho_max - s) <= sigma(s) <= c1 * Theta(rho_max - s)``,
    ``Theta(s) = s**beta``.

    ``form`` is one of ``"power"`` (``sigma = (rho_max - s)**m``),
    ``"tabulated"`` (piecewise linear through ``knots``) or ``"constant"``
    (``sigma = 1``; a validation mode that deliberately has no degeneracy).
    """

    form: str = "power"
    m: float = 2.0
    rho_max: float = 1.0
    beta: Optional[float] = None
    c0: float = 1.0
    c1: float = 1.0
    knots: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None

    def __post_init__(self):
        if self.form not in ("power", "tabulated", "constant"):
            raise DomainError(f"unknown saturation form {self.form!r}")
        if not self.rho_max > 0:
            raise DomainError("rho_max must be positive")
        if self.beta is None:
            object.__setattr__(self, "beta", float(self.m) if self.form == "power" else 0.0)
        if self.form == "power" and not self.m > 0:
            raise DomainError("power saturation needs m > 0")
        if self.form == "tabulated":
            self._check_knots()
        if self.form != "constant":
            if not self.beta > 0:
                raise DomainError("beta must be positive")
            if not 0 < self.c0 <= self.c1:
                raise DomainError("need 0 < c0 <= c1")
            if not self.satisfies_bounds():
                raise DomainError("sigma violates c0*Theta <= sigma <= c1*Theta")
        if self.form == "power" and self.m < 1:
            logger.warning("sigma=(rho_max-s)^%g has unbounded slope at rho_max; "
                           "the CFL bound uses sampled secant slopes", self.m)

    # construction helpers -------------------------------------------------
    @classmethod
    def power(cls, m: float = 2.0, rho_max: float = 1.0) -> "Saturation":
        return cls("power", m=m, rho_max=rho_max)

    @classmethod
    def tabulated(cls, s: Sequence[float], sigma: Sequence[float], *, beta: float,
                  c0: float, c1: float) -> "Saturation":
        s = tuple(float(v) for v in s)
        sigma = tuple(float(v) for v in sigma)
        return cls("tabulated", rho_max=s[-1], beta=beta, c0=c0, c1=c1, knots=(s, sigma))

    @classmethod
    def constant(cls, rho_max: float = 1.0) -> "Saturation":
        return cls("constant", rho_max=rho_max, beta=0.0)

    def _check_knots(self):
        if self.knots is None:
            raise DomainError("tabulated saturation needs knots")
        s, v = (np.asarray(k, dtype=float) for k in self.knots)
        if s.size != v.size or s.size < 2:
            raise DomainError("knots need matching coordinate/value columns of length >= 2")
        if np.any(np.diff(s) <= 0):
            raise DomainError("knot coordinates must be strictly increasing")
        if s[0] != 0.0 or s[-1] != self.rho_max:
            raise DomainError("knots must span exactly [0, rho_max]")
        if v[-1] != 0.0:
            raise DomainError("tabulated sigma must vanish at rho_max")
        if np.any(v[:-1] <= 0):
            raise DomainError("tabulated sigma must be positive below rho_max")

    @property
    def is_validation_mode(self) -> bool:
        return self.form == "constant"

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s, v = (np.asarray(k, dtype=float) for k in self.knots)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(s))])
        return s, v, cum

    def _check(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if not (s.min(initial=0.0) >= 0 and s.max(initial=0.0) <= self.rho_max):
            bad = s[~((s >= 0) & (s <= self.rho_max))]
            raise DomainError(f"density {bad.flat[0]!r} outside [0, {self.rho_max}]")
        return s

    def theta(self, s):
        return np.asarray(s, dtype=float) ** self.beta

    def sigma(self, s):
        """sigma(s), vectorised; raises :class:`DomainError` outside [0, rho_max]."""
        return self.sigma_unchecked(self._check(s))

    def big_sigma(self, s):
        """Primitive ``int_0^s sigma``."""
        return self.big_sigma_unchecked(self._check(s))

    def sigma_unchecked(self, s: np.ndarray) -> np.ndarray:
        if self.form == "power":
            return (self.rho_max - s) ** self.m
        if self.form == "constant":
            return np.ones_like(s)
        ks, kv, _ = self._table
        return np.interp(s, ks, kv)

    def big_sigma_unchecked(self, s: np.ndarray) -> np.ndarray:
        if self.form == "power":
            m1 = self.m + 1.0
            return (self.rho_max ** m1 - (self.rho_max - s) ** m1) / m1
        if self.form == "constant":
            return np.array(s, dtype=float)
        ks, kv, cum = self._table
        k = np.clip(np.searchsorted(ks, s, side="right") - 1, 0, ks.size - 2)
        d = s - ks[k]
        slope = (kv[k + 1] - kv[k]) / (ks[k + 1] - ks[k])
        return cum[k] + kv[k] * d + 0.5 * slope * d * d

    @cached_property
    def sigma_max(self) -> float:
        if self.form == "power":
            return float(self.rho_max ** self.m)
        if self.form == "constant":
            return 1.0
        return float(max(self.knots[1]))

    @cached_property
    def slope_bound(self) -> float:
        """Upper bound for ``-sigma'`` on [0, rho_max] (zero if sigma increases)."""
        if self.form == "constant":
            return 0.0
        if self.form == "power" and self.m >= 1:
            return float(self.m * self.rho_max ** (self.m - 1))
        s = np.linspace(0.0, self.rho_max, _SAMPLES)
        if self.form == "tabulated":
            s = np.union1d(s, self._table[0])
        v = self.sigma(s)
        return float(max(0.0, np.max(-np.diff(v) / np.diff(s))))

    @cached_property
    def drift_bound(self) -> float:
        """Bound on the partial derivatives of the upwind drift flux per unit speed."""
        return max(self.sigma_max, self.rho_max * self.slope_bound)

    def satisfies_bounds(self, n: int = 1000, atol: float = 1e-12) -> bool:
        s = np.linspace(0.0, self.rho_max, n)
        sig = self.sigma(s)
        th = self.theta(self.rho_max - s)
        return bool(np.all(self.c0 * th - atol <= sig) and np.all(sig <= self.c1 * th + atol))

    def to_dict(self) -> dict:
        d = {"form": self.form, "rho_max": self.rho_max}
        if self.form == "power":
            d["m"] = self.m
        if self.form == "tabulated":
            d.update(beta=self.beta, c0=self.c0, c1=self.c1,
                     knots=[list(self.knots[0]), list(self.knots[1])])
        return d


def sigma_eval(spec: Saturation, s: float) -> float:
    return float(spec.sigma(s))


def big_sigma(spec: Saturation, s: float) -> float:
    return float(spec.big_sigma(s))


@dataclass(frozen=True)
class EnergyDensity:
    """``boltzmann``: U(s) = s(log s - 1);  ``porous``: U(s) = s^m / (m - 1), m > 1."""

    kind: str = "boltzmann"
    m: float = 2.0

    def __post_init__(self):
        if self.kind not in ("boltzmann", "porous"):
            raise DomainError(f"unknown energy density {self.kind!r}")
        if self.kind == "porous" and not self.m > 1:
            raise DomainError("porous energy density needs m > 1")

    def U(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "porous":
            return s ** self.m / (self.m - 1.0)
        return special.xlogy(s, s) - s

    def dU(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "porous":
            return self.m * s ** (self.m - 1.0) / (self.m - 1.0)
        with np.errstate(divide="ignore"):
            return np.log(s)

    def d2U(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "porous":
            return self.m * s ** (self.m - 2.0)
        with np.errstate(divide="ignore"):
            return 1.0 / s

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m} if self.kind == "porous" else {"kind": self.kind}


class DiffusionPrimitive:
    """Phi with ``Phi' = U''(s) s sigma(s)``, ``Phi(0) = 0``.

    For the Boltzmann density this is exactly ``Sigma``; otherwise Phi is
    tabulated once by cumulative Simpson quadrature and interpolated
    linearly, which keeps it monotone.
    """

    def __init__(self, sat: Saturation, energy: EnergyDensity, n: int = 16385):
        self.sat = sat
        self.energy = energy
        if energy.kind == "boltzmann":
            self._s = None
            self.lipschitz = sat.sigma_max
            return
        s = np.linspace(0.0, sat.rho_max, n)
        dphi = energy.m * s ** (energy.m - 1.0) * sat.sigma(s)
        phi = integrate.cumulative_simpson(dphi, x=s, initial=0.0)
        phi = np.maximum.accumulate(phi)
        self._s, self._phi = s, phi
        self.lipschitz = float(np.max(np.diff(phi) / np.diff(s)))

    def __call__(self, rho):
        return self.unchecked(self.sat._check(rho))

    def unchecked(self, rho: np.ndarray) -> np.ndarray:
        if self._s is None:
            return self.sat.big_sigma_unchecked(rho)
        return np.interp(rho, self._s, self._phi)


@lru_cache(maxsize=32)
def diffusion_primitive(sat: Saturation, energy: EnergyDensity) -> DiffusionPrimitive:
    return DiffusionPrimitive(sat, energy)


@dataclass(frozen=True)
class Potential:
    """A confinement potential or an interaction kernel.

    ``kind``: ``zero``, ``quadratic`` (``|x - center|^2 / 2``), ``tabulated``
    (1D table, read radially in 2D) or ``function`` (a callable of the
    coordinate arrays).  Kernels are evaluated on the difference set
    ``Omega - Omega``, so a tabulated kernel has to cover it.
    """

    kind: str = "zero"
    center: tuple[float, ...] = ()
    table: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic", "tabulated", "function"):
            raise DomainError(f"unknown potential preset {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise DomainError("tabulated potential needs a table")
            xs = np.asarray(self.table[0])
            if np.any(np.diff(xs) <= 0):
                raise DomainError("table coordinates must be strictly increasing")
        if self.kind == "function" and self.func is None:
            raise DomainError("function potential needs a callable")

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero")

    @classmethod
    def quadratic(cls, center: Sequence[float] = ()) -> "Potential":
        return cls("quadratic", center=tuple(float(c) for c in center))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        coords = [np.asarray(c, dtype=float) for c in coords]
        if self.kind == "zero":
            return np.zeros(np.broadcast(*coords).shape)
        if self.kind == "quadratic":
            center = self.center or (0.0,) * len(coords)
            return 0.5 * sum((c - x0) ** 2 for c, x0 in zip(coords, center))
        if self.kind == "function":
            return np.asarray(self.func(*coords), dtype=float) * np.ones(
                np.broadcast(*coords).shape)
        xs, vs = (np.asarray(t, dtype=float) for t in self.table)
        r = coords[0] if len(coords) == 1 else np.sqrt(sum(c * c for c in coords))
        if r.min() < xs[0] - 1e-12 or r.max() > xs[-1] + 1e-12:
            raise ShapeError(f"table on [{xs[0]}, {xs[-1]}] does not cover "
                             f"[{r.min()}, {r.max()}]")
        return np.interp(r, xs, vs)

    def to_dict(self) -> dict:
        d: dict = {"preset": self.kind}
        if self.kind == "quadratic" and self.center:
            d["center"] = list(self.center)
        if self.kind == "tabulated":
            d["table"] = [list(self.table[0]), list(self.table[1])]
        return d


@dataclass(frozen=True)
class PotentialSpec:
    V: Potential = field(default_factory=Potential.zero)
    W: Potential = field(default_factory=Potential.zero)

    def V_values(self, grid: Grid) -> np.ndarray:
        return self.V(*grid.centers)

    def W_kernel(self, grid: Grid) -> np.ndarray:
        """Kernel sampled on the lattice of centre differences ``(i - j) h``."""
        offsets = [(np.arange(2 * n - 1) - (n - 1)) * h for n, h in zip(grid.cells, grid.h)]
        if grid.dim == 2:
            offsets = np.meshgrid(*offsets, indexing="ij")
        return self.W(*offsets)

    def big_lambda(self, grid: Grid) -> float:
        """``2 max(|grad V|_inf, |grad W|_inf)`` from sampled gradients."""
        return 2.0 * max(_max_gradient(self.V_values(grid), grid.h),
                         _max_gradient(self.W_kernel(grid), grid.h))

    def to_dict(self) -> dict:
        return {"V": self.V.to_dict(), "W": self.W.to_dict()}


def _max_gradient(values: np.ndarray, h: Sequence[float]) -> float:
    if values.ndim == 1:
        g = [np.gradient(values, h[0], edge_order=2)]
    else:
        g = np.gradient(values, *h, edge_order=2)
    return float(np.sqrt(sum(gi * gi for gi in g)).max())


def convolve_values(grid: Grid, kernel: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``(W * rho)_i = sum_j W(x_i - x_j) rho_j h^N`` for a sampled kernel."""
    n = grid.cells
    if grid.dim == 1:
        full = np.convolve(kernel, rho)
        return full[n[0] - 1:2 * n[0] - 1] * grid.cell_volume
    full = signal.fftconvolve(kernel, rho, mode="full")
    return full[n[0] - 1:2 * n[0] - 1, n[1] - 1:2 * n[1] - 1] * grid.cell_volume


def convolve(field: DensityField, pots: PotentialSpec | Potential) -> DensityField:
    W = pots.W if isinstance(pots, PotentialSpec) else pots
    grid = field.grid
    if W.is_zero:
        return DensityField(grid, np.zeros(grid.shape))
    kernel = PotentialSpec(W=W).W_kernel(grid)
    return DensityField(grid, convolve_values(grid, kernel, field.values))


def potential_values(field: DensityField, pots: PotentialSpec) -> np.ndarray:
    """``V + W * rho`` at the cell centres."""
    return pots.V_values(field.grid) + convolve(field, pots).values


def free_energy_values(grid: Grid, rho: np.ndarray, energy: EnergyDensity,
                       V: np.ndarray, Wrho: np.ndarray) -> float:
    integrand = energy.U(rho) + rho * V + 0.5 * rho * Wrho
    return float(integrand.sum() * grid.cell_volume)


def free_energy(field: DensityField, energy: EnergyDensity, pots: PotentialSpec) -> float:
    if field.values.min() < 0:
        raise DomainError("free energy of a negative density")
    Wrho = convolve(field, pots).values
    return free_energy_values(field.grid, field.values, energy, pots.V_values(field.grid), Wrho)


def _logmean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Logarithmic mean ``(b - a) / (log b - log a)``; 0 if either argument is 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.log(b) - np.log(a)
        out = (b - a) / d
        near = np.abs(d) < 1e-3
        if np.any(near):
            # sqrt(ab) sinh(d/2) / (d/2)
            dn = d[near]
            out[near] = np.sqrt(a[near] * b[near]) * (1.0 + dn * dn / 24.0 + dn ** 4 / 1920.0)
    out[(a <= 0) | (b <= 0)] = 0.0
    return out


def dissipation_values(grid: Grid, rho: np.ndarray, phi: np.ndarray, sat: Saturation,
                       energy: EnergyDensity) -> float:
    """Face sum of ``m_face |grad xi|^2`` with ``xi = U'(rho) + phi``.

    ``m_face = rho_face * sigma_face``.  For the Boltzmann density
    ``rho_face`` is the logarithmic mean, so ``rho_face * grad log rho`` is
    exactly the difference quotient of ``rho``; faces touching an empty cell
    contribute nothing.
    """
    sig = sat.sigma_unchecked(rho)
    total = 0.0
    for axis, h in enumerate(grid.h):
        lo = (slice(None),) * axis + (slice(None, -1),)
        hi = (slice(None),) * axis + (slice(1, None),)
        rl, rr = rho[lo], rho[hi]
        s_face = 0.5 * (sig[lo] + sig[hi])
        dphi = phi[hi] - phi[lo]
        if energy.kind == "boltzmann":
            r_face = _logmean(rl, rr)
            flux = (rr - rl) + r_face * dphi
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = s_face * flux * flux / r_face
            total += float(np.sum(terms[r_face > 0])) / (h * h)
        else:
            r_face = 0.5 * (rl + rr)
            dxi = energy.dU(rr) - energy.dU(rl) + dphi
            total += float(np.sum(r_face * s_face * dxi * dxi)) / (h * h)
    return total * grid.cell_volume


def dissipation(field: DensityField, energy: EnergyDensity, pots: PotentialSpec,
                spec: Saturation) -> float:
    phi = potential_values(field, pots)
    return dissipation_values(field.grid, field.values, phi, spec, energy)
