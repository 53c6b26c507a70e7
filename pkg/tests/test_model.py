from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from satdiff import (DensityField, DomainError, EnergyDensity, Grid, Potential, PotentialSpec,
                     Saturation, big_sigma, convolve, dissipation, free_energy, sigma_eval)
from satdiff.model import diffusion_primitive


def unit_grid(n: int) -> Grid:
    return Grid.uniform(0.0, 1.0, n)


def const_field(grid: Grid, value: float) -> DensityField:
    return DensityField(grid, np.full(grid.shape, value))


# saturation -------------------------------------------------------------------------

@pytest.mark.parametrize("s, expected", [(1.0, 0.0), (0.5, 0.25), (0.0, 1.0)])
def test_sigma_power_values(s, expected):
    assert sigma_eval(Saturation.power(2.0, 1.0), s) == expected


@pytest.mark.parametrize("s", [-1e-3, 1.0 + 1e-3])
def test_sigma_outside_range_raises(s):
    with pytest.raises(DomainError):
        sigma_eval(Saturation.power(2.0, 1.0), s)
    with pytest.raises(ValueError):
        big_sigma(Saturation.power(2.0, 1.0), s)


def test_big_sigma_power_closed_form():
    spec = Saturation.power(2.0, 1.0)
    assert big_sigma(spec, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert big_sigma(spec, 0.0) == 0.0
    spec3 = Saturation.power(3.0, 2.0)
    for s in (0.3, 1.1, 1.9):
        assert big_sigma(spec3, s) == pytest.approx((2.0 ** 4 - (2.0 - s) ** 4) / 4.0, rel=1e-13)


def test_big_sigma_tabulated_matches_trapezoid_oracle():
    knots = np.linspace(0.0, 1.0, 1001)
    spec = Saturation.tabulated(knots, (1.0 - knots) ** 2, beta=2.0, c0=1.0, c1=1.01)
    fine = np.linspace(0.0, 0.5, 200001)
    oracle = integrate.trapezoid((1.0 - fine) ** 2, fine)
    assert oracle == pytest.approx(7.0 / 24.0, abs=1e-9)
    assert big_sigma(spec, 0.5) == pytest.approx(oracle, abs=1e-6)


def test_big_sigma_strictly_increasing_below_saturation():
    spec = Saturation.power(2.0, 1.0)
    s = np.linspace(0.0, 0.999, 500)
    assert np.all(np.diff(spec.big_sigma(s)) > 0)


@pytest.mark.parametrize("spec", [Saturation.power(1.0), Saturation.power(2.0),
                                  Saturation.power(3.5, 2.0)])
def test_power_form_satisfies_sandwich(spec):
    assert spec.beta == spec.m and spec.c0 == spec.c1 == 1.0
    s = np.linspace(0.0, spec.rho_max, 1000)
    theta = (spec.rho_max - s) ** spec.beta
    sig = spec.sigma(s)
    assert np.all(spec.c0 * theta - 1e-12 <= sig) and np.all(sig <= spec.c1 * theta + 1e-12)
    assert spec.satisfies_bounds()
    assert spec.sigma(spec.rho_max) == 0.0 and np.all(sig[:-1] > 0)


def test_tabulated_requires_zero_at_saturation():
    with pytest.raises(DomainError):
        Saturation.tabulated([0.0, 0.5, 1.0], [1.0, 0.5, 0.1], beta=1.0, c0=0.1, c1=2.0)


def test_validation_mode_is_flagged_and_non_degenerate():
    spec = Saturation.constant(1.0)
    assert spec.is_validation_mode
    assert spec.sigma(1.0) == 1.0


# energy density and diffusion primitive ----------------------------------------------

@pytest.mark.parametrize("energy", [EnergyDensity("boltzmann"), EnergyDensity("porous", 2.0),
                                    EnergyDensity("porous", 3.0)])
def test_energy_density_convex(energy):
    s = np.linspace(1e-3, 1.0, 400)
    assert np.all(energy.d2U(s) > 0)
    u = energy.U(s)
    assert np.all(u[1:-1] <= 0.5 * (u[:-2] + u[2:]) + 1e-14)


def test_boltzmann_u_at_zero_is_zero():
    assert EnergyDensity("boltzmann").U(np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("energy", [EnergyDensity("boltzmann"), EnergyDensity("porous", 2.0)])
@pytest.mark.parametrize("spec", [Saturation.power(1.0), Saturation.power(2.0)])
def test_diffusion_primitive_monotone(energy, spec):
    phi = diffusion_primitive(spec, energy)
    s = np.linspace(0.0, 1.0, 2001)
    assert np.all(np.diff(phi(s)) >= 0)
    assert phi(np.array([0.0]))[0] == 0.0


def test_porous_primitive_matches_quadrature():
    spec, energy = Saturation.power(2.0), EnergyDensity("porous", 2.0)
    phi = diffusion_primitive(spec, energy)
    # Phi'(s) = 2 s (1 - s)^2  ->  Phi(s) = s^2 - 4 s^3 / 3 + s^4 / 2
    s = np.linspace(0.0, 1.0, 11)
    assert np.allclose(phi(s), s ** 2 - 4 * s ** 3 / 3 + s ** 4 / 2, atol=1e-9)


# potentials and convolution ------------------------------------------------------------

def test_convolve_zero_kernel():
    g = unit_grid(32)
    rho = DensityField(g, np.linspace(0.1, 0.9, 32))
    assert np.all(convolve(rho, PotentialSpec()).values == 0.0)


def test_convolve_quadratic_kernel_center_value_second_order():
    errors = []
    for n in (33, 65, 129):
        g = unit_grid(n)
        w = convolve(const_field(g, 1.0), Potential.quadratic()).values
        errors.append(abs(w[n // 2] - 1.0 / 24.0))
    assert errors[-1] < 1e-4
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.1)


def test_convolve_point_mass_sifts_kernel():
    g = unit_grid(16)
    j = 5
    values = np.zeros(16)
    values[j] = 1.0 / g.cell_volume
    w = convolve(DensityField(g, values), Potential.quadratic()).values
    x = g.centers[0]
    assert np.allclose(w, 0.5 * (x - x[j]) ** 2, atol=1e-14)


def test_convolve_point_mass_2d():
    g = Grid.uniform(0.0, 1.0, 8, dim=2)
    values = np.zeros(g.shape)
    values[2, 5] = 1.0 / g.cell_volume
    w = convolve(DensityField(g, values), Potential.quadratic()).values
    x, y = g.centers
    assert np.allclose(w, 0.5 * ((x - x[2, 5]) ** 2 + (y - y[2, 5]) ** 2), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 31 - 1))
def test_convolve_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    g = unit_grid(24)
    r1, r2 = rng.uniform(0, 1, 24), rng.uniform(0, 1, 24)
    W = Potential.quadratic()
    lhs = convolve(DensityField(g, a * r1 + b * r2), W).values
    rhs = a * convolve(DensityField(g, r1), W).values + b * convolve(DensityField(g, r2), W).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_interaction_energy_symmetry(seed):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(-1.0, 1.0, 20)
    rho, eta = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
    W = Potential.quadratic()
    a = np.sum(rho * convolve(DensityField(g, eta), W).values) * g.cell_volume
    b = np.sum(eta * convolve(DensityField(g, rho), W).values) * g.cell_volume
    assert abs(a - b) <= 1e-10


def test_interaction_energy_matches_double_sum():
    rng = np.random.default_rng(3)
    g = unit_grid(12)
    rho = rng.uniform(0, 1, 12)
    x = g.centers[0]
    h = g.cell_volume
    double = 0.5 * sum(0.5 * (x[i] - x[j]) ** 2 * rho[i] * rho[j]
                       for i in range(12) for j in range(12)) * h * h
    pots = PotentialSpec(W=Potential.quadratic())
    f_total = free_energy(DensityField(g, rho), EnergyDensity("porous", 2.0), pots)
    f_local = free_energy(DensityField(g, rho), EnergyDensity("porous", 2.0), PotentialSpec())
    assert f_total - f_local == pytest.approx(double, abs=1e-14)


def test_big_lambda_quadratic():
    g = unit_grid(64)
    pots = PotentialSpec(V=Potential.quadratic(), W=Potential.quadratic())
    # |grad V| <= 1 on the cells, |grad W| <= 1 - h on the difference lattice
    assert pots.big_lambda(g) == pytest.approx(2.0 * max(g.centers[0].max(), 1 - g.h[0]),
                                               rel=1e-12)


def test_tabulated_kernel_must_cover_difference_set():
    g = unit_grid(8)
    W = Potential("tabulated", table=((0.0, 0.5), (0.0, 1.0)))
    with pytest.raises(ValueError):
        convolve(const_field(g, 0.5), W)


# free energy --------------------------------------------------------------------------

def test_free_energy_uniform_boltzmann():
    g = unit_grid(16)
    F = free_energy(const_field(g, 0.5), EnergyDensity("boltzmann"), PotentialSpec())
    assert F == pytest.approx(0.5 * (math.log(0.5) - 1.0), abs=1e-14)


def test_free_energy_empty_state():
    g = unit_grid(16)
    pots = PotentialSpec(V=Potential.quadratic(), W=Potential.quadratic())
    assert free_energy(const_field(g, 0.0), EnergyDensity("boltzmann"), pots) == 0.0


def test_free_energy_interaction_second_order():
    errs = []
    for n in (32, 64, 128):
        g = unit_grid(n)
        F = free_energy(const_field(g, 1.0), EnergyDensity("boltzmann"),
                        PotentialSpec(W=Potential.quadratic()))
        errs.append(abs(F - (-1.0 + 1.0 / 24.0)))
    assert errs[-1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_free_energy_negative_density_raises():
    g = unit_grid(8)
    v = np.full(8, 0.5)
    v[3] = -0.1
    with pytest.raises(DomainError):
        free_energy(DensityField(g, v), EnergyDensity("boltzmann"), PotentialSpec())


def test_free_energy_translation_invariant():
    rng = np.random.default_rng(11)
    rho = rng.uniform(0, 1, 32)
    g1 = Grid.uniform(0.0, 1.0, 32)
    g2 = Grid.uniform(2.5, 3.5, 32)
    p1 = PotentialSpec(V=Potential.quadratic((0.3,)), W=Potential.quadratic())
    p2 = PotentialSpec(V=Potential.quadratic((2.8,)), W=Potential.quadratic())
    e = EnergyDensity("boltzmann")
    assert free_energy(DensityField(g1, rho), e, p1) == pytest.approx(
        free_energy(DensityField(g2, rho), e, p2), abs=1e-12)


# dissipation ---------------------------------------------------------------------------

def test_dissipation_vanishes_for_constant_free_state():
    g = unit_grid(16)
    assert dissipation(const_field(g, 0.3), EnergyDensity("boltzmann"), PotentialSpec(),
                       Saturation.power(2.0)) == 0.0


def test_dissipation_vanishes_at_saturation():
    g = unit_grid(16)
    pots = PotentialSpec(V=Potential.quadratic(), W=Potential.quadratic())
    assert dissipation(const_field(g, 1.0), EnergyDensity("boltzmann"), pots,
                       Saturation.power(2.0)) == 0.0


def test_dissipation_constant_state_in_confinement():
    rho_bar = 0.4
    spec = Saturation.power(2.0)
    mobility = rho_bar * spec.sigma(rho_bar)
    exact = mobility / 3.0
    pots = PotentialSpec(V=Potential.quadratic())
    errs = []
    for n in (32, 64, 128, 256):
        g = unit_grid(n)
        D = dissipation(const_field(g, rho_bar), EnergyDensity("boltzmann"), pots, spec)
        errs.append(abs(D - exact))
    # zero-flux boundary faces drop a half cell at x = 1, so the error is first order
    for e, n in zip(errs, (32, 64, 128, 256)):
        assert e <= mobility * (1.0 / n)
    assert errs[-1] < errs[0] / 6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(["boltzmann", "porous"]))
def test_dissipation_nonnegative(seed, kind):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(-1.0, 1.0, 24)
    rho = rng.uniform(0, 1, 24)
    rho[rng.integers(0, 24, 3)] = 0.0
    rho[rng.integers(0, 24, 3)] = 1.0
    pots = PotentialSpec(V=Potential.quadratic(), W=Potential.quadratic())
    energy = EnergyDensity(kind, 2.0) if kind == "porous" else EnergyDensity(kind)
    assert dissipation(DensityField(g, rho), energy, pots, Saturation.power(2.0)) >= 0.0
