from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satdiff import (ContractError, DensityField, Grid, ShapeError, Trajectory, divergence,
                     face_gradient, l1_distance, sup_distance)


def test_grid_geometry():
    g = Grid.uniform(-1.0, 3.0, 8)
    assert g.h == (0.5,)
    assert np.allclose(g.centers[0], -1.0 + 0.5 * (np.arange(8) + 0.5))
    assert g.volume == pytest.approx(4.0)
    g2 = Grid(((0.0, 1.0), (0.0, 2.0)), (4, 8))
    assert g2.shape == (4, 8) and g2.size == 32 and g2.cell_volume == pytest.approx(0.0625)


@pytest.mark.parametrize("cells", [(3,), (0,)])
def test_grid_rejects_too_few_cells(cells):
    with pytest.raises(ValueError):
        Grid(((0.0, 1.0),), cells)


def test_grid_round_trip():
    g = Grid(((0.0, 1.0), (-1.0, 1.0)), (8, 16))
    assert Grid.from_dict(g.to_dict()) == g


def test_density_field_rejects_non_finite():
    g = Grid.uniform(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        DensityField(g, np.array([0.1, np.nan, 0.2, 0.3]))


def test_face_gradient_constant_is_zero():
    g = Grid.uniform(0.0, 1.0, 10)
    (grad,) = face_gradient(g, np.full(10, 0.7))
    assert grad.shape == (11,) and np.all(grad == 0.0)


def test_face_gradient_linear_exact():
    g = Grid.uniform(0.0, 1.0, 10)
    (grad,) = face_gradient(g, g.centers[0])
    assert np.allclose(grad[1:-1], 1.0, rtol=0, atol=1e-14)
    assert grad[0] == 0.0 and grad[-1] == 0.0


def test_face_gradient_2d_boundaries_zero():
    g = Grid.uniform(0.0, 1.0, 6, dim=2)
    rng = np.random.default_rng(0)
    gx, gy = face_gradient(g, rng.uniform(0, 1, g.shape))
    assert gx.shape == (7, 6) and gy.shape == (6, 7)
    assert np.all(gx[[0, -1], :] == 0) and np.all(gy[:, [0, -1]] == 0)


def test_divergence_zero():
    g = Grid.uniform(0.0, 1.0, 5)
    assert np.all(divergence(g, [np.zeros(6)]) == 0.0)


def test_divergence_four_cell_stencil():
    g = Grid.uniform(0.0, 1.0, 4)
    h = g.h[0]
    out = divergence(g, [np.array([0.0, 0.0, 1.0, 0.0, 0.0])])
    assert np.allclose(out, [0.0, 1.0 / h, -1.0 / h, 0.0], rtol=0, atol=1e-15)


def test_divergence_rejects_boundary_flux():
    g = Grid.uniform(0.0, 1.0, 4)
    with pytest.raises(ContractError):
        divergence(g, [np.array([0.1, 0.0, 1.0, 0.0, 0.0])])


def test_divergence_shape_mismatch():
    g = Grid.uniform(0.0, 1.0, 4)
    with pytest.raises(ShapeError):
        divergence(g, [np.zeros(4)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1, 2]))
def test_discrete_gauss_identity(seed, dim):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(0.0, 1.0, 12, dim=dim)
    f = rng.uniform(-1, 1, g.shape)
    total = divergence(g, face_gradient(g, f)).sum() * g.cell_volume
    assert abs(total) <= 1e-13


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_divergence_telescopes(seed):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(0.0, 1.0, 16)
    F = np.concatenate([[0.0], rng.uniform(-1, 1, 15), [0.0]])
    assert abs(divergence(g, [F]).sum() * g.cell_volume) <= 1e-13


def test_distances_basic():
    g = Grid.uniform(0.0, 1.0, 8)
    a = DensityField(g, np.ones(8))
    b = DensityField(g, np.zeros(8))
    assert l1_distance(a, a) == 0.0 and sup_distance(a, a) == 0.0
    assert l1_distance(a, b) == pytest.approx(1.0, abs=1e-15)
    c = np.full(8, 0.3)
    d = c.copy()
    d[4] += 0.25
    assert sup_distance(DensityField(g, c), DensityField(g, d)) == pytest.approx(0.25, abs=1e-15)


def test_distances_match_brute_force_oracle():
    rng = np.random.default_rng(42)
    g = Grid.uniform(0.0, 2.0, 37)
    a, b = rng.uniform(0, 1, 37), rng.uniform(0, 1, 37)
    fa, fb = DensityField(g, a), DensityField(g, b)
    h = 2.0 / 37
    total = 0.0
    for i in reversed(range(37)):
        total += abs(a[i] - b[i]) * h
    assert l1_distance(fa, fb) == pytest.approx(total, abs=1e-13)
    best = 0.0
    for i in range(37):
        best = max(best, abs(a[i] - b[i]))
    assert sup_distance(fa, fb) == best


def test_distances_grid_mismatch():
    a = DensityField(Grid.uniform(0.0, 1.0, 8), np.zeros(8))
    b = DensityField(Grid.uniform(0.0, 2.0, 8), np.zeros(8))
    with pytest.raises(ShapeError):
        l1_distance(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_distances_are_metrics(seed):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(0.0, 1.0, 10)
    a, b, c = (DensityField(g, rng.uniform(0, 1, 10)) for _ in range(3))
    for dist in (l1_distance, sup_distance):
        assert dist(a, b) == pytest.approx(dist(b, a), abs=1e-15)
        assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-12


def test_trajectory_invariants():
    g = Grid.uniform(0.0, 1.0, 4)
    data = np.full((3, 4), 0.5)
    traj = Trajectory(g, np.array([0.0, 0.5, 1.0]), data)
    assert len(traj) == 3 and np.allclose(traj.masses, 0.5)
    assert traj.uniform_spacing
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 0.5, 0.5]), data)
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 0.5, 1.0]), np.zeros((3, 5)))
