from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmtlab import ValidationError
from gmtlab.measures import point_mass, uniform_grid_measure
from gmtlab.projections import (
    PlaneParam,
    PlaneSet,
    ProjectionParam,
    check_duality_identity,
    duality_bound,
    embed_section_measure,
    plane_as_projection,
    plane_point,
    project_point,
    slice_frostman_exponent,
    sphere_directions,
    t_map,
)


def test_projection_small_example():
    x = ProjectionParam([[1.0, 2.0]])  # l=1, n=3
    assert project_point(x, [1.0, 1.0, 1.0]).tolist() == [4.0]
    assert t_map(x, [3.0]).tolist() == [3.0, 6.0]


def test_zero_parameter_cases():
    x = ProjectionParam(np.zeros((2, 3)))
    p = np.arange(1.0, 6.0)
    assert project_point(x, p).tolist() == [1.0, 2.0]
    assert t_map(x, [4.0, 5.0]).tolist() == [0.0, 0.0, 0.0]
    assert check_duality_identity(x, [0.3, -0.7], p) == 0.0
    assert check_duality_identity(ProjectionParam(np.ones((2, 3))), [0.0, 0.0], p) == 0.0
    y = PlaneParam(np.zeros((3, 2)))
    assert plane_point(y, [0.2, 0.4]).tolist() == [0.2, 0.4, 0.0, 0.0]
    yi = PlaneParam([[1.5, 2.5], [7.0, 8.0], [9.0, 3.0]])
    assert project_point(plane_as_projection(4, 2, [0.0, 0.0]), yi.flatten()).tolist() == [1.5, 2.5]


def test_projection_matches_naive_loops():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((2, 3))
    p = rng.standard_normal(5)
    want = [0.0, 0.0]
    for j in range(3):
        for i in range(2):
            want[i] += X[i, j] * p[2 + j]
    want = [want[i] + p[i] for i in range(2)]
    np.testing.assert_allclose(project_point(ProjectionParam(X), p), want, rtol=1e-14)


def test_duality_identity_in_exact_arithmetic():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ell, m = rng.integers(1, 4, size=2)
        X = [[Fraction(int(v), 7) for v in row] for row in rng.integers(-20, 20, size=(ell, m))]
        xi = [Fraction(int(v), 3) for v in rng.integers(-20, 20, size=ell)]
        p = [Fraction(int(v), 5) for v in rng.integers(-20, 20, size=ell + m)]
        Px = [p[i] + sum(X[i][j] * p[ell + j] for j in range(m)) for i in range(ell)]
        Tx = [sum(X[i][j] * xi[i] for i in range(ell)) for j in range(m)]
        lhs = sum(a * b for a, b in zip(xi, Px))
        rhs = sum(a * b for a, b in zip(xi + Tx, p))
        assert lhs == rhs


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n - 1))), st.integers(0, 2**32 - 1))
def test_duality_residual_below_bound(n_ell, seed):
    n, ell = n_ell
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-3, 3)
    x = ProjectionParam(scale * rng.standard_normal((ell, n - ell)))
    xi = rng.standard_normal(ell) * 10.0 ** rng.uniform(-3, 3)
    p = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 3)
    assert check_duality_identity(x, xi, p) <= duality_bound(x, xi, p)


def test_projection_shape_errors():
    x = ProjectionParam(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        project_point(x, np.ones(4))
    with pytest.raises(ValidationError):
        t_map(x, np.ones(3))
    with pytest.raises(ValidationError):
        ProjectionParam(np.ones((2, 0)))
    with pytest.raises(ValidationError):
        ProjectionParam([[np.inf]])


def test_flatten_round_trips():
    rng = np.random.default_rng(0)
    x = ProjectionParam(rng.random((2, 3)))
    np.testing.assert_array_equal(ProjectionParam.from_flat(x.flatten(), 2).entries, x.entries)
    y = PlaneParam(rng.random((3, 2)))
    assert (y.d, y.k) == (4, 2)
    np.testing.assert_array_equal(PlaneParam.from_flat(y.flatten(), 4, 2).entries, y.entries)
    with pytest.raises(ValidationError):
        PlaneParam.from_flat(np.ones(5), 4, 2)


@pytest.mark.parametrize("d,k", [(2, 1), (3, 1), (3, 2), (4, 2)])
def test_plane_as_projection_matches_plane_point(d, k):
    rng = np.random.default_rng(d * 10 + k)
    for _ in range(50):
        y = PlaneParam(rng.standard_normal((k + 1, d - k)))
        x = rng.random(k)
        X = plane_as_projection(d, k, x)
        got = project_point(X, y.flatten())
        np.testing.assert_allclose(got, plane_point(y, x)[k:], atol=1e-12)
        # T_X xi = (x_1 xi, ..., x_k xi)
        xi = rng.standard_normal(d - k)
        np.testing.assert_allclose(t_map(X, xi), np.concatenate([xi_ * xi for xi_ in x]), atol=1e-15)


def test_plane_as_projection_rejects_x_outside_cube():
    with pytest.raises(ValidationError):
        plane_as_projection(2, 1, [1.5])
    with pytest.raises(ValidationError):
        plane_as_projection(3, 2, [0.5])


def test_plane_set_sections():
    mu = point_mass([1.0, 2.0])  # intercept 1, slope 2
    S = PlaneSet(2, 1, mu)
    assert S.sections([0.5]).tolist() == [[2.0]]
    with pytest.raises(ValidationError):
        PlaneSet(2, 1, point_mass([1.0, 2.0, 3.0]))


def test_embedding_matches_plane_as_projection():
    lam = uniform_grid_measure(2, 4)
    emb = embed_section_measure(lam, 3, 2)
    for x, row in zip(lam.points, emb.points):
        np.testing.assert_array_equal(row, plane_as_projection(3, 2, x).flatten())


def test_sphere_directions_are_unit():
    for ell in (1, 2, 3, 4):
        dirs = sphere_directions(ell, 12, n_random=5, seed=1)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_slice_exponent_of_point_is_zero():
    lam = point_mass([0.5])
    rep = slice_frostman_exponent(lam, 1, [0.5, 0.25, 0.125])
    assert rep.exponent == 0.0


@pytest.mark.parametrize("d,k,per_axis,radii", [(2, 1, 256, [2.0**-m for m in range(2, 6)]),
                                                (3, 2, 64, [2.0**-m for m in range(2, 5)])])
def test_slice_exponent_of_grid_embedding(d, k, per_axis, radii):
    lam = embed_section_measure(uniform_grid_measure(k, per_axis), d, k)
    rep = slice_frostman_exponent(lam, d - k, radii)
    assert rep.exponent == pytest.approx(k, abs=0.1)
    assert rep.worst_direction is not None


def test_slice_exponent_rejects_non_unit_directions():
    lam = uniform_grid_measure(1, 64)
    with pytest.raises(ValidationError):
        slice_frostman_exponent(lam, 1, [0.5, 0.25, 0.125], directions=[[2.0]])
