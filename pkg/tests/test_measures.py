import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmtlab import BudgetExceededError, ValidationError
from gmtlab.measures import (
    CantorSpec,
    DiscreteMeasure,
    ProbePolicy,
    ball_masses,
    estimate_frostman_exponent,
    fit_line,
    make_cantor_measure,
    measure_from_dict,
    merge_duplicate_atoms,
    point_mass,
    product_measure,
    pushforward_affine,
    read_measure,
    total_mass,
    uniform_grid_measure,
    write_measure,
)

LOG2_LOG3 = math.log(2) / math.log(3)


def test_cantor_atoms_are_ternary_left_endpoints():
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, 5))
    # every left endpoint is sum_i c_i 3^-i with digits c_i in {0, 2}
    digits = np.array(np.meshgrid(*[[0, 2]] * 5, indexing="ij")).reshape(5, -1).T
    expected = np.sort(digits @ (3.0 ** -np.arange(1, 6)))
    np.testing.assert_allclose(np.sort(mu.points[:, 0]), expected, atol=1e-15)
    assert mu.n_atoms == 32
    assert total_mass(mu) == pytest.approx(1.0, abs=1e-15)
    assert mu.resolution == pytest.approx(3.0**-5)


@pytest.mark.parametrize("depth, atoms", [(1, [0, 2 / 3]), (2, [0, 2 / 9, 2 / 3, 8 / 9])])
def test_first_cantor_steps(depth, atoms):
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, depth))
    np.testing.assert_allclose(mu.points[:, 0], atoms, atol=1e-15)
    np.testing.assert_allclose(mu.weights, 2.0**-depth)


def test_cantor_spec_validation():
    with pytest.raises(ValidationError):
        CantorSpec(2, 0.6, 3)
    with pytest.raises(ValidationError):
        CantorSpec(1, 0.3, 3)
    with pytest.raises(ValidationError):
        CantorSpec(2, 1 / 3, 0)
    with pytest.raises(ValidationError):
        CantorSpec(2, 1 / 3, 3, offsets=(0.0, 0.9))
    assert CantorSpec(4, 0.2, 3).similarity_dimension == pytest.approx(math.log(4) / math.log(5))


def test_budget_overflow():
    with pytest.raises(BudgetExceededError):
        make_cantor_measure(CantorSpec(2, 1 / 3, 12), budget=1000)
    with pytest.raises(BudgetExceededError):
        uniform_grid_measure(3, 100, budget=10**5)


@pytest.mark.parametrize(
    "points, weights",
    [
        (np.array([[np.nan]]), np.array([1.0])),
        (np.array([[0.0]]), np.array([-1.0])),
        (np.array([[0.0], [1.0]]), np.array([0.0, 0.0])),
        (np.zeros((0, 1)), np.zeros(0)),
        (np.zeros((2, 1)), np.ones(3)),
    ],
)
def test_invalid_measures_rejected(points, weights):
    with pytest.raises(ValidationError):
        DiscreteMeasure(points, weights)


def test_diameter_hint_must_cover_support():
    with pytest.raises(ValidationError):
        DiscreteMeasure(np.array([[0.0], [10.0]]), np.ones(2), diameter_hint=1.0)


def test_measure_arrays_are_read_only():
    mu = uniform_grid_measure(1, 8)
    with pytest.raises(ValueError):
        mu.points[0, 0] = 3.0


def test_small_grids():
    assert uniform_grid_measure(1, 2).points[:, 0].tolist() == [0.25, 0.75]
    g = uniform_grid_measure(2, 2)
    assert sorted(map(tuple, g.points.tolist())) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    assert g.weights.tolist() == [0.25] * 4


def test_grid_measure_is_cell_centered():
    mu = uniform_grid_measure(2, 4)
    assert mu.n_atoms == 16
    assert set(np.unique(mu.points).tolist()) == {0.125, 0.375, 0.625, 0.875}
    assert total_mass(mu) == pytest.approx(1.0)


def test_product_measure_weights_and_order():
    a = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.25, 0.75]))
    b = DiscreteMeasure(np.array([[5.0], [6.0], [7.0]]), np.array([0.5, 0.25, 0.25]))
    p = product_measure(a, b)
    assert p.points.tolist()[:3] == [[0.0, 5.0], [0.0, 6.0], [0.0, 7.0]]
    np.testing.assert_allclose(p.weights, np.outer(a.weights, b.weights).ravel())


def test_product_with_point_mass_prepends_coordinate():
    mu = uniform_grid_measure(1, 4)
    p = product_measure(point_mass([0.0]), mu)
    np.testing.assert_array_equal(p.points[:, 0], 0.0)
    np.testing.assert_array_equal(p.points[:, 1], mu.points[:, 0])
    np.testing.assert_array_equal(p.weights, mu.weights)


def test_projection_of_product_recovers_first_factor():
    a = make_cantor_measure(CantorSpec(2, 1 / 3, 3))
    b = uniform_grid_measure(1, 5)
    first = merge_duplicate_atoms(pushforward_affine(product_measure(a, b), [[1.0, 0.0]]))
    np.testing.assert_allclose(np.sort(first.points[:, 0]), np.sort(a.points[:, 0]))
    np.testing.assert_allclose(first.weights, a.weights)


def test_pushforward_identity():
    mu = uniform_grid_measure(2, 3)
    nu = pushforward_affine(mu, np.eye(2))
    np.testing.assert_array_equal(nu.points, mu.points)
    np.testing.assert_array_equal(nu.weights, mu.weights)


def test_pushforward_moves_atoms_and_keeps_weights():
    mu = uniform_grid_measure(2, 3)
    A = np.array([[2.0, 0.0], [1.0, 1.0]])
    nu = pushforward_affine(mu, A, [1.0, -1.0])
    np.testing.assert_allclose(nu.points, mu.points @ A.T + [1.0, -1.0])
    np.testing.assert_array_equal(nu.weights, mu.weights)
    assert nu.resolution == pytest.approx(mu.resolution * np.linalg.norm(A, 2))


def test_merge_duplicates():
    mu = DiscreteMeasure(np.array([[0.0], [1.0], [0.0]]), np.array([0.2, 0.3, 0.5]))
    m = merge_duplicate_atoms(mu)
    assert m.n_atoms == 2
    assert dict(zip(m.points[:, 0].tolist(), m.weights.tolist())) == pytest.approx({0.0: 0.7, 1.0: 0.3})


def test_ball_masses_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.random((300, 2))
    w = rng.random(300)
    centers = rng.random((20, 2))
    got = ball_masses(pts, w, centers, 0.2)
    d = np.linalg.norm(pts[None] - centers[:, None], axis=2)
    np.testing.assert_allclose(got, (w[None] * (d <= 0.2)).sum(axis=1))


def test_fit_line_exact():
    fit = fit_line([0, 1, 2, 3], [1, 3, 5, 7])
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(1.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_cantor_frostman_closed_form():
    # the closed ball of radius 3^-m around a left endpoint holds exactly 2^-m of the mass
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, 10))
    rep = estimate_frostman_exponent(mu, [3.0**-m for m in range(1, 8)])
    np.testing.assert_allclose(rep.max_masses, [2.0**-m for m in range(1, 8)], rtol=1e-12)
    assert rep.exponent == pytest.approx(LOG2_LOG3, abs=1e-9)
    assert rep.bound_holds()


def test_frostman_point_mass_is_zero():
    rep = estimate_frostman_exponent(point_mass([0.3, 0.4]), [0.5, 0.25, 0.125])
    assert rep.exponent == 0.0
    assert rep.constant == pytest.approx(1.0)


def test_frostman_radii_checks():
    mu = uniform_grid_measure(1, 64)
    with pytest.raises(ValidationError):
        estimate_frostman_exponent(mu, [0.25, 0.125])
    with pytest.raises(ValidationError):
        estimate_frostman_exponent(mu, [0.125, 0.25, 0.5])
    with pytest.raises(ValidationError):
        estimate_frostman_exponent(mu, [0.25, 0.1, 0.02])  # below twice the spacing


def test_probe_policy_random_centers_never_lower_the_maxima():
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, 8))
    radii = [3.0**-m for m in range(1, 5)]
    base = estimate_frostman_exponent(mu, radii, ProbePolicy(max_centers=64, seed=1))
    more = estimate_frostman_exponent(mu, radii, ProbePolicy(max_centers=64, n_random=200, seed=1))
    assert np.all(np.array(more.max_masses) >= np.array(base.max_masses))


def test_measure_file_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    mu = DiscreteMeasure(rng.standard_normal((50, 3)), rng.random(50), diameter_hint=10.0, resolution=1e-3)
    path = tmp_path / "m.json"
    write_measure(path, mu)
    back = read_measure(path)
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.weights, mu.weights)
    assert back.resolution == mu.resolution


def test_measure_file_rejects_nan(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"ambient_dim": 1, "points": [[NaN]], "weights": [1.0]}')
    with pytest.raises(ValidationError):
        read_measure(path)
    with pytest.raises(ValidationError):
        measure_from_dict(json.loads('{"points": [[0.0]]}'))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20),
    st.floats(-3, 3, allow_nan=False),
    st.floats(-5, 5, allow_nan=False),
)
def test_pushforward_preserves_mass(xs, a, b):
    mu = DiscreteMeasure(np.array(xs)[:, None], np.ones(len(xs)) / len(xs))
    nu = pushforward_affine(mu, [[a]], [b])
    assert total_mass(nu) == pytest.approx(total_mass(mu))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(1, 6))
def test_cantor_mass_and_count(branches, depth):
    spec = CantorSpec(branches, 1.0 / (branches + 1), depth)
    mu = make_cantor_measure(spec)
    assert mu.n_atoms == branches**depth
    assert total_mass(mu) == pytest.approx(1.0)
    assert mu.points.min() >= 0 and mu.points.max() <= 1
