import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmtlab import ValidationError
from gmtlab.measures import (
    CantorSpec,
    DiscreteMeasure,
    FrostmanReport,
    fit_line,
    make_cantor_measure,
    point_mass,
    product_measure,
    pushforward_affine,
    uniform_grid_measure,
)
from gmtlab.spectral import (
    annulus_volume,
    fourier_transform,
    lemma_decay_report,
    lemma_shell_integral,
    sample_annulus,
    shell_energy,
    shell_energy_profile,
    shell_rng,
    sobolev_dimension_estimate,
)


def cantor_closed_form(xi, depth):
    # product of digit transforms (1 + e^{-2 pi i xi 2/3^i}) / 2
    out = np.ones_like(xi, dtype=complex)
    for i in range(1, depth + 1):
        out *= (1 + np.exp(-2j * np.pi * xi * 2 * 3.0**-i)) / 2
    return out


def dirichlet(xi, P):
    # transform of equal weights at (k + 1/2)/P, k < P
    z = np.exp(-2j * np.pi * xi / P)
    return np.exp(-1j * np.pi * xi / P) * (1 - z**P) / (P * (1 - z))


def test_cantor_transform_matches_product_formula():
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, 9))
    xi = np.linspace(0.3, 300.7, 157)[:, None]
    want = cantor_closed_form(xi[:, 0], 9)
    np.testing.assert_allclose(fourier_transform(mu, xi, method="direct"), want, atol=1e-12)
    np.testing.assert_allclose(fourier_transform(mu, xi, method="factored"), want, atol=1e-12)


def test_grid_transform_matches_dirichlet_kernel():
    mu = uniform_grid_measure(1, 64)
    xi = np.array([0.37, 1.5, 7.25, 63.1, 100.9])
    np.testing.assert_allclose(fourier_transform(mu, xi[:, None], method="direct"), dirichlet(xi, 64), atol=1e-13)


def test_factored_equals_direct_on_products():
    a = make_cantor_measure(CantorSpec(2, 1 / 3, 5))
    b = uniform_grid_measure(1, 16)
    mu = pushforward_affine(product_measure(a, b), [[1.0, 0.5], [-0.3, 2.0]], [0.1, -0.7])
    xi = np.random.default_rng(1).uniform(-40, 40, size=(200, 2))
    np.testing.assert_allclose(
        fourier_transform(mu, xi, method="factored"), fourier_transform(mu, xi, method="direct"), atol=1e-12
    )


def test_weighted_transform_and_errors():
    mu = uniform_grid_measure(1, 8)
    g = np.arange(8.0)
    xi = np.array([1.3])
    want = np.sum(mu.weights * g * np.exp(-2j * np.pi * 1.3 * mu.points[:, 0]))
    assert fourier_transform(mu, xi, g) == pytest.approx(want, abs=1e-14)
    with pytest.raises(ValidationError):
        fourier_transform(mu, xi, g, method="factored")
    with pytest.raises(ValidationError):
        fourier_transform(mu, np.ones(2))
    with pytest.raises(ValidationError):
        fourier_transform(mu, xi, np.ones(3))


def test_transform_is_thread_independent():
    mu = uniform_grid_measure(2, 200)
    xi = np.random.default_rng(2).uniform(-30, 30, size=(300, 2))
    a = fourier_transform(mu, xi, method="direct", threads=1)
    b = fourier_transform(mu, xi, method="direct", threads=4)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 2)), min_size=1, max_size=15),
    st.floats(-50, 50),
    st.floats(-3, 3),
)
def test_transform_basic_properties(atoms, xi, shift):
    pts = np.array([[p] for p, _ in atoms])
    w = np.array([m for _, m in atoms])
    mu = DiscreteMeasure(pts, w)
    mass = w.sum()
    f = fourier_transform(mu, [xi])
    assert abs(f) <= mass * (1 + 1e-12)
    assert fourier_transform(mu, [0.0]) == pytest.approx(mass)
    assert fourier_transform(mu, [-xi]) == pytest.approx(np.conj(f), abs=1e-9 * mass)
    # translation changes only the phase
    moved = pushforward_affine(mu, [[1.0]], [shift])
    assert abs(fourier_transform(moved, [xi])) == pytest.approx(abs(f), abs=1e-9 * mass)


def test_annulus_sampler():
    rng = np.random.default_rng(0)
    xi = sample_annulus(rng, 2, 4.0, 8.0, 40000)
    r = np.linalg.norm(xi, axis=1)
    assert r.min() >= 4.0 and r.max() <= 8.0
    # E|xi| for the uniform planar annulus [R, 2R] is 14R/9
    assert r.mean() == pytest.approx(14 * 4.0 / 9, rel=0.01)
    assert annulus_volume(2, 4.0, 8.0) == pytest.approx(math.pi * 48)


def test_shell_rng_streams_are_independent_of_order():
    a = shell_rng(3, 5).random(4)
    shell_rng(3, 4).random(100)
    assert shell_rng(3, 5).random(4).tolist() == a.tolist()
    assert shell_rng(3, 6).random(4).tolist() != a.tolist()


def test_point_mass_shell_energy_is_annulus_volume():
    e, s = shell_energy(point_mass([0.2]), 3, n_samples=100)
    assert e == pytest.approx(annulus_volume(1, 8, 16))
    assert s == pytest.approx(0.0, abs=1e-12)
    e0, _ = shell_energy(point_mass([0.0]), 0, n_samples=100)
    assert e0 == pytest.approx(2.0)


def test_point_mass_sobolev_dimension_is_zero():
    est = sobolev_dimension_estimate(point_mass([0.0]), range(0, 8), n_samples=64)
    assert est.sigma_max == pytest.approx(0.0, abs=1e-12)
    assert not est.low_confidence


def test_lebesgue_grid_sobolev_dimension():
    # |Dirichlet kernel|^2 averages like |xi|^-2, so shell energies fall like 2^-j
    est = sobolev_dimension_estimate(uniform_grid_measure(1, 4096), range(2, 8), n_samples=4096)
    assert est.sigma_max == pytest.approx(2.0, abs=0.2)
    assert est.converges(1.0)


def test_cantor_sobolev_dimension_and_confidence_flag():
    est = sobolev_dimension_estimate(make_cantor_measure(CantorSpec(2, 1 / 3, 12)), range(2, 14), n_samples=8192)
    assert est.sigma_max >= 0.5
    # log-periodic wiggles of the shell averages spoil a straight-line fit
    assert est.low_confidence


def test_point_mass_transform_has_unit_modulus():
    mu = point_mass([0.3, -1.2])
    xi = np.random.default_rng(0).uniform(-100, 100, size=(50, 2))
    np.testing.assert_allclose(np.abs(fourier_transform(mu, xi)), 1.0, atol=1e-15)
    assert fourier_transform(mu, [0.0, 0.0]) == 1.0


def test_cantor_shell_energy_against_quadrature():
    # deterministic oracle: Gauss-Legendre over the two half-shells of the closed form
    depth, j = 12, 5
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, depth))
    nodes, weights = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(2.0**j, 2.0 ** (j + 1), 129)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(weights * np.abs(cantor_closed_form(x, depth)) ** 2)
    oracle = 2 * total
    e, s = shell_energy(mu, j, n_samples=20000, seed=4)
    assert abs(e - oracle) <= 4 * s


def test_window_is_enforced():
    mu = uniform_grid_measure(1, 64)  # limit 0.1 * 64 = 6.4
    with pytest.raises(ValidationError):
        shell_energy_profile(mu, [1, 2, 3])
    with pytest.raises(ValidationError):
        sobolev_dimension_estimate(mu, [0, 1])


def test_profile_is_deterministic_and_serializable():
    mu = make_cantor_measure(CantorSpec(2, 1 / 3, 10))
    a = shell_energy_profile(mu, range(2, 6), n_samples=512, seed=9)
    b = shell_energy_profile(mu, range(2, 6), n_samples=512, seed=9)
    assert a.to_dict() == b.to_dict()
    assert [r["j"] for r in a.to_rows()] == [2, 3, 4, 5]


def test_lemma_integral_of_point_mass():
    lam = uniform_grid_measure(1, 32)
    v, s = lemma_shell_integral(point_mass([0.3, 0.1]), lam, 1, 8.0, n_samples=50)
    assert v == pytest.approx(annulus_volume(1, 8, 16))
    assert s == pytest.approx(0.0, abs=1e-12)


def test_lemma_integral_validation():
    mu = uniform_grid_measure(2, 32)
    with pytest.raises(ValidationError):
        lemma_shell_integral(mu, uniform_grid_measure(2, 4), 1, 2.0)
    with pytest.raises(ValidationError):
        lemma_shell_integral(mu, uniform_grid_measure(1, 4), 1, 4.0)  # 2R beyond 0.1 * 32


def _report(exponent):
    fit = fit_line([0, 1, 2], [0, exponent, 2 * exponent])
    return FrostmanReport(exponent, 1.0, fit, (1.0, 0.5, 0.25), (1.0, 1.0, 1.0))


def test_lemma_report_verdict_logic():
    # a point mass has constant shell integrals growing like R: slope 1 in log2
    mu = point_mass([0.0, 0.0])
    lam = uniform_grid_measure(1, 16)
    rep = lemma_decay_report(mu, lam, 1, range(1, 6), _report(0.0), _report(1.0), n_samples=32)
    assert rep.fit.slope == pytest.approx(1.0)
    assert rep.predicted_exponent == pytest.approx(1.0)
    assert rep.passed
    strict = lemma_decay_report(mu, lam, 1, range(1, 6), _report(1.0), _report(1.0), n_samples=32)
    assert not strict.passed
