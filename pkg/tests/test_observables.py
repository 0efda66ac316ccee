import math

import numpy as np
import pytest

from gradphi.dynamics import Interface, mode_profile, tent_profile
from gradphi.observables import (
    SpectralProfile,
    area_between,
    detilt,
    fourier_stat,
    fourier_stat_rows,
    heat_mean_solution,
    spectral_gap,
    sup_gradient,
    sup_height,
)
from gradphi.resampler import build_conditional, mean


def test_spectral_gap_values():
    assert spectral_gap(2) == pytest.approx(1.0)
    assert spectral_gap(4) == pytest.approx(1 - math.sqrt(2) / 2)
    assert spectral_gap(1000) == pytest.approx(math.pi**2 / 2e6, rel=1e-3)
    with pytest.raises(ValueError):
        spectral_gap(1)


def test_eigenvalues_strictly_increasing():
    prof = SpectralProfile.build(12)
    assert prof.eigenvalues[0] == 0.0
    assert np.all(np.diff(prof.eigenvalues) > 0)


def test_basis_orthonormal():
    prof = SpectralProfile.build(16)
    gram = prof.basis @ prof.basis.T
    assert np.max(np.abs(gram - np.eye(15))) <= 1e-12


def test_fourier_stat_examples():
    assert fourier_stat(Interface(np.zeros(7))) == 0.0
    x = Interface(np.array([0.0, 1.0, 1.0, 1.0, 0.0]))
    assert fourier_stat(x, 1) == pytest.approx(1 + math.sqrt(2))
    # orthogonality: statistic of its own mode profile sums sin^2 = N/2
    assert fourier_stat(mode_profile(10, 3), 3) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        fourier_stat(x, 4)
    with pytest.raises(ValueError):
        fourier_stat(x, 0)


def test_fourier_rows_matches_scalar():
    rows = np.vstack([tent_profile(8).heights, mode_profile(8, 2).heights])
    vals = fourier_stat_rows(rows)
    assert vals[0] == pytest.approx(fourier_stat(tent_profile(8)))
    assert vals[1] == pytest.approx(fourier_stat(mode_profile(8, 2)))


def test_heat_solution_identity_at_zero():
    x0 = tent_profile(8)
    assert np.allclose(heat_mean_solution(x0, 0.0), x0.heights, atol=1e-12)


def test_heat_solution_single_mode_decay():
    x0 = mode_profile(8, 1)
    for t in (0.7, 3.0, 12.5):
        expected = x0.heights * math.exp(-spectral_gap(8) * t)
        assert np.allclose(heat_mean_solution(x0, t), expected, atol=1e-13)


def test_heat_solution_semigroup():
    x0 = tent_profile(10)
    v1 = heat_mean_solution(Interface(heat_mean_solution(x0, 1.2)), 0.8)
    v2 = heat_mean_solution(x0, 2.0)
    assert np.max(np.abs(v1 - v2)) <= 1e-10


def test_heat_solution_long_time_reaches_tilt_profile():
    h = np.concatenate([[0.0], np.full(7, 9.0), [8.0]])
    x0 = Interface(h, tilt=1.0)
    v = heat_mean_solution(x0, 1e6 / spectral_gap(8))
    assert np.max(np.abs(v - np.arange(9.0))) <= 1e-6 * np.linalg.norm(h)


def test_generator_identity_via_quadrature(gaussian, sos, power15):
    # the conditional mean is the neighbor midpoint, so one update moves the
    # mean height by half the discrete Laplacian, for every potential
    for pot in (gaussian, sos, power15):
        b, c = -1.3, 2.1
        dens = build_conditional(pot, b, c)
        assert mean(dens) == pytest.approx((b + c) / 2, abs=1e-10)


def test_area_and_sup_norms():
    a = Interface(np.concatenate([[0.0], np.full(7, 8.0), [0.0]]))
    b = Interface(np.concatenate([[0.0], np.full(7, -8.0), [0.0]]))
    assert area_between(a, a) == 0.0
    assert area_between(a, b) == pytest.approx(2 * 8 * (8 - 1))
    assert sup_height(a) == 8.0
    assert sup_gradient(a) == 8.0
    with pytest.raises(ValueError):
        area_between(a, Interface(np.zeros(5)))


def test_detilt_removes_linear_profile():
    x = Interface(2.0 * np.arange(9.0), tilt=2.0)
    assert np.allclose(detilt(x), 0.0)
