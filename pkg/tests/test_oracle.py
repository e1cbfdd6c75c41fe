"""Reference-propagator checks.

The spectral propagator is the normative standard for free packet motion;
everything else in the package is measured against it.  These tests pin its
own invariants first (norm, composition, reversibility, wraparound) and then
freeze the numbers the closed form must reproduce.
"""

import math

import numpy as np
import pytest

from mzsim.oracle import (
    DEFAULT_DX,
    DEFAULT_N,
    SampledWavefunction,
    compare_closed_form,
    gaussian_profile_1d,
    spectral_evolve,
    spot_check_2d,
    wraparound_mass,
)
from mzsim.packets import GaussianPacket, PhysicalConstants, PreconditionError

SIGMA = 50.0
K = 0.4


def _moments(wf):
    d = np.abs(wf.values) ** 2 * wf.dx
    x = wf.x
    c = float(np.sum(x * d))
    w = float(np.sqrt(np.sum((x - c) ** 2 * d)))
    return c, w


def test_profile_is_normalized():
    wf = gaussian_profile_1d(SIGMA, K)
    assert wf.norm() == pytest.approx(1.0, abs=1e-12)


def test_evolution_preserves_norm():
    wf = gaussian_profile_1d(SIGMA, K)
    for dt in (137.0, 1000.0, 8000.0):
        assert spectral_evolve(wf, dt).norm() == pytest.approx(1.0, abs=1e-12)


def test_evolution_composes():
    wf = gaussian_profile_1d(SIGMA, K)
    once = spectral_evolve(wf, 3000.0)
    twice = spectral_evolve(spectral_evolve(wf, 1250.0), 1750.0)
    assert np.max(np.abs(once.values - twice.values)) < 1e-12


def test_forward_then_backward_is_identity():
    # negative dt runs the advanced equation; +dt then -dt must cancel
    wf = gaussian_profile_1d(SIGMA, K)
    back = spectral_evolve(spectral_evolve(wf, 4000.0), -4000.0)
    assert np.max(np.abs(back.values - wf.values)) < 1e-12


def test_wraparound_stays_negligible_over_longest_flight():
    wf = spectral_evolve(gaussian_profile_1d(SIGMA, K), 8000.0)
    assert wraparound_mass(wf) < 1e-12


def test_moments_match_dispersion_law():
    # frozen from this propagator; the closed form is held to 1e-6 relative
    expected = {
        1000.0: (400.0, 50.99019513592786),
        5000.0: (2000.0, 70.7106781186551),
        8000.0: (3200.0, 94.33981132056648),
    }
    for dt, (centroid, width) in expected.items():
        c, w = _moments(spectral_evolve(gaussian_profile_1d(SIGMA, K), dt))
        assert c == pytest.approx(centroid, abs=1e-9)
        assert w == pytest.approx(width, rel=1e-12)
        analytic = SIGMA * math.sqrt(1.0 + (dt / (2.0 * SIGMA**2)) ** 2)
        assert w == pytest.approx(analytic, rel=1e-6)


def test_closed_form_matches_oracle_along_motion_axis():
    p = GaussianPacket(
        amplitude=1.0 + 0.0j, birth_time=0.0, origin=(0.0, 0.0), direction=(1.0, 0.0)
    )
    for dt in (500.0, 1000.0, 2000.0, 8000.0):
        report = compare_closed_form(p, dt)
        assert report.max_abs_error < 1e-12
        assert report.rms_error < 1e-8  # stated gate; observed ~1e-16
        assert report.norm_drift < 1e-9
        assert report.wraparound < 1e-12


def test_closed_form_holds_for_shifted_birth_and_phase():
    p = GaussianPacket(
        amplitude=0.5 - 0.5j,
        birth_time=250.0,
        origin=(-30.0, 12.0),
        direction=(0.0, 1.0),
    )
    report = compare_closed_form(p, 1500.0)
    assert report.max_abs_error < 1e-12


def test_closed_form_rejects_negative_dt():
    p = GaussianPacket(
        amplitude=1.0 + 0.0j, birth_time=0.0, origin=(0.0, 0.0), direction=(1.0, 0.0)
    )
    with pytest.raises(PreconditionError):
        compare_closed_form(p, -1.0)


def test_two_dimensional_oblique_spot_check():
    # full 2D FFT once, with a diagonal direction so the axis decomposition
    # inside the closed form is itself exercised
    s = 1.0 / math.sqrt(2.0)
    p = GaussianPacket(
        amplitude=1.0 + 0.0j,
        birth_time=0.0,
        origin=(0.0, 0.0),
        direction=(s, s),
        constants=PhysicalConstants(wavenumber=K, sigma0=SIGMA),
    )
    assert spot_check_2d(p, 800.0) < 1e-10
    shifted = GaussianPacket(
        amplitude=1.0 + 0.0j, birth_time=0.0, origin=(5.0, 0.0), direction=(s, s)
    )
    with pytest.raises(PreconditionError):
        spot_check_2d(shifted, 100.0)


def test_value_at_requires_a_grid_point():
    wf = gaussian_profile_1d(SIGMA, K, n=64, dx=0.5, x_min=-16.0)
    assert wf.value_at(-16.0) == wf.values[0]
    with pytest.raises(PreconditionError):
        wf.value_at(-16.3)


def test_default_grid_covers_the_standard_flights():
    # born at 0, the farthest detector sits 3200 downstream; 20 sigma of
    # clearance keeps the periodic images out of play
    x_max = -2048.0 + DEFAULT_DX * (DEFAULT_N - 1)
    final_width = SIGMA * math.sqrt(1.0 + (8000.0 / 5000.0) ** 2)
    assert x_max - 3200.0 > 20.0 * final_width
    assert -(-2048.0) > 20.0 * final_width


def test_sampled_wavefunction_validation():
    with pytest.raises(ValueError):
        SampledWavefunction(x_min=0.0, dx=-1.0, values=np.zeros(4, complex))
    with pytest.raises(ValueError):
        SampledWavefunction(x_min=0.0, dx=1.0, values=np.zeros((2, 2), complex))
