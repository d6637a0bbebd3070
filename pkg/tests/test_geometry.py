import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qepidemic.errors import ConfigurationError, FitDomainError, InfeasibleRateError
from qepidemic.geometry import (
    CommunityMap,
    ContactProfile,
    Site,
    coupling_from_overlap,
    gamma_matrix,
    gaussian_overlap,
    invert_sinc,
    site_infection_rate,
    sinc_rate,
)

# closed form, cross-checked against a 1000x1000 midpoint-rule quadrature
# (0.009852736505984129, relative difference 5.7e-7)
OVERLAP_RECT_SIGMA65 = 0.009852742156982248
# root of sinc^2(g - pi) = 0.5 on (0, pi], from a high-precision root finder
HALF_RATE_GAMMA = 1.75003527533828


def test_point_at_origin_has_unit_overlap():
    assert gaussian_overlap((3.0, 4.0, 3.0, 4.0), (3.0, 4.0), 10.0) == 1.0


def test_flat_gaussian():
    assert gaussian_overlap((-500, 200, 1000, 900), (0, 0), 1e9) == pytest.approx(1.0, abs=1e-6)


def test_rect_overlap_matches_quadrature_oracle():
    val = gaussian_overlap((100, 100, 200, 200), (0, 0), 65.0)
    assert val == pytest.approx(OVERLAP_RECT_SIGMA65, rel=1e-12)


def test_rect_overlap_midpoint_rule():
    n = 400
    x = 100 + (np.arange(n) + 0.5) * 100 / n
    g = np.exp(-(x**2) / (2 * 65.0**2))
    assert gaussian_overlap((100, 100, 200, 200), (0, 0), 65.0) == pytest.approx(g.mean() ** 2, rel=1e-5)


def test_far_tail_keeps_precision():
    val = gaussian_overlap((1000, 0, 1010, 0), (0, 0), 50.0)
    expected = np.mean(np.exp(-((1000 + (np.arange(2000) + 0.5) * 10 / 2000) ** 2) / 5000))
    assert val == pytest.approx(expected, rel=1e-6)
    assert val > 0


@given(
    d=st.floats(0, 300),
    s1=st.floats(10, 100),
    ds=st.floats(0.1, 100),
)
@settings(max_examples=50, deadline=None)
def test_overlap_increases_with_sigma(d, s1, ds):
    rect = (d, -10, d + 20, 10)
    a = gaussian_overlap(rect, (0, 0), s1)
    b = gaussian_overlap(rect, (0, 0), s1 + ds)
    assert b >= a - 1e-15
    assert 0 <= a <= 1


def test_invalid_sigma_and_rect():
    with pytest.raises(ConfigurationError):
        gaussian_overlap((0, 0, 1, 1), (0, 0), 0.0)
    with pytest.raises(ConfigurationError):
        gaussian_overlap((1, 0, 0, 1), (0, 0), 1.0)
    with pytest.raises(ConfigurationError):
        Site(1, "community", rect=(1, 0, 0, 1), population=5)
    with pytest.raises(ConfigurationError):
        Site(1, "community", rect=(0, 0, 1, 1))
    with pytest.raises(ConfigurationError):
        Site(1, "index_patient", rect=(0, 0, 1, 1))


def test_site_infection_rate():
    prof = ContactProfile(sigma=60.0, gamma_sar=0.0413)
    home = Site(1, "household", position=(0.0, 0.0), population=4)
    assert site_infection_rate(prof, home, (0.0, 0.0)) == 0.0413
    far = Site(2, "community", rect=(5000, 5000, 5100, 5100), population=10)
    assert site_infection_rate(prof, far, (0.0, 0.0)) == 0.0


def test_sinc_peak_inverts_to_alpha():
    assert invert_sinc(0.201**2, 0.201, math.pi, 1.0) == math.pi


def test_round_trip_gamma():
    rate = sinc_rate(2.0, 0.201, math.pi, 1.0)
    assert invert_sinc(rate, 0.201, math.pi, 1.0) == pytest.approx(2.0, abs=1e-9)


def test_half_rate_root():
    g = invert_sinc(0.5 * 0.201**2, 0.201, math.pi, 1.0)
    assert g == pytest.approx(HALF_RATE_GAMMA, abs=1e-10)
    grid = np.linspace(1e-6, math.pi, 2_000_001)
    scan = grid[np.argmin(np.abs(np.sinc((grid - math.pi) / math.pi) ** 2 - 0.5))]
    assert abs(scan - g) < 2e-6


@given(
    gamma=st.floats(0.05, math.pi),
    lam=st.floats(0.01, 0.4),
)
@settings(max_examples=100, deadline=None)
def test_sinc_round_trip_property(gamma, lam):
    rate = sinc_rate(gamma, lam, math.pi, 1.0)
    g = invert_sinc(rate, lam, math.pi, 1.0)
    assert sinc_rate(g, lam, math.pi, 1.0) == pytest.approx(rate, rel=1e-9)


def test_invert_rejects_bad_rates():
    with pytest.raises(FitDomainError):
        invert_sinc(0.0, 0.2, math.pi, 1.0)
    with pytest.raises(InfeasibleRateError):
        invert_sinc(0.05, 0.2, math.pi, 1.0)
    with pytest.raises(InfeasibleRateError):
        invert_sinc(1e-4, 0.2, math.pi / 2, 1.0)


def test_coupling_from_overlap():
    assert coupling_from_overlap(1.0) == pytest.approx(math.pi)
    assert coupling_from_overlap(0.0) == 0.0
    assert coupling_from_overlap(0.5) == pytest.approx(HALF_RATE_GAMMA, abs=1e-10)
    with pytest.raises(FitDomainError):
        coupling_from_overlap(1.5)


@given(sigma=st.floats(20, 200))
@settings(max_examples=30, deadline=None)
def test_consistency_chain(sigma):
    # overlap -> site rate -> gamma -> forward law recovers the site rate
    lam, gsar = 0.201, 0.0413
    site = Site(3, "community", rect=(40, -40, 120, 40), population=40)
    rate = site_infection_rate(ContactProfile(sigma, gsar), site, (0, 0))
    g = coupling_from_overlap(rate / gsar)
    assert gsar * sinc_rate(g, 1.0, math.pi, 1.0) == pytest.approx(rate, rel=1e-9)
    assert 0 < g <= math.pi
    assert lam**2 * sinc_rate(g, 1.0, math.pi, 1.0) == pytest.approx(lam**2 * rate / gsar, rel=1e-9)


def _map():
    return CommunityMap(
        [
            Site(0, "index_patient", position=(0, 0)),
            Site(1, "household", position=(0, 0), population=4),
            Site(2, "community", rect=(40, -40, 120, 40), population=40),
            Site(3, "community", rect=(-130, 30, -50, 110), population=70),
        ]
    )


def test_gamma_matrix_shape_and_household_resonance():
    g = gamma_matrix(_map(), 67.0)
    assert g.shape == (1, 3)
    assert g[0, 0] == pytest.approx(math.pi)
    assert np.all((g > 0) & (g <= math.pi))


def test_community_map_validation():
    with pytest.raises(ConfigurationError):
        CommunityMap([Site(1, "household", position=(0, 0), population=4)])
    with pytest.raises(ConfigurationError):
        CommunityMap([Site(0, "index_patient", position=(0, 0)), Site(0, "household", position=(0, 0), population=1)])


def test_overlapping_communities_warn():
    cmap = CommunityMap(
        [
            Site(0, "index_patient", position=(0, 0)),
            Site(1, "community", rect=(0, 0, 50, 50), population=4),
            Site(2, "community", rect=(25, 25, 75, 75), population=4),
        ]
    )
    assert cmap.overlapping_communities() == [(1, 2)]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        gamma_matrix(cmap, 50.0)
    assert any("overlapping" in str(x.message) for x in w)
