import math

import numpy as np
import pytest

from vhardy.banks import band_limited_noise
from vhardy.grid import GridFunction, GridSpec, build_scale_stack, default_ladder
from vhardy.lp import (cone_volume_bound, default_lambda, fit_dual_profile, g_function,
                       ladder_multiplier, lusin_area, make_admissible_profile, pointwise_chains,
                       reproducing_residual, required_moment_order, uncovered_energy,
                       vanishing_at_infinity_check)


@pytest.fixture(scope="module")
def phi1():
    return make_admissible_profile(0.5, GridSpec(1, 16.0, 512))


def test_default_lambda():
    assert default_lambda(0.5) == pytest.approx(5.5)
    assert default_lambda(3.0) == pytest.approx(2.5)


def test_calderon_residual(phi1):
    assert phi1.calderon_residual <= 0.01


def test_profile_moments_vanish(phi1):
    mom = np.abs(phi1.continuous_moments())
    assert phi1.moment_order >= required_moment_order(0.5, 1)
    assert mom.max() < 1e-8


def test_profile_rejected_when_tolerance_unreachable():
    with pytest.raises(ValueError):
        make_admissible_profile(0.5, GridSpec(1, 16.0, 512), tol=1e-12)


def test_dual_profile_reproduces(phi1):
    assert reproducing_residual(fit_dual_profile(phi1), phi1) < 0.05


def test_ladder_multiplier_flat_in_band(phi1):
    g = GridSpec(1, 16.0, 512)
    r, m = ladder_multiplier(phi1, g, range(*default_ladder(g)))
    sel = (r >= 0.25) & (r <= 1.2)
    assert np.abs(m[sel] - 1).max() < 0.02


def test_plancherel_on_band_limited_noise(phi1, rng):
    g = GridSpec(1, 16.0, 512)
    for _ in range(3):
        f = band_limited_noise(g, rng, band=(0.25, 1.2))
        st = build_scale_stack(f, phi1, *default_ladder(g))
        ratio = np.linalg.norm(g_function(st).samples) / np.linalg.norm(f.samples)
        assert abs(ratio - 1) <= 0.02
        assert uncovered_energy(st) < 0.05


def test_pointwise_chains_have_no_exceptions(phi1, rng):
    g = GridSpec(1, 16.0, 512)
    f = band_limited_noise(g, rng, band=(0.25, 1.2))
    st = build_scale_stack(f, phi1, *default_ladder(g))
    ch = pointwise_chains(st, default_lambda(0.5), 2.0)
    assert ch["g<=ga"] == ch["S<=glam"] == ch["S<=ga"] == 0


def test_area_function_is_quadratic_mean(phi1, rng):
    g = GridSpec(1, 16.0, 512)
    f = band_limited_noise(g, rng, band=(0.25, 1.2))
    st = build_scale_stack(f, phi1, *default_ladder(g))
    a = lusin_area(st).samples
    b = lusin_area(build_scale_stack(2 * f, phi1, *default_ladder(g))).samples
    assert np.allclose(b, 2 * a)


def test_vanishing_at_infinity(phi1):
    g = GridSpec(1, 16.0, 512)
    x = g.axis()
    f = GridFunction(g, np.exp(-x ** 2) * np.cos(4 * x))
    assert vanishing_at_infinity_check(build_scale_stack(f, phi1, *default_ladder(g)))["passed"]


def test_cone_volume_bound_below_ball_volume():
    g = GridSpec(2, 8.0, 128)
    for R in (2, 4, 8, 16):
        v = cone_volume_bound(g, R * g.spacing)
        assert v <= math.pi + 1e-12
    assert cone_volume_bound(g, 16 * g.spacing) == pytest.approx(math.pi, rel=0.05)
