import numpy as np
import pytest

from vhardy.cz import (apply_convolutional, apply_gamma_order, bump_kernel, hilbert_indicator,
                       hilbert_kernel, indicator_samples, l2_calibration, oscillating_kernel,
                       power_kernel, riesz_kernel, sample_kernel, two_point,
                       verify_kernel_regularity, verify_vanishing_moments, zero_kernel)
from vhardy.decomposition import synthesize_atom
from vhardy.exponent import make_exponent
from vhardy.grid import Ball, GridFunction, GridSpec


def test_hilbert_of_indicator_matches_closed_form():
    g = GridSpec(1, 16.0, 512)
    x = g.axis()
    T = apply_convolutional(hilbert_kernel(), indicator_samples(g)).Tf.samples
    ex = hilbert_indicator(x)
    away = np.minimum(np.abs(x - 1), np.abs(x + 1)) > 1.5 * g.spacing
    assert np.abs(T - ex)[away].max() <= 0.02 * np.abs(ex[away]).max()
    # sign: positive inside the interval near the centre, odd about it
    assert T[np.argmin(np.abs(x))] == pytest.approx(0.0, abs=1e-12)
    assert T[np.argmin(np.abs(x - 0.5))] > 0


def test_cell_sampling_is_an_alternative_route():
    g = GridSpec(1, 16.0, 512)
    x = g.axis()
    f = GridFunction(g, np.exp(-x ** 2))
    a = apply_convolutional(hilbert_kernel(), f).Tf.samples
    b = apply_convolutional(hilbert_kernel(), f, sampling="cell").Tf.samples
    assert np.abs(a - b).max() < 0.05 * np.abs(a).max()


def test_two_point_route_matches_convolution(rng):
    g = GridSpec(1, 8.0, 256)
    f = GridFunction(g, rng.standard_normal(256) * (np.abs(g.axis()) < 3))
    k = hilbert_kernel()
    a = apply_convolutional(k, f).Tf.samples
    res = apply_gamma_order(two_point(k), f)
    assert np.abs(a - res.Tf.samples).max() < 1e-12
    assert res.extension_mask.sum() == f.support.sum()


def test_zero_kernel():
    g = GridSpec(1, 4.0, 64)
    f = GridFunction(g, np.ones(64))
    assert not apply_convolutional(zero_kernel(), f).Tf.samples.any()


def test_origin_cell_zeroed():
    g = GridSpec(1, 4.0, 64)
    assert sample_kernel(hilbert_kernel(), g)[0] == 0.0
    assert sample_kernel(bump_kernel(), g)[0] > 0


@pytest.mark.parametrize("make", [hilbert_kernel, lambda: riesz_kernel(2), power_kernel,
                                  bump_kernel])
def test_regularity_passes_for_smooth_kernels(make):
    rep = verify_kernel_regularity(make())
    assert rep["passed"], rep


def test_regularity_fails_for_oscillating_kernel():
    rep = verify_kernel_regularity(oscillating_kernel())
    assert not rep["passed"]
    assert rep["constants"][-1] > 10 * rep["constants"][0]


def test_power_kernel_l2_bound_grows_with_resolution():
    s = [l2_calibration(power_kernel(), GridSpec(1, 16.0, n), trials=2)["spectral"]
         for n in (512, 1024)]
    h = [l2_calibration(hilbert_kernel(), GridSpec(1, 16.0, n), trials=2)["spectral"]
         for n in (512, 1024)]
    assert s[1] - s[0] > 0.5
    assert abs(h[1] - h[0]) < 0.05 * h[0]


def test_vanishing_moment_of_image():
    g = GridSpec(1, 32.0, 4096)
    p = make_exponent(0.5, g)
    atoms = [synthesize_atom(g, Ball((c,), 0.25), p, rng=np.random.default_rng(i))
             for i, c in enumerate((-1.0, 0.0, 1.0))]
    out = verify_vanishing_moments(lambda f: apply_convolutional(hilbert_kernel(), f), 0, atoms)
    assert out["passed"], out["worst"]


def test_far_field_decay_of_atom_image():
    # moments up to order s vanish, so |T a(x)| ~ |x|^-(n + s + 1) away from the ball
    g = GridSpec(1, 32.0, 4096)
    p = make_exponent(0.5, g)
    a = synthesize_atom(g, Ball((0.0,), 0.25), p, rng=np.random.default_rng(1))
    T = apply_convolutional(hilbert_kernel(), a.samples).Tf.samples
    x = g.axis()
    sel = (x > 2) & (x < 10)
    slope = np.polyfit(np.log(x[sel]), np.log(np.abs(T[sel])), 1)[0]
    assert slope == pytest.approx(-(1 + a.s + 1), rel=0.1)
