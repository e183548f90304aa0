import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vhardy.grid import (Ball, GaussianProfile, GridFunction, GridSpec, build_scale_stack,
                         complement_distance, convolve_at_scale, convolve_kernel, default_ladder,
                         read_vgf, whitney_decompose, write_vgf)


def test_node_layout():
    g = GridSpec(1, 1.0, 8)
    assert g.spacing == 0.25
    np.testing.assert_allclose(g.axis(), -1 + 0.25 * np.arange(8))
    assert g.shape == (8,)
    assert GridSpec(2, 1.0, 8).shape == (8, 8)


@pytest.mark.parametrize("n", [0, 1, 3, 100])
def test_points_must_be_power_of_two(n):
    with pytest.raises(ValueError):
        GridSpec(1, 1.0, n)


def test_dimension_checked():
    with pytest.raises(ValueError):
        GridSpec(3, 1.0, 8)


def test_samples_validated():
    g = GridSpec(1, 1.0, 8)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(7))
    with pytest.raises(ValueError):
        GridFunction(g, np.full(8, np.nan))


def test_linear_convolution_matches_direct_sum(rng):
    g = GridSpec(1, 4.0, 64)
    f = rng.standard_normal(64)
    k = rng.standard_normal(2 * 64 - 1)  # offsets -63..63
    kk = np.zeros(128)  # index j is offset j for j < 64, j - 128 otherwise
    kk[:64] = k[63:]
    kk[65:] = k[:63]
    out = convolve_kernel(GridFunction(g, f), kk).samples
    full = np.convolve(f, k) * g.spacing
    np.testing.assert_allclose(out, full[63:63 + 64], atol=1e-12)


def test_gaussian_semigroup():
    # exp(-pi x^2) at scale t convolved  =  Gaussian of variance (1 + t^2)/(2 pi)
    g = GridSpec(1, 16.0, 1024)
    x = g.axis()
    f = GridFunction(g, np.exp(-np.pi * x ** 2))
    for t in (0.5, 1.0, 2.0):
        out = convolve_at_scale(f, GaussianProfile(1), t).samples
        s2 = 1 + t * t
        exact = np.exp(-np.pi * x ** 2 / s2) / math.sqrt(s2)
        assert np.abs(out - exact).max() < 1e-10


def test_scale_stack_layers_match_single_convolutions(rng):
    g = GridSpec(1, 8.0, 256)
    f = GridFunction(g, rng.standard_normal(256) * (np.abs(g.axis()) < 3))
    st_ = build_scale_stack(f, GaussianProfile(1), 0, 3)
    assert len(st_) == 4
    for k in range(4):
        ref = convolve_at_scale(f, GaussianProfile(1), 2.0 ** -k).samples
        np.testing.assert_allclose(st_.layer(k).samples, ref, atol=1e-12)


def test_default_ladder_span():
    g = GridSpec(1, 16.0, 512)
    kmin, kmax = default_ladder(g)
    assert 2.0 ** -kmin == 8.0
    assert 2.0 ** -kmax == 2 * g.spacing


def test_ball_measure_and_indicator():
    g = GridSpec(1, 4.0, 64)
    b = Ball((0.0,), 1.0)
    assert b.indicator(g).samples.sum() * g.spacing == pytest.approx(b.measure(g))
    assert abs(b.measure(g) - b.volume) <= g.spacing
    assert Ball((0.0, 0.0), 1.0).volume == pytest.approx(math.pi)


def _check_whitney(mask, g):
    cubes = whitney_decompose(mask, g)
    seen = np.zeros(g.shape, int)
    dist = complement_distance(mask, g)
    for q in cubes:
        seen[q.slices(g)] += 1
        if not q.boundary:
            d = dist[q.slices(g)].min()
            rn = math.sqrt(g.dim)
            assert rn * q.side * (1 - 1e-12) <= d
            assert d <= 4 * rn * q.side * (1 + 1e-12)
    assert np.array_equal(seen, mask.astype(int))
    return cubes


def test_whitney_interval():
    g = GridSpec(1, 8.0, 256)
    mask = np.abs(g.axis()) < 2
    cubes = _check_whitney(mask, g)
    assert not any(q.boundary for q in cubes)


def test_whitney_disc():
    g = GridSpec(2, 8.0, 64)
    _check_whitney(g.radius() < 3, g)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-6, 6), st.floats(0.2, 2)), min_size=1, max_size=4))
def test_whitney_random_unions(intervals):
    g = GridSpec(1, 8.0, 128)
    x = g.axis()
    mask = np.zeros(128, bool)
    for c, r in intervals:
        mask |= np.abs(x - c) < r
    if mask.any() and not mask.all():
        _check_whitney(mask, g)


def test_whitney_rejects_degenerate_sets():
    g = GridSpec(1, 4.0, 32)
    with pytest.raises(ValueError):
        whitney_decompose(np.zeros(32, bool), g)
    with pytest.raises(ValueError):
        whitney_decompose(np.ones(32, bool), g)


def test_vgf_roundtrip(tmp_path, rng):
    g = GridSpec(2, 3.0, 16)
    f = GridFunction(g, rng.standard_normal((16, 16)))
    write_vgf(tmp_path / "f.vgf", f)
    h = read_vgf(tmp_path / "f.vgf")
    assert h.grid == g
    assert np.array_equal(h.samples, f.samples)
    (tmp_path / "bad.vgf").write_bytes(b"XXXX" + (tmp_path / "f.vgf").read_bytes()[4:])
    with pytest.raises(ValueError):
        read_vgf(tmp_path / "bad.vgf")
