import numpy as np
import pytest

from vhardy.banks import random_piecewise
from vhardy.exponent import make_exponent
from vhardy.grid import Ball, GaussianProfile, GridFunction, GridSpec, build_scale_stack
from vhardy.maximal import (ProbeFamily, dilation_bound_check, grand_maximal, hl_maximal,
                            hl_maximal_bruteforce, maximal_ladder, nontangential_maximal,
                            poisson_maximal, radial_maximal, vector_maximal_check,
                            weak_hardy_norm)


@pytest.mark.parametrize("dim,n", [(1, 128), (2, 16)])
def test_fast_maximal_matches_bruteforce(dim, n, rng):
    g = GridSpec(dim, 4.0, n)
    for _ in range(3):
        f = random_piecewise(g, rng, pieces=5)
        f = f.like(np.round(4 * f.samples))
        assert np.array_equal(hl_maximal(f).samples, hl_maximal_bruteforce(f))


def test_maximal_dominates_and_is_sublinear(g1, rng):
    f = random_piecewise(g1, rng)
    h = random_piecewise(g1, rng)
    mf, mh = hl_maximal(f).samples, hl_maximal(h).samples
    assert np.all(mf >= np.abs(f.samples))
    assert np.all(hl_maximal(f + h).samples <= mf + mh + 1e-12)
    assert np.allclose(hl_maximal(3.0 * f).samples, 3 * mf)


def test_maximal_of_constant():
    g = GridSpec(1, 4.0, 64)
    assert np.allclose(hl_maximal(GridFunction(g, np.ones(64))).samples, 1.0)


def test_maximal_of_interval_far_away():
    # best window containing x = 2 and [0, 1] is [0, 2]: average close to 1/2
    g = GridSpec(1, 8.0, 512)
    x = g.axis()
    chi = GridFunction(g, ((x >= 0) & (x <= 1)).astype(float))
    v = hl_maximal(chi).samples[np.argmin(np.abs(x - 2))]
    assert v == pytest.approx(0.5, abs=4 * g.spacing)


@pytest.mark.parametrize("beta", [2.0, 4.0])
def test_dilation_bound(g1, beta):
    r = 0.25
    for m in (1, 5, 20):
        ball = Ball((0.0,), (m + 0.5) * g1.spacing)
        nviol, worst = dilation_bound_check(ball, beta, r, g1)
        assert nviol == 0 and worst >= 1.0


def test_vector_inequality_constants_finite(g1, rng):
    p = make_exponent({"kind": "smooth", "p0": 1.5, "p1": 3.0, "x0": -4, "x1": 4}, g1)
    fs = [random_piecewise(g1, rng, nonneg=True) for _ in range(4)]
    for kind in ("strong", "weak", "endpoint"):
        c = vector_maximal_check(fs, 2.0, p, kind)
        assert np.isfinite(c) and c >= 1.0 - 1e-12
    with pytest.raises(ValueError):
        vector_maximal_check(fs, 1.0, p)


def test_probe_family_normalized():
    p = make_exponent(0.5, GridSpec(1, 16.0, 512))
    probes = ProbeFamily.for_exponent(p)
    assert probes.N > 1 / 0.5 + 2
    assert probes.check_normalization() < 1e-8
    assert len(probes.subset(2)) == 2


def test_grand_maximal_order_guard(g1):
    p = make_exponent(0.5, g1)
    f = Ball((0.0,), 1.0).indicator(g1)
    weak = ProbeFamily(1, 2)
    with pytest.raises(ValueError):
        grand_maximal(f, weak, (0, 2), p)


def test_maximal_functions_of_gaussian(g1):
    # f * phi_t for Gaussian f and Gaussian phi is explicit, so the radial maximal
    # function is max_t (1 + t^2)^(-1/2) exp(-pi x^2 / (1 + t^2))
    x = g1.axis()
    f = GridFunction(g1, np.exp(-np.pi * x ** 2))
    ks = maximal_ladder(g1)
    ks = (ks[0], ks[1] - 2)  # t >= 4h, where the sampled kernel still has unit mass
    st = build_scale_stack(f, GaussianProfile(1), *ks)
    rad = radial_maximal(st).samples
    ts = 2.0 ** -np.arange(ks[0], ks[1] + 1)
    exact = np.max([np.exp(-np.pi * x ** 2 / (1 + t * t)) / np.sqrt(1 + t * t) for t in ts], axis=0)
    assert np.abs(rad - exact).max() < 1e-10
    nt = nontangential_maximal(st).samples
    assert np.all(nt >= rad - 1e-14)
    poi = poisson_maximal(f, ks).samples
    assert np.all(np.isfinite(poi)) and poi.max() <= 1 + 1e-9


def test_weak_hardy_norm_scales_linearly(g1):
    p = make_exponent(0.8, g1)
    probes = ProbeFamily.for_exponent(p)
    x = g1.axis()
    f = GridFunction(g1, np.exp(-x ** 2) * np.cos(3 * x))
    a = weak_hardy_norm(f, p, probes, maximal_ladder(g1))
    b = weak_hardy_norm(2.5 * f, p, probes, maximal_ladder(g1))
    assert a > 0 and b == pytest.approx(2.5 * a, rel=1e-12)
