import numpy as np
import pytest

from vhardy.exponent import (conjugate_exponent, default_moment_order, make_exponent,
                             validate_log_holder)
from vhardy.grid import GridSpec


def test_constant_recipe(g1):
    p = make_exponent(0.7, g1)
    assert p.is_constant
    assert p.p_minus == p.p_plus == 0.7
    assert p.p_underline == 0.7
    assert make_exponent(3.0, g1).p_underline == 1.0


def test_affine_and_smooth_recipes_clamp(g1):
    for kind in ("affine", "smooth"):
        p = make_exponent({"kind": kind, "p0": 0.5, "p1": 2.0, "x0": -1, "x1": 1}, g1)
        x = g1.axis()
        assert np.all(p.samples[x <= -1] == 0.5)
        assert np.all(p.samples[x >= 1] == 2.0)
        assert np.all(np.diff(p.samples) >= 0)


def test_bump_recipe(g2):
    p = make_exponent({"kind": "bump", "p0": 1.0, "p1": 2.0, "radius": 2.0}, g2)
    assert p.p_plus == pytest.approx(2.0)
    assert np.all(p.samples[g2.radius() >= 2] == 1.0)


def test_recipe_errors(g1):
    with pytest.raises(ValueError):
        make_exponent({"kind": "affine", "p0": -1, "p1": 1}, g1)
    with pytest.raises(ValueError):
        make_exponent({"kind": "nope"}, g1)
    with pytest.raises(ValueError):
        make_exponent({"kind": "affine", "p0": 1, "p1": 2, "x0": 1, "x1": 1}, g1)


def test_log_holder_report(g1):
    rep = validate_log_holder(make_exponent(1.5, g1))
    assert rep.passed and rep.c_log == 0.0
    assert rep.p_infinity == pytest.approx(1.5)
    smooth = validate_log_holder(make_exponent(
        {"kind": "smooth", "p0": 0.5, "p1": 2.0, "x0": -2, "x1": 2}, g1))
    assert smooth.passed and np.isfinite(smooth.c_log) and smooth.c_log > 0


def test_log_holder_constant_is_resolution_stable():
    # a smooth exponent has a modulus that does not grow under refinement
    recipe = {"kind": "smooth", "p0": 0.5, "p1": 2.0, "x0": -2, "x1": 2}
    c = [validate_log_holder(make_exponent(recipe, GridSpec(1, 8.0, n))).c_log
         for n in (128, 256, 512)]
    assert max(c) / min(c) < 1.2


def test_conjugate(g1):
    p = make_exponent(3.0, g1)
    assert conjugate_exponent(p).p_minus == pytest.approx(1.5)
    with pytest.raises(ValueError):
        conjugate_exponent(make_exponent(1.0, g1))


@pytest.mark.parametrize("pm,n,s", [(0.5, 1, 1), (1.0, 1, 0), (0.4, 1, 1), (0.25, 1, 3),
                                    (0.5, 2, 2), (1.0, 2, 0)])
def test_default_moment_order_is_strict(pm, n, s):
    g = GridSpec(n, 4.0, 16)
    assert default_moment_order(make_exponent(pm, g)) == s
