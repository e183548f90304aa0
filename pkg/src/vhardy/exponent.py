"""Sampled variable exponents and their log-Hölder certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import GridSpec

__all__ = [
    "ExponentField", "HolderReport", "make_exponent", "validate_log_holder",
    "conjugate_exponent", "smoothstep", "default_moment_order",
]


def smoothstep(u):
    """C-infinity transition: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class HolderReport:
    c_log: float
    c_infinity: float
    p_infinity: float
    passed: bool


class ExponentField:
    """Node samples of a variable exponent ``p(.)`` on a grid.

    The extremal values are exact minima and maxima over the nodes.  The
    log-Hölder constants are computed on first access.
    """

    def __init__(self, grid: GridSpec, samples, recipe=None):
        p = np.asarray(samples, dtype=float)
        if p.ndim == 0:
            p = np.full(grid.shape, float(p))
        p = p.reshape(grid.shape).copy()
        if grid.size < 2:
            raise ValueError("single-node grids carry no log-Hölder information")
        if not np.all(np.isfinite(p)):
            raise ValueError("exponent samples must be finite")
        if np.any(p <= 0):
            raise ValueError(f"exponent must be positive, min sample {p.min():g}")
        p.setflags(write=False)
        self.grid = grid
        self.samples = p
        self.recipe = recipe
        self.p_minus = float(p.min())
        self.p_plus = float(p.max())
        self.p_underline = min(self.p_minus, 1.0)

    def __repr__(self):
        return f"ExponentField(p_minus={self.p_minus:g}, p_plus={self.p_plus:g})"

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def scaled(self, r: float) -> "ExponentField":
        return ExponentField(self.grid, r * self.samples)

    def restrict(self, mask) -> np.ndarray:
        return self.samples[np.asarray(mask, bool)]

    @cached_property
    def c_log(self) -> float:
        return _pairwise_log_constant(self.grid, self.samples)

    @cached_property
    def _decay(self):
        return _fit_infinity(self.grid, self.samples)

    @property
    def p_infinity(self) -> float:
        return self._decay[0]

    @property
    def c_infinity(self) -> float:
        return self._decay[1]


def _pairwise_log_constant(grid: GridSpec, p: np.ndarray, chunk: int = 256) -> float:
    """max over node pairs of |p(x)-p(y)| log(e + 1/|x-y|), exhaustive."""
    pts = np.stack([c.ravel() for c in grid.coords()], axis=1)
    v = p.ravel()
    if v.min() == v.max():
        return 0.0
    best = 0.0
    for s in range(0, len(v), chunk):
        d = np.sqrt(((pts[s:s + chunk, None, :] - pts[None, :, :]) ** 2).sum(-1))
        dp = np.abs(v[s:s + chunk, None] - v[None, :])
        with np.errstate(divide="ignore"):
            w = np.log(math.e + 1.0 / d)
        w[d == 0] = 0.0
        best = max(best, float((dp * w).max()))
    return best


def _fit_infinity(grid: GridSpec, p: np.ndarray):
    """Scalar q minimizing max |p(x) - q| log(e + |x|) (convex in q)."""
    w = np.log(math.e + grid.radius()).ravel()
    v = p.ravel()
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo, 0.0

    def sup(q):
        return float(np.max(np.abs(v - q) * w))

    res = minimize_scalar(sup, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13 * max(1.0, hi)})
    q = float(res.x)
    return q, sup(q)


def validate_log_holder(p: ExponentField) -> HolderReport:
    """Log-Hölder certificates of a sampled exponent.

    On a finite grid both maxima are always finite, so ``passed`` is true;
    the magnitudes are what carries information (compare them across
    refinements to detect discontinuities).
    """
    c_log, c_inf, p_inf = p.c_log, p.c_infinity, p.p_infinity
    return HolderReport(c_log, c_inf, p_inf, bool(np.isfinite(c_log) and np.isfinite(c_inf)))


def make_exponent(recipe, grid: GridSpec) -> ExponentField:
    """Build an exponent field from a recipe.

    Recipes (dicts, or a bare number for a constant):

    * ``{"kind": "constant", "value": c}``
    * ``{"kind": "affine", "p0": a, "p1": b, "x0": u, "x1": v}`` linear in the
      first coordinate between ``x0`` and ``x1``, clamped outside.
    * ``{"kind": "smooth", "p0": a, "p1": b, "x0": u, "x1": v}`` the same with
      a C-infinity transition.
    * ``{"kind": "bump", "p0": a, "p1": b, "center": c, "radius": r}`` equal to
      ``p1`` at the center, ``p0`` outside the ball, smooth in between.
    * ``{"kind": "raw", "samples": [...]}``
    """
    if isinstance(recipe, (int, float)):
        recipe = {"kind": "constant", "value": float(recipe)}
    kind = recipe.get("kind", "constant")
    x = grid.coords()[0]
    if kind == "constant":
        vals = np.full(grid.shape, float(recipe["value"]))
    elif kind in ("affine", "smooth"):
        p0, p1 = float(recipe["p0"]), float(recipe["p1"])
        x0, x1 = float(recipe.get("x0", -1.0)), float(recipe.get("x1", 1.0))
        if not x1 > x0:
            raise ValueError("transition needs x1 > x0")
        u = np.clip((x - x0) / (x1 - x0), 0, 1)
        s = u if kind == "affine" else smoothstep(u)
        vals = p0 + (p1 - p0) * s
    elif kind == "bump":
        p0, p1 = float(recipe["p0"]), float(recipe["p1"])
        c = np.atleast_1d(np.asarray(recipe.get("center", [0.0] * grid.dim), float))
        r = float(recipe.get("radius", 1.0))
        u = grid.radius(c) / r
        vals = p0 + (p1 - p0) * (1 - smoothstep(u))
    elif kind == "raw":
        vals = np.asarray(recipe["samples"], float)
    else:
        raise ValueError(f"unknown exponent recipe kind {kind!r}")
    if np.any(np.asarray(vals) <= 0):
        raise ValueError("recipe produces nonpositive exponent values")
    return ExponentField(grid, vals, recipe)


def conjugate_exponent(p: ExponentField) -> ExponentField:
    """Pointwise ``p/(p-1)``; requires ``p_minus > 1``."""
    if not p.p_minus > 1:
        raise ValueError(f"conjugate exponent needs p_minus > 1, got {p.p_minus:g}")
    return ExponentField(p.grid, p.samples / (p.samples - 1.0))


def default_moment_order(p: ExponentField) -> int:
    """Smallest nonnegative integer ``s`` with ``s > n/p_minus - n - 1``."""
    n = p.grid.dim
    return max(int(math.floor(n / p.p_minus - n - 1 + 1e-12)) + 1, 0)
