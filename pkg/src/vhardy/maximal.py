"""Maximal operators and the norm-level experiments built on them.

Operators
---------
* ``hl_maximal``: uncentered Hardy-Littlewood maximal function over node
  cubes ``{|y - c|_inf <= m h}`` (every node centre ``c``, every integer
  half-width ``m``) that contain the evaluation node.
* ``radial_maximal`` / ``nontangential_maximal``: suprema of a scale stack
  along the vertical ray or over the cone ``|y - x| < a t``.
* ``grand_maximal``: supremum over a finite probe family normalized in
  the Schwartz-type seminorm of order ``N``; a lower bound for the supremum
  over the whole normalized class.
* ``poisson_maximal``: non-tangential supremum of Poisson extensions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.polynomial import hermite as H
from scipy import ndimage
from scipy.optimize import minimize, minimize_scalar
from scipy.special import gamma

from .exponent import ExponentField
from .grid import Ball, GridFunction, GridSpec, Profile, ScaleStack, build_scale_stack
from .norms import luxemburg_norm, weak_norm

log = logging.getLogger(__name__)

__all__ = [
    "MaximalResult", "ProbeFamily", "GaussDerivative", "PoissonProfile",
    "hl_maximal", "hl_maximal_bruteforce", "radial_maximal", "nontangential_maximal",
    "grand_maximal", "poisson_kernel", "poisson_maximal", "poisson_truncation",
    "weak_hardy_norm", "hardy_norm", "maximal_ladder", "dilation_bound_check",
    "weak_operator_experiment", "vector_maximal_check", "maximal_equivalence_report",
]


@dataclass
class MaximalResult:
    field: GridFunction
    op: str
    scales: tuple = ()
    info: dict = field(default_factory=dict)

    @property
    def samples(self):
        return self.field.samples


def maximal_ladder(grid: GridSpec) -> tuple:
    """Default ``(k_min, k_max)``: ``t`` from ``L/4`` down to ``h``."""
    k_min = -int(round(math.log2(grid.half_width))) + 2
    k_max = int(round(-math.log2(grid.spacing)))
    return k_min, k_max


# ---------------------------------------------------------------------------
# Hardy-Littlewood

def _box_sums(a: np.ndarray, m: int) -> np.ndarray:
    """Sums of ``a`` over the node cubes of half-width ``m`` (outside = 0)."""
    out = a
    for ax in range(a.ndim):
        n = out.shape[ax]
        c = np.cumsum(out, axis=ax)
        zero = np.zeros_like(np.take(c, [0], axis=ax))
        c = np.concatenate([zero, c], axis=ax)
        hi = np.clip(np.arange(n) + m + 1, 0, n)
        lo = np.clip(np.arange(n) - m, 0, n)
        out = np.take(c, hi, axis=ax) - np.take(c, lo, axis=ax)
    return out


def hl_maximal(f: GridFunction, max_halfwidth: int | None = None) -> MaximalResult:
    """Uncentered Hardy-Littlewood maximal function over node cubes.

    ``Mf(x) = max { mean_{Q cap box} |f| : Q = {|y-c|_inf <= m h} contains x }``
    over node centres ``c`` and half-widths ``m = 0, 1, ..., N-1``.  The
    ``m = 0`` cube gives ``Mf >= |f|``.
    """
    a = np.abs(f.samples).astype(float)
    g = f.grid
    mmax = g.points - 1 if max_halfwidth is None else max_halfwidth
    ones = np.ones(g.shape)
    best = a.copy()
    for m in range(1, mmax + 1):
        avg = _box_sums(a, m) / _box_sums(ones, m)
        best = np.maximum(best, ndimage.maximum_filter(avg, size=2 * m + 1, mode="constant", cval=0.0))
    return MaximalResult(f.like(best), "hl", (), {"max_halfwidth": mmax})


def hl_maximal_bruteforce(f: GridFunction) -> np.ndarray:
    """Direct enumeration of every admissible cube (test oracle, small grids)."""
    a = np.abs(f.samples).astype(float)
    g = f.grid
    n = g.points
    out = np.zeros(g.shape)
    if g.dim == 1:
        for c in range(n):
            for m in range(n):
                lo, hi = max(c - m, 0), min(c + m + 1, n)
                avg = a[lo:hi].sum() / (hi - lo)
                seg = out[lo:hi]
                np.maximum(seg, avg, out=seg)
        return out
    for ci, cj in product(range(n), repeat=2):
        for m in range(n):
            sl = (slice(max(ci - m, 0), min(ci + m + 1, n)), slice(max(cj - m, 0), min(cj + m + 1, n)))
            blk = a[sl]
            avg = blk.sum() / blk.size
            np.maximum(out[sl], avg, out=out[sl])
    return out


def dilation_bound_check(ball: Ball, beta: float, r: float, grid: GridSpec, mf=None):
    """Pointwise ``chi_{beta B} <= beta^(n/r) (M chi_B)^(1/r)``.

    Returns the number of violating nodes and the worst ratio.
    """
    chi = ball.indicator(grid)
    if mf is None:
        mf = hl_maximal(chi).samples
    big = ball.dilate(beta).mask(grid)
    rhs = beta ** (grid.dim / r) * mf ** (1.0 / r)
    viol = big & (rhs < 1.0 * (1 - 1e-12))
    worst = float(np.min(rhs[big])) if big.any() else float("inf")
    return int(viol.sum()), worst


# ---------------------------------------------------------------------------
# stacks

def radial_maximal(stack: ScaleStack) -> MaximalResult:
    """``max_k |f * psi_{t_k}(x)|``."""
    val = np.abs(stack.layers).max(axis=0)
    return MaximalResult(stack.base.like(val), "radial", tuple(stack.ks),
                         {"kernel": stack.kernel.name})


def _cone_footprint(grid: GridSpec, radius: float) -> np.ndarray | None:
    """Node offsets with ``|y| < radius``; ``None`` when only ``y = 0`` qualifies."""
    m = int(math.ceil(radius / grid.spacing)) - 1
    if m <= 0:
        return None
    d = np.arange(-m, m + 1) * grid.spacing
    if grid.dim == 1:
        return np.abs(d) < radius
    x, y = np.meshgrid(d, d, indexing="ij")
    return x * x + y * y < radius * radius


def cone_max(layer: np.ndarray, grid: GridSpec, radius: float) -> np.ndarray:
    fp = _cone_footprint(grid, radius)
    if fp is None:
        return layer
    return ndimage.maximum_filter(layer, footprint=fp, mode="constant", cval=0.0)


def nontangential_maximal(stack: ScaleStack, a: float = 1.0) -> MaximalResult:
    """``max_k max_{|y - x| < a t_k} |f * psi_{t_k}(y)|``."""
    g = stack.grid
    best = np.zeros(g.shape)
    for t, lay in zip(stack.scales, stack.layers):
        best = np.maximum(best, cone_max(np.abs(lay), g, a * t))
    return MaximalResult(stack.base.like(best), "nontangential", tuple(stack.ks),
                         {"aperture": a, "kernel": stack.kernel.name})


# ---------------------------------------------------------------------------
# probe family

def _gauss_deriv_1d(k: int, x, w: float):
    """k-th derivative of exp(-pi x^2 / w^2)."""
    s = math.sqrt(math.pi) / w
    c = np.zeros(k + 1)
    c[k] = 1.0
    return (-s) ** k * H.hermval(s * x, c) * np.exp(-(s * x) ** 2)


class GaussDerivative(Profile):
    """Tensor Gaussian derivative ``c * D^j exp(-pi |x|^2 / w^2)``."""

    name = "gaussderiv"

    def __init__(self, dim: int, order: tuple, width: float, scale: float = 1.0):
        super().__init__(dim)
        self.order = tuple(order)
        self.width = float(width)
        self.scale = float(scale)
        self.reach = 2.0 * self.width
        self.name = f"gd{''.join(map(str, self.order))}w{self.width:g}"

    def evaluate(self, *coords):
        out = self.scale
        for j, x in zip(self.order, coords):
            out = out * _gauss_deriv_1d(j, x, self.width)
        return out

    def derivative(self, beta, *coords):
        out = self.scale
        for j, b, x in zip(self.order, beta, coords):
            out = out * _gauss_deriv_1d(j + b, x, self.width)
        return out

    @property
    def integral(self) -> float:
        if any(self.order):
            return 0.0
        return self.scale * self.width ** self.dim

    def seminorm(self, N: int) -> float:
        """``sum_{|beta| <= N} sup_x (1+|x|)^N |D^beta psi(x)|``."""
        total = 0.0
        for beta in _multi_indices(self.dim, N):
            total += _weighted_sup(lambda *c: self.derivative(beta, *c), self.dim, N,
                                   4 * self.width + 2 * N)
        return total


def _multi_indices(dim: int, N: int):
    if dim == 1:
        return [(b,) for b in range(N + 1)]
    return [(a, b) for a in range(N + 1) for b in range(N + 1 - a)]


def _weighted_sup(fn, dim: int, N: int, extent: float) -> float:
    """sup_x (1+|x|)^N |fn(x)|: dense sampling then local refinement."""
    if dim == 1:
        x = np.linspace(-extent, extent, 8001)
        v = (1 + np.abs(x)) ** N * np.abs(fn(x))
        i = int(np.argmax(v))
        dx = x[1] - x[0]
        obj = lambda z: -float((1 + abs(z)) ** N * abs(fn(np.array([z]))[0]))
        res = minimize_scalar(obj, bounds=(x[i] - dx, x[i] + dx), method="bounded",
                              options={"xatol": 1e-12})
        return max(float(v[i]), -float(res.fun))
    x = np.linspace(-extent, extent, 601)
    X, Y = np.meshgrid(x, x, indexing="ij")
    v = (1 + np.hypot(X, Y)) ** N * np.abs(fn(X, Y))
    i, j = np.unravel_index(int(np.argmax(v)), v.shape)
    obj = lambda z: -float((1 + math.hypot(z[0], z[1])) ** N *
                           abs(fn(np.array([z[0]]), np.array([z[1]]))[0]))
    res = minimize(obj, x0=[X[i, j], Y[i, j]], method="Nelder-Mead",
                   options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 4000})
    return max(float(v[i, j]), -float(res.fun))


def probe_order(p: ExponentField) -> int:
    """Smallest integer ``N > n/p_ + n + 1``."""
    n = p.grid.dim
    return int(math.floor(n / p.p_underline + n + 1)) + 1


class ProbeFamily:
    """Finite family of Gaussian derivatives normalized to unit seminorm of order N.

    Parameters
    ----------
    dim : int
    N : int
        Seminorm order.
    max_derivative : int
        Largest total derivative order of the members.
    widths : tuple of float
    """

    def __init__(self, dim: int, N: int, max_derivative: int = 1, widths=(0.5, 1.0, 2.0)):
        self.dim = dim
        self.N = int(N)
        self.members = []
        self.norms = []
        for w in widths:
            for order in _multi_indices(dim, max_derivative):
                raw = GaussDerivative(dim, order, w)
                c = raw.seminorm(self.N)
                self.members.append(GaussDerivative(dim, order, w, 1.0 / c))
                self.norms.append(c)

    @classmethod
    def for_exponent(cls, p: ExponentField, s: int | None = None, widths=(0.5, 1.0, 2.0)):
        from .exponent import default_moment_order
        s = default_moment_order(p) if s is None else s
        return cls(p.grid.dim, probe_order(p), s + 1, widths)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def subset(self, count: int) -> "ProbeFamily":
        out = object.__new__(ProbeFamily)
        out.dim, out.N = self.dim, self.N
        out.members, out.norms = self.members[:count], self.norms[:count]
        return out

    def check_normalization(self, tol: float = 1e-8) -> float:
        """Largest deviation of a member's seminorm from 1."""
        return max(abs(m.seminorm(self.N) - 1.0) for m in self.members)


def grand_maximal(f: GridFunction, probes: ProbeFamily, k_range, p: ExponentField | None = None,
                  ) -> MaximalResult:
    """``max`` over probes and dyadic scales of ``|f * psi_t(x)|``.

    A lower bound for the grand maximal function over the full normalized
    class; the probe count is recorded.
    """
    if p is not None:
        n = f.grid.dim
        if not probes.N > n / p.p_underline + n + 1:
            raise ValueError(f"probe order N={probes.N} must exceed n/p_ + n + 1 = "
                             f"{n / p.p_underline + n + 1:g}")
    if len(probes) == 0:
        raise ValueError("empty probe family")
    k_min, k_max = k_range
    best = np.zeros(f.grid.shape)
    for psi in probes:
        st = build_scale_stack(f, psi, k_min, k_max)
        best = np.maximum(best, np.abs(st.layers).max(axis=0))
    return MaximalResult(f.like(best), "grand", tuple(range(k_min, k_max + 1)),
                         {"probes": len(probes), "order": probes.N, "lower_bound": True})


# ---------------------------------------------------------------------------
# Poisson

def poisson_kernel(x, t: float, n: int = 1):
    """``Gamma((n+1)/2)/pi^((n+1)/2) * t / (t^2 + |x|^2)^((n+1)/2)``."""
    r2 = np.asarray(x, float) ** 2 if n == 1 else np.sum(np.asarray(x, float) ** 2, axis=0)
    c = gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)
    return c * t / (t * t + r2) ** ((n + 1) / 2)


class PoissonProfile(Profile):
    """Poisson kernel sampled by exact cell averages (mass-preserving)."""

    name = "poisson"
    reach = 0.0  # heavy tail: truncation is measured, not excluded

    def evaluate(self, *coords):
        return poisson_kernel(np.stack(coords) if self.dim > 1 else coords[0], 1.0, self.dim)

    def sample(self, grid: GridSpec, t: float) -> np.ndarray:
        h = grid.spacing
        z = grid.offsets()
        if grid.dim == 1:
            m = (np.arctan((z[0] + h / 2) / t) - np.arctan((z[0] - h / 2) / t)) / math.pi
            return m / h

        def F(X, Y):
            return np.arctan(X * Y / (t * np.sqrt(t * t + X * X + Y * Y)))

        x, y = z
        a0, a1, b0, b1 = x - h / 2, x + h / 2, y - h / 2, y + h / 2
        m = (F(a1, b1) - F(a1, b0) - F(a0, b1) + F(a0, b0)) / (2 * math.pi)
        return m / h ** 2


def poisson_truncation(grid: GridSpec, t: float) -> float:
    """Mass of ``P_t`` outside the sampled offsets (``1 - sum of cell masses``)."""
    k = PoissonProfile(grid.dim).sample(grid, t)
    return float(1.0 - k.sum() * grid.cell)


def poisson_maximal(f: GridFunction, k_range, a: float = 1.0) -> MaximalResult:
    """``max_t max_{|y-x| < a t} |f * P_t(y)|`` over dyadic ``t``."""
    prof = PoissonProfile(f.grid.dim)
    st = build_scale_stack(f, prof, *k_range)
    res = nontangential_maximal(st, a)
    res.op = "poisson"
    res.info["truncated_mass"] = {int(k): poisson_truncation(f.grid, 2.0 ** -k) for k in st.ks}
    return res


# ---------------------------------------------------------------------------
# Hardy quasi-norms

def weak_hardy_norm(f: GridFunction, p: ExponentField, probes: ProbeFamily, k_range) -> float:
    """Weak quasi-norm of the grand maximal function."""
    return weak_norm(grand_maximal(f, probes, k_range, p).field, p).value


def hardy_norm(f: GridFunction, p: ExponentField, probes: ProbeFamily, k_range) -> float:
    """Luxemburg quasi-norm of the grand maximal function."""
    return luxemburg_norm(grand_maximal(f, probes, k_range, p).field, p).value


# ---------------------------------------------------------------------------
# experiments

def weak_operator_experiment(op, p: ExponentField, bank, p1: float | None = None,
                             p2: float = 2.0) -> dict:
    """Empirical constants of a sublinear operator on weak and strong-to-weak scales.

    Returns the sup over the bank of ``||op f||_WL / ||f||_WL`` and, for
    ``i = 1, 2``, of ``||op f||_{WL^{p_i p}} / ||f||_{L^{p_i p}}``.
    """
    if p1 is None:
        p1 = (1.0 / p.p_minus + 1.0) / 2
    rows = []
    p_1, p_2 = p.scaled(p1), p.scaled(p2)
    for fid, f in bank:
        tf = op(f)
        w = weak_norm(f, p).value
        row = {"id": fid,
               "weak": weak_norm(tf, p).value / w if w else float("nan"),
               "p1": weak_norm(tf, p_1).value / luxemburg_norm(f, p_1).value,
               "p2": weak_norm(tf, p_2).value / luxemburg_norm(f, p_2).value,
               "strong": luxemburg_norm(tf, p).value / luxemburg_norm(f, p).value}
        rows.append(row)
    summary = {k: max(r[k] for r in rows) for k in ("weak", "p1", "p2", "strong")}
    return {"rows": rows, "sup": summary, "p1": p1, "p2": p2}


def vector_maximal_check(fs, r: float, p: ExponentField, kind: str = "strong", mfs=None) -> float:
    """Ratio ``||(sum (M f_j)^r)^(1/r)|| / ||(sum |f_j|^r)^(1/r)||``.

    ``kind``: ``"strong"`` (Luxemburg both sides), ``"weak"`` (weak both
    sides) or ``"endpoint"`` (weak on the left, Luxemburg on the right).
    """
    if not r > 1:
        raise ValueError("r must exceed 1")
    if mfs is None:
        mfs = [hl_maximal(f).samples for f in fs]
    g = fs[0].grid
    left = GridFunction(g, sum(m ** r for m in mfs) ** (1 / r))
    right = GridFunction(g, sum(np.abs(f.samples) ** r for f in fs) ** (1 / r))
    if kind == "strong":
        return luxemburg_norm(left, p).value / luxemburg_norm(right, p).value
    if kind == "weak":
        return weak_norm(left, p).value / weak_norm(right, p).value
    if kind == "endpoint":
        return weak_norm(left, p).value / luxemburg_norm(right, p).value
    raise ValueError(f"unknown kind {kind!r}")


MAXIMAL_NAMES = ("grand", "poisson", "radial", "nontangential")


def maximal_fields(f: GridFunction, p: ExponentField, probes: ProbeFamily, k_range,
                   psi: Profile) -> dict:
    st = build_scale_stack(f, psi, *k_range)
    return {
        "grand": grand_maximal(f, probes, k_range, p).field,
        "poisson": poisson_maximal(f, k_range).field,
        "radial": radial_maximal(st).field,
        "nontangential": nontangential_maximal(st, 1.0).field,
    }


def maximal_equivalence_report(bank, p: ExponentField, probes: ProbeFamily, k_range,
                               psi: Profile | None = None) -> dict:
    """Weak norms of four maximal functions per bank element and their ratio band.

    ``psi`` defaults to the unit-mass Gaussian ``exp(-pi |x|^2)``.
    The band is ``C = max`` over elements and ordered pairs of the ratios.
    """
    from .grid import GaussianProfile
    psi = GaussianProfile(p.grid.dim) if psi is None else psi
    rows = []
    band = 1.0
    for fid, f in bank:
        fields = maximal_fields(f, p, probes, k_range, psi)
        norms = {k: weak_norm(v, p).value for k, v in fields.items()}
        row = {"id": fid, **norms}
        if all(v > 0 for v in norms.values()):
            vals = list(norms.values())
            band = max(band, max(vals) / min(vals))
            row["spread"] = max(vals) / min(vals)
        else:
            row["spread"] = float("nan") if any(norms.values()) else 1.0
        rows.append(row)
    return {"rows": rows, "band": band}
