"""Modular, Luxemburg and weak quasi-norms of variable Lebesgue spaces.

The weak quasi-norm is evaluated as an exact finite maximization over the
sample magnitudes: with ``v_1 > v_2 > ...`` the distinct nonzero values of
``|f|``, ``sup_a a ||chi_{|f|>a}|| = max_k v_k ||chi_{|f| >= v_k}||``.  The
level-set norms of the nested sets ``{|f| >= v_k}`` are solved jointly (see
:func:`nested_indicator_norms`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .exponent import ExponentField
from .grid import GridFunction

log = logging.getLogger(__name__)

BISECTION_RTOL = 1e-12
MODULAR_TOL = 1e-10

__all__ = [
    "NormResult", "modular", "luxemburg_norm", "weak_norm", "lq_norm",
    "indicator_norm", "nested_indicator_norms", "level_profile",
    "quasinorm_axiom_report", "fatou_check", "power_triangle_check",
]


@dataclass
class NormResult:
    """A computed norm together with how it was found."""

    value: float
    method: str = ""
    iterations: int = 0
    residual: float = 0.0
    maximizer: float | None = None

    def __float__(self):
        return float(self.value)


def _abs(f) -> np.ndarray:
    a = f.samples if isinstance(f, GridFunction) else np.asarray(f)
    return np.abs(a)


def modular(f: GridFunction, p: ExponentField) -> float:
    """``h^n sum |f(x)|^p(x)``, with zero samples contributing zero."""
    a = _abs(f)
    nz = a > 0
    return float(f.grid.cell * np.sum(np.exp(p.samples[nz] * np.log(a[nz]))))


def _log_modular(loga: np.ndarray, pv: np.ndarray, cell: float, u: float) -> float:
    # log rho(f / e^u)
    return math.log(cell) + float(logsumexp(pv * (loga - u)))


def luxemburg_norm(f: GridFunction, p: ExponentField) -> NormResult:
    """Luxemburg quasi-norm ``inf{lam : rho(f/lam) <= 1}``.

    The root of the decreasing map ``lam -> rho(f/lam)`` is bracketed and
    then located in the variable ``log(lam)`` to relative precision
    ``1e-12`` or better.
    """
    a = _abs(f)
    nz = a > 0
    if not nz.any():
        return NormResult(0.0, "zero")
    g = f.grid
    cell = g.cell
    loga = np.log(a[nz])
    pv = p.samples[nz]
    if p.is_constant:
        # rho(f/lam) = rho(f) lam^-p
        q = p.p_minus
        u = (math.log(cell) + float(logsumexp(q * loga))) / q
        value = math.exp(u)
        return NormResult(value, "closed-form", 0, abs(modular(f / value, p) - 1.0))
    amax = float(a.max())
    lo = math.log(amax) + g.dim * math.log(g.spacing) / p.p_minus - math.log(1e3)
    hi = math.log(amax) + g.dim * math.log(2 * g.half_width) / p.p_minus + math.log(1e3)
    fn = lambda u: _log_modular(loga, pv, cell, u)
    grow = 0
    while fn(lo) < 0:
        lo -= 10.0
        grow += 1
        if grow > 200:
            raise RuntimeError(f"bracket failure: lower end {math.exp(lo):g}")
    while fn(hi) > 0:
        hi += 10.0
        grow += 1
        if grow > 200:
            raise RuntimeError(f"bracket failure: upper end {math.exp(hi):g}")
    u, info = brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                     full_output=True, maxiter=400)
    value = math.exp(u)
    res = abs(math.exp(fn(u)) - 1.0)
    if res > MODULAR_TOL:
        # Newton polish in log(lam): d/du log rho = -<p>
        w = np.exp(pv * (loga - u) - logsumexp(pv * (loga - u)))
        u = u + fn(u) / float(np.sum(w * pv))
        value = math.exp(u)
        res = abs(math.exp(fn(u)) - 1.0)
    return NormResult(value, "bracketed-root", info.iterations, res)


def indicator_norm(mask, p: ExponentField) -> float:
    """``||chi_E||`` for the node set ``E``."""
    m = np.asarray(mask, bool).reshape(p.grid.shape)
    c = int(m.sum())
    if c == 0:
        return 0.0
    return float(nested_indicator_norms(p.samples[m], np.array([c]), p.grid.cell)[0])


_SERIES_TERMS = 26


def nested_indicator_norms(pv: np.ndarray, counts: np.ndarray, cell: float) -> np.ndarray:
    """Norms of nested indicator sets.

    ``pv`` holds exponent values in a fixed node order and ``E_k`` is the set
    of the first ``counts[k]`` of those nodes.  Returns ``||chi_{E_k}||``,
    i.e. the ``lam_k`` with ``cell * sum_{j < counts[k]} lam_k^-pv[j] = 1``.

    Each ``u_k = log(lam_k)`` is bracketed on a lattice of step ``1/p_plus``
    using exact prefix sums, then refined by bisection on a Taylor expansion
    of ``exp(-u p)`` about the cell midpoint.  On a lattice cell
    ``|du * p| <= 1/2``, so the truncated series is exact to far below
    double precision and all levels are solved with the same work.
    """
    pv = np.asarray(pv, float).ravel()
    counts = np.asarray(counts, int).ravel()
    if counts.size == 0:
        return np.zeros(0)
    pmin, pmax = float(pv[:counts.max()].min()), float(pv[:counts.max()].max())
    lm = np.log(counts * cell)
    if pmin == pmax:
        return np.exp(lm / pmin)
    lo = np.minimum(lm / pmin, lm / pmax)
    hi = np.maximum(lm / pmin, lm / pmax)
    if counts.size <= 48:
        return _direct_levels(pv, counts, cell, lo, hi, pmin, pmax)
    step = 1.0 / pmax
    w0 = math.floor(lo.min() / step) - 1
    w1 = math.ceil(hi.max() / step) + 1
    lattice = step * np.arange(w0, w1 + 1)
    idx = counts - 1
    lcell = math.log(cell)

    def logsum_at(u, weights=None):
        ref = pmax if u < 0 else pmin
        e = np.exp(-u * (pv - ref))
        if weights is not None:
            e = e * weights
        return -u * ref, np.cumsum(e)

    # F_k(u) = log(cell sum_{j<c_k} e^{-u p_j}) is decreasing in u
    F = np.empty((lattice.size, counts.size))
    for i, u in enumerate(lattice):
        shift, cs = logsum_at(u)
        F[i] = lcell + shift + np.log(cs[idx])
    # last lattice point with F >= 0
    win = np.sum(F >= 0, axis=0) - 1
    win = np.clip(win, 0, lattice.size - 2)
    out = np.empty(counts.size)
    q = pv / pmax
    fact = np.array([math.factorial(r) for r in range(_SERIES_TERMS)], float)
    for w in np.unique(win):
        sel = np.nonzero(win == w)[0]
        uref = lattice[w] + step / 2
        ref = pmax if uref < 0 else pmin
        base = np.exp(-uref * (pv - ref))
        M = np.empty((_SERIES_TERMS, sel.size))
        qr = np.ones_like(pv)
        for r in range(_SERIES_TERMS):
            M[r] = np.cumsum(base * qr)[idx[sel]] / fact[r]
            qr = qr * q
        const = lcell - uref * ref
        a = np.full(sel.size, -0.5)
        b = np.full(sel.size, 0.5)
        for _ in range(64):
            d = 0.5 * (a + b)
            # sum_r (-d)^r M_r by Horner
            s = M[-1].copy()
            for r in range(_SERIES_TERMS - 2, -1, -1):
                s = s * (-d) + M[r]
            pos = const + np.log(s) > 0
            a = np.where(pos, d, a)
            b = np.where(pos, b, d)
        out[sel] = uref + 0.5 * (a + b) * step
    return np.exp(out)


def _direct_levels(pv, counts, cell, lo, hi, pmin, pmax):
    # few levels: plain vectorized bisection on the exact sums
    cmax = int(counts.max())
    mask = np.arange(cmax)[None, :] < counts[:, None]
    p = pv[None, :cmax]
    a, b = lo - 1e-9, hi + 1e-9
    lcell = math.log(cell)
    for _ in range(80):
        u = 0.5 * (a + b)
        ref = np.where(u < 0, pmax, pmin)
        e = np.where(mask, np.exp(-u[:, None] * (p - ref[:, None])), 0.0)
        pos = lcell - u * ref + np.log(e.sum(axis=1)) > 0
        a = np.where(pos, u, a)
        b = np.where(pos, b, u)
    return np.exp(0.5 * (a + b))


def level_profile(f, p: ExponentField):
    """Distinct magnitudes ``v_k`` (descending) and ``||chi_{|f| >= v_k}||``."""
    a = _abs(f).ravel()
    order = np.argsort(-a, kind="stable")
    s = a[order]
    npos = int(np.count_nonzero(s > 0))
    if npos == 0:
        return np.zeros(0), np.zeros(0)
    s = s[:npos]
    # last index of each run of equal values
    ends = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    levels = s[ends]
    counts = ends + 1
    norms = nested_indicator_norms(p.samples.ravel()[order[:npos]], counts, p.grid.cell)
    return levels, norms


def weak_norm(f, p: ExponentField) -> NormResult:
    """Weak quasi-norm ``sup_a a ||chi_{|f|>a}||`` as an exact finite maximum."""
    levels, norms = level_profile(f, p)
    if levels.size == 0:
        return NormResult(0.0, "zero")
    prod = levels * norms
    k = int(np.argmax(prod))
    return NormResult(float(prod[k]), "level-max", levels.size, 0.0, float(levels[k]))


def lq_norm(f, q: float) -> float:
    """Classical ``L^q`` (quasi-)norm, ``q = inf`` allowed."""
    a = _abs(f)
    if np.isinf(q):
        return float(a.max()) if a.size else 0.0
    cell = f.grid.cell
    nz = a > 0
    if not nz.any():
        return 0.0
    # log-space for small q
    return float(math.exp((math.log(cell) + float(logsumexp(q * np.log(a[nz])))) / q))


# ---------------------------------------------------------------------------
# axiom checks

@dataclass
class AxiomReport:
    trials: int
    checks: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def count(self, name):
        self.checks[name] = self.checks.get(name, 0) + 1


def _leq(a, b, rtol=1e-12):
    return a <= b * (1 + rtol) + 1e-300


def power_triangle_check(fs, p: ExponentField, v: float | None = None, const: float = 4.0):
    """Power triangle ``||sum |f_j| ||^v <= const * sum ||f_j||^v`` in the weak norm.

    Returns ``(ok, v_used, lhs, rhs)``.  On a violation the exponent is
    halved (down to 1e-3) and the failure is logged.
    """
    if v is None:
        v = p.p_underline / (1 + p.p_underline)
    total = sum(np.abs(f.samples) for f in fs)
    lhs_n = weak_norm(total, p).value
    parts = [weak_norm(f, p).value for f in fs]
    while True:
        lhs = lhs_n ** v
        rhs = const * sum(x ** v for x in parts)
        if _leq(lhs, rhs) or v < 1e-3:
            return _leq(lhs, rhs), v, lhs, rhs
        log.warning("power-triangle exponent %.4g violated; halving", v)
        v /= 2


def fatou_check(fs, p: ExponentField, limit: GridFunction | None = None, tol: float = 1e-10,
                conv_tol: float = 1e-9):
    """Check ``||f|| <= liminf ||f_k|| + tol`` in the weak norm.

    The finite sequence must converge pointwise: the tail (its last quarter)
    must be within ``conv_tol * max|f|`` of the limit at every node.  When
    ``limit`` is omitted the last element serves as the limit.  The liminf is
    estimated by the minimum over the same tail.

    Returns
    -------
    dict with keys ``ok``, ``limit_norm``, ``liminf``, ``converged``.
    """
    fs = list(fs)
    if not fs:
        raise ValueError("empty sequence")
    f = fs[-1] if limit is None else limit
    tail = fs[len(fs) - max(1, len(fs) // 4):]
    scale = max(float(np.abs(f.samples).max()), 1e-300)
    err = max(float(np.abs(g.samples - f.samples).max()) for g in tail)
    converged = err <= conv_tol * scale
    if not converged:
        return {"ok": False, "converged": False, "limit_norm": float("nan"),
                "liminf": float("nan"), "reason": "sequence does not converge pointwise"}
    lim = weak_norm(f, p).value
    liminf = min(weak_norm(g, p).value for g in tail)
    return {"ok": lim <= liminf + tol, "converged": True, "limit_norm": lim, "liminf": liminf}


def quasinorm_axiom_report(p: ExponentField, trials: int = 200, seed: int = 0,
                           pieces: int = 8) -> AxiomReport:
    """Randomized check of the quasi-norm axioms.

    Per trial, with random piecewise-constant ``f, g`` and scalar ``lam``:
    homogeneity of both norms, the weak quasi-triangle with constant
    ``2^p_``, the strong ``p_``-triangle, reverse Minkowski for nonnegative
    pairs when ``p_plus < 1``, the power triangle on a small
    family, and the Fatou property along a monotone sequence.
    """
    from .banks import random_piecewise

    rng = np.random.default_rng(seed)
    rep = AxiomReport(trials)
    pu = p.p_underline
    g0 = p.grid
    zero = GridFunction.zeros(g0)
    if weak_norm(zero, p).value != 0 or luxemburg_norm(zero, p).value != 0:
        rep.violations.append(("zero", None))
    for t in range(trials):
        f = random_piecewise(g0, rng, pieces=pieces)
        g = random_piecewise(g0, rng, pieces=pieces)
        lam = float(rng.uniform(-3, 3))
        wf, wg = weak_norm(f, p).value, weak_norm(g, p).value
        sf, sg = luxemburg_norm(f, p).value, luxemburg_norm(g, p).value
        # homogeneity
        rep.count("homogeneity")
        for name, norm, base in (("weak", weak_norm, wf), ("strong", luxemburg_norm, sf)):
            val = norm(f * lam, p).value
            if abs(val - abs(lam) * base) > 1e-12 * abs(lam) * base:
                rep.violations.append((f"homogeneity-{name}", t))
        # weak quasi-triangle
        rep.count("weak-triangle")
        wsum = weak_norm(f + g, p).value
        if not _leq(wsum ** pu, 2 ** pu * (wf ** pu + wg ** pu)):
            rep.violations.append(("weak-triangle", t))
        # strong p_-triangle
        rep.count("p-triangle")
        ssum = luxemburg_norm(f + g, p).value
        if not _leq(ssum ** pu, sf ** pu + sg ** pu):
            rep.violations.append(("p-triangle", t))
        # weak never exceeds strong
        rep.count("weak<=strong")
        if not (_leq(wf, sf) and _leq(wg, sg)):
            rep.violations.append(("weak<=strong", t))
        if p.p_plus < 1:
            rep.count("reverse-minkowski")
            fa, ga = f.abs(), g.abs()
            lhs = luxemburg_norm(fa, p).value + luxemburg_norm(ga, p).value
            if not _leq(lhs, luxemburg_norm(fa + ga, p).value):
                rep.violations.append(("reverse-minkowski", t))
        rep.count("power-triangle")
        fam = [f, g] + [random_piecewise(g0, rng, pieces=pieces) for _ in range(2)]
        ok, v, _, _ = power_triangle_check(fam, p)
        if v != pu / (1 + pu):
            rep.notes.append(f"trial {t}: power-triangle exponent lowered to {v:.4g}")
        if not ok:
            rep.violations.append(("power-triangle", t))
        rep.count("fatou")
        seq = [f * (1 - 2.0 ** -j) for j in range(1, 64, 3)]
        fc = fatou_check(seq, p, limit=f)
        if not fc["ok"]:
            rep.violations.append(("fatou", t))
    return rep
