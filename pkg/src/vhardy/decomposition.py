"""Atoms, molecules, the tent-region atomic decomposition and molecule splitting.

Conventions
-----------
* Balls are open and measured by node quadrature: ``|B| = h^n #{nodes in B}``.
  Balls reaching past the box are clipped to it.
* Moment conditions use monomials recentred and rescaled to the ball,
  ``z = (x - x_B) / r_B``.  Vanishing of all moments of order ``<= s`` does not
  depend on the choice of polynomial basis, and this one is well conditioned.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exponent import ExponentField, default_moment_order
from .grid import Ball, DyadicCube, GridFunction, GridSpec, build_scale_stack, write_vgf
from .lp import AdmissibleProfile, lusin_area, uncovered_energy
from .norms import indicator_norm, lq_norm, luxemburg_norm

log = logging.getLogger(__name__)

__all__ = [
    "Atom", "Molecule", "AtomReport", "MoleculeReport", "DecompositionEntry",
    "AtomicDecomposition", "MoleculeSplit", "verify_atom", "verify_molecule",
    "synthesize_atom", "synthesize_molecule", "atomic_decompose", "reconstruct",
    "molecule_split", "decomposition_weak_norm", "atom_sum_bound_check",
    "default_moment_order", "annuli", "molecule_tail_fraction", "write_manifest",
    "MOMENT_TOL",
]

MOMENT_TOL = 1e-8
GRAM_COND_MAX = 1e12


# ---------------------------------------------------------------------------
# helpers

def multi_indices(dim: int, s: int) -> list:
    """All multi-indices with ``|alpha| <= s``, graded order."""
    if dim == 1:
        return [(a,) for a in range(s + 1)]
    return [(a, d - a) for d in range(s + 1) for a in range(d, -1, -1)]


def _scaled_coords(grid: GridSpec, ball: Ball, scale: float | None = None) -> list:
    r = ball.radius if scale is None else scale
    return [(c - x0) / r for c, x0 in zip(grid.coords(), ball.center)]


def _monomial(z, alpha):
    out = 1.0
    for zi, a in zip(z, alpha):
        out = out * zi ** a
    return out


def moments(f: np.ndarray, grid: GridSpec, ball: Ball, s: int, scale: float | None = None,
            mask=None) -> np.ndarray:
    """``h^n sum f(x) z^alpha`` over ``|alpha| <= s`` with ``z = (x - x_B)/scale``."""
    z = _scaled_coords(grid, ball, scale)
    w = f if mask is None else np.where(mask, f, 0.0)
    return np.array([float(np.sum(w * _monomial(z, a))) * grid.cell
                     for a in multi_indices(grid.dim, s)])


def _clip_mask(grid: GridSpec, ball: Ball) -> np.ndarray:
    return ball.mask(grid)


def _ball_measure(grid: GridSpec, ball: Ball) -> float:
    return float(_clip_mask(grid, ball).sum()) * grid.cell


# ---------------------------------------------------------------------------
# atoms

@dataclass(frozen=True, eq=False)
class Atom:
    """A candidate ``(p, q, s)``-atom on ``ball``."""

    samples: GridFunction
    ball: Ball
    q: float
    s: int
    size_slack: float = float("nan")

    @property
    def grid(self) -> GridSpec:
        return self.samples.grid


@dataclass(frozen=True)
class AtomReport:
    passed: bool
    support_ok: bool
    support_excess: float
    size_ok: bool
    size_ratio: float
    moments_ok: bool
    moment_residual: float
    moment_residuals: tuple = ()

    def __str__(self):
        return (f"AtomReport(passed={self.passed}, support_excess={self.support_excess:.3g}, "
                f"size_ratio={self.size_ratio:.4g}, moment_residual={self.moment_residual:.3g})")


def size_ratio(samples: np.ndarray, grid: GridSpec, ball: Ball, p: ExponentField, q: float,
               chi_norm: float | None = None) -> float:
    """``||a||_q ||chi_B|| / |B|^(1/q)``; the size condition reads ``<= C_slack``."""
    meas = _ball_measure(grid, ball)
    if meas == 0:
        return math.inf if np.any(samples) else 0.0
    k = indicator_norm(_clip_mask(grid, ball), p) if chi_norm is None else chi_norm
    a = lq_norm(GridFunction(grid, samples), q)
    return a * k / meas ** (0.0 if np.isinf(q) else 1.0 / q)


def verify_atom(atom: Atom, p: ExponentField, q: float | None = None, s: int | None = None,
                c_slack: float = 1.0, tol: float = MOMENT_TOL) -> AtomReport:
    """Check support, size and moment conditions of an atom candidate.

    Moment residuals are ``|h^n sum a z^alpha| / ||a||_1`` for ``|alpha| <= s``;
    the condition passes when all are ``<= tol``.
    """
    q = atom.q if q is None else q
    s = atom.s if s is None else s
    g = atom.grid
    a = np.asarray(atom.samples.samples, float)
    inside = _clip_mask(g, atom.ball)
    peak = float(np.abs(a).max()) if a.size else 0.0
    excess = float(np.abs(a[~inside]).max()) if (~inside).any() else 0.0
    support_ok = excess == 0.0
    ratio = size_ratio(a, g, atom.ball, p, q)
    size_ok = ratio <= c_slack
    l1 = float(np.abs(a).sum()) * g.cell
    if s < 0 or l1 == 0:
        res = np.zeros(0)
    else:
        res = np.abs(moments(a, g, atom.ball, s)) / l1
    worst = float(res.max()) if res.size else 0.0
    moments_ok = worst <= tol
    if peak == 0:
        support_ok, moments_ok = True, True
    return AtomReport(bool(support_ok and size_ok and moments_ok), support_ok, excess,
                      size_ok, ratio, moments_ok, worst, tuple(float(v) for v in res))


def _project_out(values: np.ndarray, z: list, s: int) -> np.ndarray:
    """Orthogonal projection of node values off the monomials of order ``<= s``."""
    if s < 0:
        return values
    A = np.stack([_monomial(z, a) for a in multi_indices(len(z), s)], axis=1)
    if A.shape[0] <= A.shape[1]:
        raise ValueError(f"ball holds {A.shape[0]} nodes, too few for moments up to order {s}")
    coef = np.linalg.lstsq(A, values, rcond=None)[0]
    out = values - A @ coef
    # one refinement pass removes the remaining rounding
    out -= A @ np.linalg.lstsq(A, out, rcond=None)[0]
    return out


def synthesize_atom(grid: GridSpec, ball: Ball, p: ExponentField, q: float = 2.0,
                    s: int | None = None, rng=None, fill: float = 0.9) -> Atom:
    """Random atom on ``ball``: windowed noise with moments projected out.

    The result is scaled so that the size ratio equals ``fill``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    s = default_moment_order(p) if s is None else s
    mask = _clip_mask(grid, ball)
    z = [c[mask] for c in _scaled_coords(grid, ball)]
    r2 = sum(c * c for c in z)
    v = rng.standard_normal(int(mask.sum())) * (1 - r2) + rng.uniform(-1, 1) * np.cos(np.pi * z[0])
    v = _project_out(v, z, s)
    a = np.zeros(grid.shape)
    a[mask] = v
    ratio = size_ratio(a, grid, ball, p, q)
    a *= fill / ratio
    return Atom(GridFunction(grid, a), ball, q, s, fill)


# ---------------------------------------------------------------------------
# molecules

def annuli(grid: GridSpec, ball: Ball) -> list:
    """Node masks of ``U_0 = B`` and ``U_j = 2^j B \\ 2^(j-1) B`` until the box is covered."""
    d = grid.radius(ball.center)
    out = [d < ball.radius]
    j = 1
    while 2 ** (j - 1) * ball.radius <= d.max():
        out.append((d < 2 ** j * ball.radius) & (d >= 2 ** (j - 1) * ball.radius))
        j += 1
    return out


def _annulus_volume(n: int, r: float, j: int) -> float:
    v = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    if j == 0:
        return v * r ** n
    return v * (2 ** j * r) ** n * (1 - 2.0 ** -n)


def molecule_tail_fraction(grid: GridSpec, ball: Ball, q: float, eps: float) -> float:
    """Share of the decay-law ``L^q`` budget lying in annuli that leave the box.

    The budget of annulus ``j`` is ``2^(-j eps) |U_j|^(1/q)``; an annulus
    leaves the box when ``2^j r_B`` exceeds the distance from the centre to
    the nearest box face.
    """
    n = grid.dim
    edge = grid.half_width - float(np.max(np.abs(ball.center)))
    iq = 0.0 if np.isinf(q) else 1.0 / q
    terms = []
    for j in range(0, 200):
        terms.append(2.0 ** (-j * eps) * _annulus_volume(n, ball.radius, j) ** iq)
        if terms[-1] < 1e-300:
            break
    terms = np.array(terms)
    j_out = 0
    while 2 ** j_out * ball.radius <= edge and j_out < len(terms):
        j_out += 1
    return float(terms[j_out:].sum() / terms.sum())


@dataclass(frozen=True, eq=False)
class Molecule:
    samples: GridFunction
    ball: Ball
    q: float
    s: int
    eps: float
    annulus_norms: tuple = ()

    @property
    def grid(self) -> GridSpec:
        return self.samples.grid


@dataclass(frozen=True)
class MoleculeReport:
    passed: bool
    decay_ok: bool
    decay_ratios: tuple
    moments_ok: bool
    moment_residual: float
    tail_fraction: float

    def __str__(self):
        worst = max(self.decay_ratios) if self.decay_ratios else 0.0
        return (f"MoleculeReport(passed={self.passed}, worst_decay_ratio={worst:.4g}, "
                f"moment_residual={self.moment_residual:.3g})")


def _decay_ratios(m: np.ndarray, grid: GridSpec, ball: Ball, p: ExponentField, q: float,
                  eps: float) -> list:
    chi = indicator_norm(_clip_mask(grid, ball), p)
    iq = 0.0 if np.isinf(q) else 1.0 / q
    out = []
    for j, U in enumerate(annuli(grid, ball)):
        cnt = int(U.sum())
        if cnt == 0:
            out.append(0.0)
            continue
        nrm = lq_norm(GridFunction(grid, np.where(U, m, 0.0)), q)
        bound = 2.0 ** (-j * eps) * (cnt * grid.cell) ** iq / chi
        out.append(nrm / bound)
    return out


def verify_molecule(mol: Molecule, p: ExponentField, q: float | None = None,
                    s: int | None = None, eps: float | None = None, c_slack: float = 1.0,
                    tol: float = MOMENT_TOL) -> MoleculeReport:
    """Per-annulus decay checks up to the box edge plus moment checks."""
    q = mol.q if q is None else q
    s = mol.s if s is None else s
    eps = mol.eps if eps is None else eps
    g = mol.grid
    m = np.asarray(mol.samples.samples, float)
    ratios = _decay_ratios(m, g, mol.ball, p, q, eps)
    decay_ok = all(r <= c_slack for r in ratios)
    l1 = float(np.abs(m).sum()) * g.cell
    res = np.abs(moments(m, g, mol.ball, s)) / l1 if l1 > 0 and s >= 0 else np.zeros(0)
    worst = float(res.max()) if res.size else 0.0
    tail = molecule_tail_fraction(g, mol.ball, q, eps)
    return MoleculeReport(bool(decay_ok and worst <= tol), decay_ok, tuple(ratios),
                          worst <= tol, worst, tail)


def synthesize_molecule(grid: GridSpec, ball: Ball, p: ExponentField, q: float = 2.0,
                        s: int | None = None, eps: float | None = None, rng=None,
                        fill: float = 0.9) -> Molecule:
    """Random molecule: independent noise on every annulus at the decay-law size,
    with the total moments cancelled on ``B`` only.

    Individual annuli keep nonzero moments, so splitting it is not trivial.
    The whole function is scaled to a worst decay ratio of ``fill``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    s = default_moment_order(p) if s is None else s
    eps = grid.dim + s + 2 if eps is None else eps
    chi = indicator_norm(_clip_mask(grid, ball), p)
    iq = 0.0 if np.isinf(q) else 1.0 / q
    m = np.zeros(grid.shape)
    for j, U in enumerate(annuli(grid, ball)):
        cnt = int(U.sum())
        if cnt == 0:
            continue
        v = rng.standard_normal(cnt) + rng.uniform(0.5, 1.5)
        bound = 2.0 ** (-j * eps) * (cnt * grid.cell) ** iq / chi
        piece = np.zeros(grid.shape)
        piece[U] = v
        piece *= rng.uniform(0.3, 1.0) * bound / lq_norm(GridFunction(grid, piece), q)
        m += piece
    # cancel the total moments with a polynomial on B
    B = annuli(grid, ball)[0]
    z = [c[B] for c in _scaled_coords(grid, ball)]
    A = np.stack([_monomial(z, a) for a in multi_indices(grid.dim, s)], axis=1) * grid.cell
    tot = moments(m, grid, ball, s)
    corr = A @ np.linalg.lstsq(A.T @ A, tot, rcond=None)[0]
    m[B] -= corr
    m[B] -= A @ np.linalg.lstsq(A.T @ A, moments(m, grid, ball, s), rcond=None)[0]
    ratios = _decay_ratios(m, grid, ball, p, q, eps)
    m *= fill / max(ratios)
    norms = tuple(r * fill / max(ratios) for r in ratios)
    return Molecule(GridFunction(grid, m), ball, q, s, eps, norms)


@dataclass
class MoleculeSplit:
    """Pieces of a molecule: ``m = sum mu_k a_k + sum_{l,k} mu_l^k a_l^k``."""

    coefficients: list
    atoms: list
    labels: list
    projection_norms: list = field(default_factory=list)
    projection_moment_residual: float = 0.0
    total_moments: np.ndarray | None = None
    reports: list = field(default_factory=list)
    constant: float = 1.0
    merged_tail: bool = False  # final sliver annulus absorbed into its neighbour

    def sum(self) -> np.ndarray:
        return sum(c * a.samples.samples for c, a in zip(self.coefficients, self.atoms))


def _gram_cond(g: GridSpec, z, U, k: int, idx) -> float:
    if not U.any():
        return float("inf")
    y = [c[U] / 2.0 ** k for c in z]
    V = np.stack([_monomial(y, a) for a in idx], axis=1)
    return float(np.linalg.cond(V.T @ V * g.cell))


def molecule_split(mol: Molecule, p: ExponentField, c_slack: float = 4.0,
                   constant: float = 1.0, tail_tol: float = 1e-6) -> MoleculeSplit:
    """Split a molecule into atoms via annulus projections and telescoped tails.

    For each annulus ``U_k`` a dual basis ``Q_{beta,k}`` of polynomials with
    ``(1/|U_k|) int_{U_k} z^gamma Q_{beta,k} = delta`` gives the projection
    ``P_k``; ``m_k - P_k`` has vanishing moments.  The projections are then
    rewritten by summation by parts with tail moments
    ``N_beta^j = sum_{k >= j} int_{U_k} m z^beta``.

    Coefficients are ``mu_k = C 2^(-k eps) ||chi_{2^k B}|| / ||chi_B||`` and
    ``mu_l^k = 2^(-k eps) ||chi_{2^(k+1) B}|| / ||chi_B||`` with ``C = constant``.

    Raises
    ------
    ValueError
        If a Gram matrix is too ill conditioned, or if the decay budget
        outside the box exceeds ``tail_tol``.
    """
    g = mol.grid
    m = np.asarray(mol.samples.samples, float)
    ball, s, q, eps = mol.ball, mol.s, mol.q, mol.eps
    tail = molecule_tail_fraction(g, ball, q, eps)
    if tail > tail_tol:
        raise ValueError(f"molecule decay budget outside the box is {tail:.3g} > {tail_tol:g}")
    idx = multi_indices(g.dim, s)
    Us = annuli(g, ball)
    z = _scaled_coords(g, ball)
    merged = False
    if len(Us) > 1 and _gram_cond(g, z, Us[-1], len(Us) - 1, idx) > GRAM_COND_MAX:
        # a final sliver too thin to carry the moments joins its neighbour
        Us = Us[:-2] + [Us[-2] | Us[-1]]
        merged = True
    K = len(Us) - 1
    chi0 = indicator_norm(_clip_mask(g, ball), p)
    mom = np.zeros((K + 1, len(idx)))
    phis, Ps, pieces_k = [], [], []
    proj_res = 0.0
    for k, U in enumerate(Us):
        mk = np.where(U, m, 0.0)
        cnt = int(U.sum())
        meas = cnt * g.cell
        if cnt == 0:
            raise ValueError(f"annulus {k} holds no nodes")
        y = [c[U] / 2.0 ** k for c in z]
        V = np.stack([_monomial(y, a) for a in idx], axis=1)
        G = V.T @ V * g.cell
        cond = np.linalg.cond(G)
        if not cond <= GRAM_COND_MAX:
            raise ValueError(f"annulus {k}: Gram condition number {cond:.3g} exceeds "
                             f"{GRAM_COND_MAX:g} (annulus too thin on the grid)")
        A = meas * np.linalg.inv(G)  # row beta: coefficients of Q_beta in y-monomials
        my = V.T @ m[U] * g.cell
        mom[k] = my * np.array([2.0 ** (k * sum(a)) for a in idx])
        phi_k = []
        for b, a in enumerate(idx):
            f = np.zeros(g.shape)
            f[U] = (V @ A[b]) / meas * 2.0 ** (-k * sum(a))
            phi_k.append(f)
        phis.append(phi_k)
        P = np.zeros(g.shape)
        P[U] = V @ (A.T @ my) / meas
        Ps.append(P)
        d = mk - P
        dres = V.T @ d[U] * g.cell
        l1 = max(float(np.abs(mk).sum()) * g.cell, 1e-300)
        proj_res = max(proj_res, float(np.abs(dres).max()) / l1 if np.any(mk) else 0.0)
        pieces_k.append(d)
    N = np.zeros((K + 2, len(idx)))
    for j in range(K, -1, -1):
        N[j] = N[j + 1] + mom[j]
    coefs, atoms, labels, reports = [], [], [], []
    for k in range(K + 1):
        bk = ball.dilate(2.0 ** (k + 1 if merged and k == K else k))
        mu = constant * 2.0 ** (-k * eps) * indicator_norm(_clip_mask(g, bk), p) / chi0
        a = Atom(GridFunction(g, pieces_k[k] / mu), bk, q, s)
        coefs.append(mu)
        atoms.append(a)
        labels.append(("k", k))
    for b, a_idx in enumerate(idx):
        for k in range(K + 1):
            bk = ball.dilate(2.0 ** (k + 2 if merged and k + 1 == K else k + 1))
            mu = 2.0 ** (-k * eps) * indicator_norm(_clip_mask(g, bk), p) / chi0
            if k < K:
                piece = N[k + 1, b] * (phis[k + 1][b] - phis[k][b])
            else:
                piece = np.zeros(g.shape)  # N^(K+1) = 0
            atoms.append(Atom(GridFunction(g, piece / mu), bk, q, s))
            coefs.append(mu)
            labels.append((a_idx, k))
    for a in atoms:
        rep = verify_atom(a, p, q, s, c_slack)
        reports.append(rep)
        object.__setattr__(a, "size_slack", rep.size_ratio)
    out = MoleculeSplit(coefs, atoms, labels, [float(np.abs(P).max()) for P in Ps],
                        proj_res, N[0].copy(), reports, constant, merged)
    bad = [i for i, r in enumerate(reports) if not r.passed]
    if bad:
        log.warning("molecule_split: %d pieces fail verification, first %s: %s",
                    len(bad), labels[bad[0]], reports[bad[0]])
    return out


# ---------------------------------------------------------------------------
# tent-region atomic decomposition

@dataclass(frozen=True, eq=False)
class DecompositionEntry:
    level: int
    index: int
    coefficient: float
    atom: Atom
    cube: DyadicCube


@dataclass
class AtomicDecomposition:
    grid: GridSpec
    entries: list
    level_norms: dict
    overlap: dict
    reports: list
    tent_max_visits: int = 0
    dropped_levels: int = 0
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def scaled(self, c: float) -> "AtomicDecomposition":
        ents = [DecompositionEntry(e.level, e.index, c * e.coefficient, e.atom, e.cube)
                for e in self.entries]
        return AtomicDecomposition(self.grid, ents, self.level_norms, self.overlap,
                                   self.reports, self.tent_max_visits, self.dropped_levels,
                                   dict(self.info))


def _cube_ball(cube: DyadicCube, grid: GridSpec) -> Ball:
    """Ball containing ``e_Q`` for every ``Q`` inside ``cube`` (tent scale ``2 l(Q)``)."""
    return Ball(cube.center(grid), (math.sqrt(grid.dim) / 2 + 2) * cube.side)


def _level_index(v: np.ndarray) -> np.ndarray:
    """``i`` with ``2^i < v <= 2^(i+1)`` (``v > 0``)."""
    mant, ex = np.frexp(v)  # v = mant * 2^ex, mant in [0.5, 1)
    i = ex - 1  # 2^i <= v < 2^(i+1)
    exact = mant == 0.5
    return np.where(exact, i - 1, i)


def _cube_levels(S: np.ndarray, grid: GridSpec, g: int) -> np.ndarray:
    """Level ``i`` of every cube of generation ``g`` (``INT_MIN`` where none).

    ``Q`` is in level ``i`` iff at least half its nodes have ``S > 2^i`` and
    fewer than half have ``S > 2^(i+1)``; that is ``i`` is fixed by the
    ``ceil(m/2)``-th largest value ``v`` of ``S`` on ``Q`` via ``2^i < v <= 2^(i+1)``.
    """
    m = grid.points >> g
    c = grid.points // m
    if grid.dim == 1:
        blocks = S.reshape(c, m)
    else:
        blocks = S.reshape(c, m, c, m).transpose(0, 2, 1, 3).reshape(c, c, m * m)
    cnt = m ** grid.dim
    kth = np.sort(blocks, axis=-1)[..., cnt - (cnt + 1) // 2]
    out = np.full(kth.shape, np.iinfo(np.int64).min, dtype=np.int64)
    pos = kth > 0
    out[pos] = _level_index(kth[pos])
    return out


def _centred(kernel: np.ndarray) -> np.ndarray:
    """Offset-indexed kernel cut to its support, centred for ``ndimage.convolve``."""
    k = np.fft.fftshift(kernel)
    c = k.shape[0] // 2
    idx = np.nonzero(k)
    r = max(int(np.abs(i - c).max()) for i in idx)
    return k[(slice(c - r, c + r + 1),) * k.ndim]


def atomic_decompose(f: GridFunction, p: ExponentField, profile: AdmissibleProfile,
                     k_range, q: float = 2.0, s: int | None = None, c_slack: float = 4.0,
                     level_depth: int = 24, band_tol: float = 1e-2,
                     edge_tol: float = 1e-10) -> AtomicDecomposition:
    """Atomic decomposition driven by the Lusin area function.

    Levels are ``Omega_i = {S(f) > 2^i}``.  A dyadic cube is in level ``i`` by
    the two half-measure conditions.  Each cube ``Q`` owns the tent layer at
    the single ladder scale ``t = 2 l(Q)`` over its nodes.  The atom of a
    maximal cube collects ``e_Q = ln2 * sum_{y in Q} (f*phi_t)(y) phi_t(. - y) h^n``
    over its level's subcubes and is divided by ``2^i ||chi_B||``.

    Levels more than ``level_depth`` octaves below ``max S`` are dropped.

    Raises
    ------
    ValueError
        If ``f`` has more than ``band_tol`` of its energy outside the band
        covered by the ladder, if a tent layer is not negligible within
        ``t`` of the box faces, if ``s`` exceeds the profile's moment order,
        or if an atom misses verification at ``2 * c_slack``.
    """
    g = f.grid
    n = g.dim
    s = default_moment_order(p) if s is None else s
    if s > profile.moment_order:
        raise ValueError(f"profile cancels moments to order {profile.moment_order} < s = {s}")
    k_min, k_max = k_range
    if not np.any(f.samples):
        return AtomicDecomposition(g, [], {}, {}, [])
    stack = build_scale_stack(f, profile, k_min, k_max)
    miss = uncovered_energy(stack)
    if miss > band_tol:
        raise ValueError(f"{100 * miss:.3g}% of the energy lies outside the ladder band; "
                         "tents at the required scales fall outside the ladder")
    S = lusin_area(stack).samples
    smax = float(S.max())
    i_top = int(_level_index(np.array([smax]))[0])
    i_low = i_top - level_depth
    gens = {}
    for gi in range(0, g.depth + 1):
        gens[gi] = _cube_levels(S, g, gi)
    # ladder scale t = 2 l(Q)   <=>   generation g = log2(4L/t)
    scale_gen = {}
    for k in stack.ks:
        gg = int(round(math.log2(4 * g.half_width * 2.0 ** k)))
        if not 0 <= gg <= g.depth:
            raise ValueError(f"ladder scale 2^{-k} has no dyadic cube generation")
        scale_gen[k] = gg
    visits = np.zeros(stack.layers.shape, np.int32)
    dropped = 0
    entries, reports = [], []
    levels = sorted({int(v) for arr in gens.values() for v in np.unique(arr)
                     if v != np.iinfo(np.int64).min})
    kernels = {k: _centred(profile.sample(g, 2.0 ** -k)) for k in stack.ks}
    # tent nodes whose e_Q would leave the box are dropped; their mass must be negligible
    interior = {}
    total = float(np.abs(stack.layers).sum())
    lost = 0.0
    for kk, k in enumerate(stack.ks):
        r = kernels[k].shape[0] // 2
        ok = np.zeros(g.shape, bool)
        ok[(slice(r, g.points - r),) * n] = True
        interior[k] = ok
        lost += float(np.abs(stack.layers[kk][~ok]).sum())
    if total > 0 and lost > edge_tol * total:
        raise ValueError(f"tent layers reach the box edge (mass fraction {lost / total:.3g}); "
                         "shrink the support or the ladder")

    for i in levels:
        if i < i_low:
            dropped += 1
            continue
        # maximal cubes of level i
        maximal = []
        covered = {gi: np.zeros(arr.shape, bool) for gi, arr in gens.items()}
        for gi in range(0, g.depth + 1):
            inlvl = gens[gi] == i
            if gi > 0:
                up = np.repeat(covered[gi - 1], 2, axis=0)
                if n == 2:
                    up = np.repeat(up, 2, axis=1)
                covered[gi] = up
            new = inlvl & ~covered[gi]
            for idx in zip(*np.nonzero(new)):
                maximal.append(DyadicCube(gi, tuple(int(c) for c in idx),
                                          2 * g.half_width / 2 ** gi))
            covered[gi] = covered[gi] | inlvl
        level_masks = {}
        for k, gg in scale_gen.items():
            m = g.points >> gg
            node = np.repeat(gens[gg] == i, m, axis=0)
            if n == 2:
                node = np.repeat(node, m, axis=1)
            level_masks[k] = node
        for j, Q in enumerate(maximal):
            qmask = Q.mask(g)
            acc = np.zeros(g.shape)
            any_tent = False
            for kk, k in enumerate(stack.ks):
                if scale_gen[k] < Q.generation:
                    continue
                sel = level_masks[k] & qmask & interior[k]
                if not sel.any():
                    continue
                any_tent = True
                visits[kk][sel] += 1
                c = np.where(sel, stack.layers[kk], 0.0)
                # direct sum: exact support and rounding relative to local values
                e = ndimage.convolve(c, kernels[k], mode="constant", cval=0.0)
                acc += math.log(2.0) * g.cell * e
            if not any_tent:
                continue
            ball = _cube_ball(Q, g)
            lam = 2.0 ** i * indicator_norm(_clip_mask(g, ball), p)
            atom = Atom(f.like(acc / lam), ball, q, s)
            rep = verify_atom(atom, p, q, s, c_slack)
            object.__setattr__(atom, "size_slack", rep.size_ratio)
            if not rep.passed:
                rep2 = verify_atom(atom, p, q, s, 2 * c_slack)
                if not rep2.passed:
                    raise ValueError(f"atom ({i},{j}) misses verification at 2*C_slack: {rep2}; "
                                     "the scale ladder is truncated too aggressively")
            entries.append(DecompositionEntry(i, len([e for e in entries if e.level == i]),
                                              lam, atom, Q))
            reports.append(rep)
    level_norms, overlap = {}, {}
    for i in sorted({e.level for e in entries}):
        cnt = np.zeros(g.shape)
        for e in entries:
            if e.level == i:
                cnt += _clip_mask(g, e.atom.ball)
        overlap[i] = int(cnt.max())
        level_norms[i] = indicator_norm(cnt > 0, p)
    covered_mass = float(np.abs(stack.layers[visits > 0]).sum())
    total_mass = float(np.abs(stack.layers).sum())
    info = {"S_max": smax, "levels": len(level_norms), "uncovered_energy": miss,
            "tent_coverage": covered_mass / total_mass if total_mass else 1.0,
            "edge_loss": lost / total if total else 0.0}
    return AtomicDecomposition(g, entries, level_norms, overlap, reports,
                               int(visits.max()), dropped, info)


def reconstruct(d: AtomicDecomposition) -> GridFunction:
    """``sum lambda_ij a_ij`` in ``(i, j)`` order."""
    out = np.zeros(d.grid.shape)
    for e in sorted(d.entries, key=lambda e: (e.level, e.index)):
        out = out + e.coefficient * e.atom.samples.samples
    return GridFunction(d.grid, out)


def decomposition_weak_norm(d: AtomicDecomposition, p: ExponentField) -> float:
    """``sup_i 2^i ||sum_j chi_{B_ij}||``."""
    best = 0.0
    for i in sorted({e.level for e in d.entries}):
        cnt = np.zeros(d.grid.shape)
        for e in d.entries:
            if e.level == i:
                cnt += _clip_mask(d.grid, e.atom.ball)
        best = max(best, 2.0 ** i * luxemburg_norm(GridFunction(d.grid, cnt), p).value)
    return best


def atom_sum_bound_check(balls, coefficients, functions, r: float, p: ExponentField,
                       q: float) -> dict:
    """Ratio ``||(sum |l_j a_j|^r)^(1/r)|| / ||(sum |l_j chi_Bj|^r)^(1/r)||``.

    Checks the hypotheses ``supp a_j in B_j`` and ``||a_j||_q <= |B_j|^(1/q)``.
    """
    if not 0 < r <= p.p_underline + 1e-15:
        raise ValueError(f"r must lie in (0, {p.p_underline:g}]")
    if not q > p.p_plus:
        raise ValueError("q must exceed p_plus")
    g = p.grid
    lhs = np.zeros(g.shape)
    rhs = np.zeros(g.shape)
    worst_size = 0.0
    for B, lam, a in zip(balls, coefficients, functions):
        av = np.asarray(a.samples if isinstance(a, GridFunction) else a, float)
        mask = _clip_mask(g, B)
        if np.any(av[~mask]):
            raise ValueError("function not supported in its ball")
        meas = float(mask.sum()) * g.cell
        sz = lq_norm(GridFunction(g, av), q) / meas ** (0.0 if np.isinf(q) else 1.0 / q)
        worst_size = max(worst_size, sz)
        lhs += np.abs(lam * av) ** r
        rhs += np.abs(lam) ** r * mask
    L = luxemburg_norm(GridFunction(g, lhs ** (1 / r)), p).value
    R = luxemburg_norm(GridFunction(g, rhs ** (1 / r)), p).value
    return {"lhs": L, "rhs": R, "ratio": L / R if R > 0 else float("nan"),
            "size_ok": worst_size <= 1 + 1e-12, "worst_size": worst_size}


# ---------------------------------------------------------------------------
# manifest

def write_manifest(d: AtomicDecomposition, out_dir) -> Path:
    """CSV of ``(i, j, lambda, center, radius, file)`` plus one VGF1 file per atom."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "lambda", "center", "radius", "file"])
        for e in sorted(d.entries, key=lambda e: (e.level, e.index)):
            name = f"atom_{e.level}_{e.index}.vgf"
            write_vgf(out / name, e.atom.samples)
            w.writerow([e.level, e.index, repr(e.coefficient),
                        " ".join(repr(c) for c in e.atom.ball.center),
                        repr(e.atom.ball.radius), name])
    return path
