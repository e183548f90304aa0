"""Admissible profiles and Littlewood-Paley square functions on dyadic ladders.

Continuous ``dt/t`` integrals are discretized as ``ln 2 * sum_k`` over
``t_k = 2^-k``.  The cone, weighted and Peetre sums are computed as direct
sums of nonnegative terms so that the pointwise comparisons between the
square functions hold exactly as computed.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares
from scipy.special import j0

from .grid import GridFunction, GridSpec, Profile, ScaleStack, unit_ball_volume

log = logging.getLogger(__name__)

LN2 = math.log(2.0)

__all__ = [
    "AdmissibleProfile", "make_admissible_profile", "required_moment_order",
    "g_function", "lusin_area", "g_lambda_star", "peetre_maximal", "g_a_star",
    "vanishing_at_infinity_check", "ladder_multiplier", "fit_dual_profile",
    "reproducing_residual", "default_lambda", "uncovered_energy", "pointwise_chains",
    "cone_volume_bound",
]


def required_moment_order(p_minus: float, n: int) -> int:
    """``max(floor(n/p_minus - n - 1), 0)``."""
    return max(int(math.floor(n / p_minus - n - 1 + 1e-12)), 0)


def default_lambda(p_minus: float) -> float:
    return 1 + 2 / min(p_minus, 2.0) + 0.5


# ---------------------------------------------------------------------------
# radial transforms

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(2400)
_R = 0.5 * (_GL_NODES + 1.0)
_W = 0.5 * _GL_WEIGHTS


def _radial_fourier(values_r, xi, n):
    """Fourier transform of a radial function supported in the unit ball.

    ``values_r`` are samples at the Gauss-Legendre radii ``_R``; the
    transform uses the ``exp(-2 pi i x xi)`` convention.
    """
    xi = np.asarray(xi, float)
    arg = 2 * np.pi * np.outer(xi, _R)
    if n == 1:
        return 2 * (np.cos(arg) * (_W * values_r)).sum(axis=1)
    return 2 * np.pi * (j0(arg) * (_W * _R * values_r)).sum(axis=1)


def _radial_moment(values_r, power, n):
    if n == 1:
        return 2 * float(np.sum(_W * values_r * _R ** power))
    return 2 * np.pi * float(np.sum(_W * values_r * _R ** (power + 1)))


_OCTAVE = np.exp(np.linspace(0.0, LN2, 64, endpoint=False))
_KS = np.arange(-7, 25)


@lru_cache(maxsize=None)
def _fit_coefficients(n: int, K: int, J: int, nmom: int, restarts: int = 12):
    bump = (1 - _R ** 2) ** K
    basis = np.array([bump * _R ** (2 * j) for j in range(J + 1)])
    M = np.array([[_radial_moment(b, 2 * i, n) for b in basis] for i in range(nmom)])
    null = np.linalg.svd(M)[2][nmom:].T
    xi = np.concatenate([_OCTAVE * 2.0 ** -k for k in _KS])
    F = np.array([_radial_fourier(b, xi, n) for b in basis]).T @ null
    F = F.reshape(len(_KS), len(_OCTAVE), -1)

    def resid(c):
        return LN2 * ((F @ c) ** 2).sum(axis=0) - 1.0

    rng = np.random.default_rng(12345)
    best = None
    for _ in range(restarts):
        c0 = rng.standard_normal(null.shape[1])
        c0 /= math.sqrt(float(np.mean(resid(c0) + 1.0)))
        sol = least_squares(resid, c0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        r = float(np.abs(resid(sol.x)).max())
        if best is None or r < best[0]:
            best = (r, sol.x)
    coef = null @ best[1]
    return tuple(float(c) for c in coef)


class AdmissibleProfile(Profile):
    """Radial ``phi = (1-|x|^2)_+^K * sum_j c_j |x|^(2j)`` supported in the unit ball.

    The coefficients make the low even moments vanish and fit the dyadic
    Calderón sum ``ln2 * sum_k |phi_hat(2^-k xi)|^2`` to 1.  Odd moments
    vanish by symmetry, so the guaranteed moment order is odd.

    Every dilate sampled on a grid is corrected, on its own support, so that
    the discrete moments up to ``moment_order`` vanish to rounding.
    """

    name = "admissible"
    reach = 1.0

    def __init__(self, dim: int, required: int = 0, K: int = 8, J: int = 5):
        super().__init__(dim)
        self.K, self.J = K, J
        self.required = required
        nmom = required // 2 + 1
        self.moment_order = 2 * (required // 2) + 1
        self.coef = np.array(_fit_coefficients(dim, K, J, nmom))
        self._nmom = nmom

    def radial(self, r):
        r = np.asarray(r, float)
        r2 = r * r
        poly = sum(c * r2 ** j for j, c in enumerate(self.coef))
        return np.where(r2 < 1, np.clip(1 - r2, 0, None) ** self.K * poly, 0.0)

    def evaluate(self, *coords):
        return self.radial(np.sqrt(sum(c * c for c in coords)))

    def fourier(self, xi):
        """Continuous transform at radial frequency ``|xi|``."""
        return _radial_fourier(self.radial(_R), np.abs(np.asarray(xi, float)), self.dim)

    def calderon_sum(self, xi, ks=None):
        # beyond 2^8 the transform is below 1e-20 (decay |xi|^-(K+1)) and the
        # fixed quadrature would alias, so the sum stops there
        ks = _KS if ks is None else np.asarray(ks)
        xi = np.asarray(xi, float)
        return LN2 * sum(self.fourier(xi * 2.0 ** -k) ** 2 for k in ks)

    @property
    def calderon_residual(self) -> float:
        """sup over an octave of ``|ln2 sum_k |phi_hat(2^-k xi)|^2 - 1|``."""
        xi = np.exp(np.linspace(0.0, LN2, 257))
        return float(np.abs(self.calderon_sum(xi) - 1.0).max())

    def continuous_moments(self):
        v = self.radial(_R)
        return [_radial_moment(v, 2 * i, self.dim) for i in range(self._nmom)]

    def sample(self, grid: GridSpec, t: float) -> np.ndarray:
        z = [c / t for c in grid.offsets()]
        k = self.evaluate(*z) / t ** grid.dim
        w = np.clip(1 - sum(c * c for c in z), 0, None) ** self.K
        sup = w > 0
        if not sup.any():
            return k
        zs = [c[sup] for c in z]
        mons = _monomials(zs, self.moment_order)
        A = np.array([w[sup] * m for m in mons])  # correction directions
        G = np.array([[np.dot(a, m) for a in A] for m in mons])
        rhs = np.array([np.dot(k[sup], m) for m in mons])
        c = np.linalg.lstsq(G, rhs, rcond=None)[0]
        out = k.copy()
        out[sup] = k[sup] - c @ A
        return out

    def discrete_moments(self, grid: GridSpec, t: float) -> np.ndarray:
        z = grid.offsets()
        k = self.sample(grid, t)
        mons = _monomials([c / t for c in z], self.moment_order)
        return np.array([np.sum(k * m) * grid.cell for m in mons])


def _monomials(zs, order):
    if len(zs) == 1:
        return [zs[0] ** j for j in range(order + 1)]
    x, y = zs
    return [x ** a * y ** b for a in range(order + 1) for b in range(order + 1 - a)]


def make_admissible_profile(p_minus: float, grid: GridSpec, K: int = 8, J: int = 5,
                            tol: float = 0.05) -> AdmissibleProfile:
    """Admissible profile for exponents with lower bound ``p_minus``.

    Raises
    ------
    ValueError
        If the fitted Calderón residual exceeds ``tol``.
    """
    req = required_moment_order(p_minus, grid.dim)
    prof = AdmissibleProfile(grid.dim, req, K, J)
    res = prof.calderon_residual
    if res > tol:
        raise ValueError(f"profile rejected: calderon residual {res:.3g} > {tol}")
    return prof


def ladder_multiplier(profile: Profile, grid: GridSpec, ks) -> tuple:
    """Discrete multiplier ``ln2 * sum_k |kappa_hat_k(xi)|^2`` of a finite ladder.

    ``kappa_k`` is the grid kernel at scale ``2^-k``.  Returns the radial
    frequency array and the multiplier on the doubled-box FFT lattice.
    """
    m = 0.0
    for k in ks:
        kh = np.fft.fftn(profile.sample(grid, 2.0 ** -k)) * grid.cell
        m = m + np.abs(kh) ** 2
    xi = np.fft.fftfreq(2 * grid.points, d=grid.spacing)
    if grid.dim == 1:
        r = np.abs(xi)
    else:
        a, b = np.meshgrid(xi, xi, indexing="ij")
        r = np.hypot(a, b)
    return r, LN2 * m


def fit_dual_profile(phi: AdmissibleProfile, K: int = 6, J: int = 4) -> AdmissibleProfile:
    """A second radial profile ``psi`` with ``ln2 sum_k psi_hat phi_hat = 1``.

    The pairing is linear in the coefficients of ``psi``, so this is a
    linear least-squares fit (again with vanishing mean).
    """
    n = phi.dim
    bump = (1 - _R ** 2) ** K
    basis = np.array([bump * _R ** (2 * j) for j in range(J + 1)])
    M = np.array([[_radial_moment(b, 0, n) for b in basis]])
    null = np.linalg.svd(M)[2][1:].T
    xi = np.concatenate([_OCTAVE * 2.0 ** -k for k in _KS])
    F = np.array([_radial_fourier(b, xi, n) for b in basis]).T @ null
    ph = phi.fourier(xi)
    A = LN2 * (F * ph[:, None]).reshape(len(_KS), len(_OCTAVE), -1).sum(axis=0)
    c = np.linalg.lstsq(A, np.ones(len(_OCTAVE)), rcond=None)[0]
    out = object.__new__(AdmissibleProfile)
    Profile.__init__(out, n)
    out.K, out.J, out.required, out._nmom, out.moment_order = K, J, 0, 1, 1
    out.coef = null @ c
    return out


def reproducing_residual(psi: AdmissibleProfile, phi: AdmissibleProfile) -> float:
    """sup over an octave of ``|ln2 sum_k psi_hat(2^-k xi) phi_hat(2^-k xi) - 1|``."""
    xi = np.exp(np.linspace(0.0, LN2, 257))
    ks = _KS
    tot = LN2 * sum(psi.fourier(xi * 2.0 ** -k) * phi.fourier(xi * 2.0 ** -k) for k in ks)
    return float(np.abs(tot - 1.0).max())


# ---------------------------------------------------------------------------
# square functions

def _layers_sq(stack: ScaleStack) -> np.ndarray:
    return np.abs(stack.layers) ** 2


def g_function(stack: ScaleStack, band_check: bool = False) -> GridFunction:
    """``[ln2 * sum_k |f * phi_{t_k}(x)|^2]^(1/2)``."""
    val = np.sqrt(LN2 * _layers_sq(stack).sum(axis=0))
    if band_check:
        frac = uncovered_energy(stack)
        if frac > 0.01:
            log.warning("g_function: %.2f%% of the energy lies outside the covered band", 100 * frac)
    return stack.base.like(val)


def uncovered_energy(stack: ScaleStack, tol: float = 0.05) -> float:
    """Fraction of ``||f||_2^2`` at frequencies where the ladder multiplier is off by > tol."""
    g = stack.grid
    r, m = ladder_multiplier(stack.kernel, g, stack.ks)
    from .grid import pad
    fh = np.abs(np.fft.fftn(pad(stack.base.samples))) ** 2
    tot = fh.sum()
    return float(fh[np.abs(m - 1) > tol].sum() / tot) if tot > 0 else 0.0


def _disc(grid: GridSpec, radius: float) -> np.ndarray:
    m = max(int(math.ceil(radius / grid.spacing)) - 1, 0)
    d = np.arange(-m, m + 1) * grid.spacing
    if grid.dim == 1:
        return (np.abs(d) < radius).astype(float)
    x, y = np.meshgrid(d, d, indexing="ij")
    return (x * x + y * y < radius * radius).astype(float)


def lusin_area(stack: ScaleStack) -> GridFunction:
    """``[ln2 * sum_k t_k^-n h^n sum_{|y-x| < t_k} |f * phi_{t_k}(y)|^2]^(1/2)``."""
    g = stack.grid
    n = g.dim
    tot = np.zeros(g.shape)
    for t, sq in zip(stack.scales, _layers_sq(stack)):
        cone = ndimage.correlate(sq, _disc(g, t), mode="constant", cval=0.0)
        tot += LN2 * g.cell / t ** n * cone
    return stack.base.like(np.sqrt(tot))


def _weight_kernel(grid: GridSpec, t: float, power: float) -> np.ndarray:
    m = grid.points - 1
    d = np.arange(-m, m + 1) * grid.spacing
    if grid.dim == 1:
        r = np.abs(d)
    else:
        x, y = np.meshgrid(d, d, indexing="ij")
        r = np.hypot(x, y)
    return (t / (t + r)) ** power


def g_lambda_star(stack: ScaleStack, lam: float) -> GridFunction:
    """``[ln2 * sum_k t^-n h^n sum_y (t/(t+|x-y|))^(lam n) |f * phi_t(y)|^2]^(1/2)``.

    The spatial sum runs over every node of the box.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g = stack.grid
    n = g.dim
    tot = np.zeros(g.shape)
    for t, sq in zip(stack.scales, _layers_sq(stack)):
        w = _weight_kernel(g, t, lam * n)
        tot += LN2 * g.cell / t ** n * ndimage.correlate(sq, w, mode="constant", cval=0.0)
    return stack.base.like(np.sqrt(tot))


def peetre_maximal(stack: ScaleStack, a: float, chunk: int = 512) -> np.ndarray:
    """Per-scale ``max_y |f * phi_t(y)| / (1 + |y - x|/t)^a``; shape ``(K, *grid)``."""
    if not a > 0:
        raise ValueError("a must be positive")
    g = stack.grid
    pts = np.stack([c.ravel() for c in g.coords()], axis=1)
    out = np.empty(stack.layers.shape)
    for i, (t, lay) in enumerate(zip(stack.scales, stack.layers)):
        v = np.abs(lay).ravel()
        keep = v > 0
        pv, vv = pts[keep], v[keep]
        res = np.zeros(len(pts))
        if vv.size:
            for s in range(0, len(pts), chunk):
                d = np.sqrt(((pts[s:s + chunk, None, :] - pv[None, :, :]) ** 2).sum(-1))
                res[s:s + chunk] = (vv[None, :] / (1 + d / t) ** a).max(axis=1)
        out[i] = res.reshape(g.shape)
    return out


def g_a_star(stack: ScaleStack, a: float, peetre=None) -> GridFunction:
    """``[ln2 * sum_k (peetre_k(x))^2]^(1/2)``."""
    pm = peetre_maximal(stack, a) if peetre is None else peetre
    return stack.base.like(np.sqrt(LN2 * (pm ** 2).sum(axis=0)))


def vanishing_at_infinity_check(stack: ScaleStack, count: int = 3) -> dict:
    """Decay of ``max_x |f * phi_t|`` over the ``count`` largest scales.

    Passes iff the fitted slope of ``log max`` against ``log t`` is negative.
    """
    order = np.argsort(stack.scales)[::-1][:count]
    t = stack.scales[order]
    mx = np.array([np.abs(stack.layers[i]).max() for i in order])
    if np.any(mx <= 0):
        return {"slope": -np.inf, "passed": True, "max": mx.tolist(), "scales": t.tolist()}
    slope = float(np.polyfit(np.log(t), np.log(mx), 1)[0])
    return {"slope": slope, "passed": slope < 0, "max": mx.tolist(), "scales": t.tolist()}


def cone_volume_bound(grid: GridSpec, t: float) -> float:
    """Node count of ``{|y| < t}`` times ``h^n / t^n``; at most the unit-ball volume."""
    return float(_disc(grid, t).sum()) * grid.cell / t ** grid.dim


def pointwise_chains(stack: ScaleStack, lam: float, a: float) -> dict:
    """Count violations of the three pointwise comparisons between square functions."""
    n = stack.grid.dim
    g = g_function(stack).samples
    S = lusin_area(stack).samples
    gl = g_lambda_star(stack, lam).samples
    pm = peetre_maximal(stack, a)
    ga = g_a_star(stack, a, pm).samples
    vn = unit_ball_volume(n)
    return {
        "g<=ga": int(np.sum(g > ga)),
        "S<=glam": int(np.sum(S > 2 ** (lam * n / 2) * gl)),
        "S<=ga": int(np.sum(S > 2 ** a * math.sqrt(vn) * ga)),
        "nodes": int(g.size),
    }
