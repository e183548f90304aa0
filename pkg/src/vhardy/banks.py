"""Deterministic banks of test functions."""
from __future__ import annotations

import math

import numpy as np

from .exponent import default_moment_order
from .grid import Ball, GridFunction, GridSpec

__all__ = ["random_piecewise", "band_limited_noise", "wave_packet", "bank_generate", "BANK_KINDS"]

BANK_KINDS = ("indicators", "piecewise", "bandlimited", "atoms", "molecules", "spikes", "packets")


def _inner(grid: GridSpec) -> float:
    return grid.half_width * (1 - 2 * grid.margin)


def random_piecewise(grid: GridSpec, rng: np.random.Generator, pieces: int = 8,
                     extent: float | None = None, nonneg: bool = False) -> GridFunction:
    """Random piecewise-constant function supported in ``[-extent, extent]^n``.

    In 1-D the support is cut at random breakpoints; in 2-D the function is
    a sum of random axis-parallel rectangles.
    """
    ext = _inner(grid) / 2 if extent is None else extent
    lo = 0.0 if nonneg else -2.0
    if grid.dim == 1:
        x = grid.axis()
        cuts = np.sort(rng.uniform(-ext, ext, pieces + 1))
        vals = rng.uniform(lo, 2.0, pieces)
        f = np.zeros(grid.shape)
        for a, b, v in zip(cuts[:-1], cuts[1:], vals):
            f[(x >= a) & (x < b)] = v
        return GridFunction(grid, f)
    x, y = grid.coords()
    f = np.zeros(grid.shape)
    for _ in range(pieces):
        ax = np.sort(rng.uniform(-ext, ext, 2))
        ay = np.sort(rng.uniform(-ext, ext, 2))
        f += rng.uniform(lo, 2.0) * ((x >= ax[0]) & (x < ax[1]) & (y >= ay[0]) & (y < ay[1]))
    return GridFunction(grid, f)


def band_limited_noise(grid: GridSpec, rng: np.random.Generator, band=(0.25, 2.0),
                       extent: float | None = None, window: bool = True) -> GridFunction:
    """Random noise with spectrum in the annulus ``band`` (cycles per unit).

    The result is windowed by a smooth bump of radius ``extent`` so it is
    essentially supported in the inner box; the window widens the spectrum
    only slightly.
    """
    ext = _inner(grid) * 0.75 if extent is None else extent
    shape = grid.shape
    xi = np.fft.fftfreq(grid.points, d=grid.spacing)
    if grid.dim == 1:
        r = np.abs(xi)
    else:
        a, b = np.meshgrid(xi, xi, indexing="ij")
        r = np.hypot(a, b)
    spec = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (
        (r >= band[0]) & (r <= band[1]))
    f = np.real(np.fft.ifftn(spec))
    if window:
        rr = grid.radius() / ext
        f = f * np.where(rr < 1, np.cos(0.5 * np.pi * np.clip(rr, 0, 1)) ** 4, 0.0)
    f = f / max(np.abs(f).max(), 1e-300)
    return GridFunction(grid, f)


def wave_packet(grid: GridSpec, center, sigma: float, freq, phase: float = 0.0,
                amplitude: float = 1.0) -> GridFunction:
    """``A exp(-|x-c|^2 / (2 sigma^2)) cos(2 pi freq.(x-c) + phase)``.

    Defined pointwise, so the same packet can be sampled on any grid.
    """
    c = np.atleast_1d(np.asarray(center, float))
    w = np.atleast_1d(np.asarray(freq, float))
    xs = [x - ci for x, ci in zip(grid.coords(), c)]
    r2 = sum(x * x for x in xs)
    arg = 2 * np.pi * sum(wi * x for wi, x in zip(w, xs)) + phase
    return GridFunction(grid, amplitude * np.exp(-r2 / (2 * sigma ** 2)) * np.cos(arg))


def _spike(grid, rng, ext):
    f = np.zeros(grid.shape)
    idx = tuple(int(i) for i in grid.node_index(rng.uniform(-ext, ext, grid.dim)))
    f[idx] = rng.uniform(0.5, 2.0) / grid.cell
    return GridFunction(grid, f)


def bank_generate(spec, seed: int, grid: GridSpec, p=None) -> list:
    """Generate a bank of functions, deterministically in ``(spec, seed)``.

    Parameters
    ----------
    spec : dict
        ``{"kind": one of BANK_KINDS, "size": int, ...}``.  Atom and molecule
        banks take ``q``, ``s`` (and ``eps`` for molecules) and need ``p``.
    seed : int
    grid : GridSpec
    p : ExponentField, optional

    Returns
    -------
    list of (id, GridFunction)
    """
    kind = spec["kind"]
    size = int(spec.get("size", 10))
    rng = np.random.default_rng([seed, BANK_KINDS.index(kind)])
    ext = _inner(grid) / 2
    out = []
    if kind == "indicators":
        c = np.zeros(grid.dim)
        radii = ext * 0.9 ** np.arange(size)[::-1]
        for i, r in enumerate(radii):
            out.append((f"ind{i}", Ball(c, float(r)).indicator(grid)))
    elif kind == "piecewise":
        for i in range(size):
            out.append((f"pc{i}", random_piecewise(grid, rng, pieces=int(spec.get("pieces", 8)))))
    elif kind == "bandlimited":
        band = tuple(spec.get("band", (0.25, 2.0)))
        for i in range(size):
            out.append((f"bl{i}", band_limited_noise(grid, rng, band=band)))
    elif kind == "packets":
        # parameters are drawn before sampling, so the bank is resolution independent
        lo, hi = spec.get("freq", (0.5, 1.0))
        sig = spec.get("sigma", (0.6, 1.2))
        spread = float(spec.get("spread", 1.0))
        for i in range(size):
            c = rng.uniform(-spread, spread, grid.dim)
            s_ = rng.uniform(*sig)
            mag = rng.uniform(lo, hi)
            ang = rng.uniform(0, 2 * np.pi)
            w = [mag] if grid.dim == 1 else [mag * np.cos(ang), mag * np.sin(ang)]
            out.append((f"wp{i}", wave_packet(grid, c, s_, w, rng.uniform(0, 2 * np.pi),
                                              rng.uniform(0.5, 2.0))))
    elif kind == "spikes":
        for i in range(size):
            out.append((f"sp{i}", _spike(grid, rng, ext)))
    elif kind in ("atoms", "molecules"):
        from . import decomposition as dec
        if p is None:
            raise ValueError(f"{kind} bank needs an exponent")
        q = float(spec.get("q", 2.0))
        s = int(spec.get("s", default_moment_order(p)))
        for i in range(size):
            if kind == "atoms":
                r = float(2.0 ** rng.uniform(-2, math.log2(ext / 4)))
                ctr = rng.uniform(-ext / 2, ext / 2, grid.dim)
            else:
                # small balls keep the decay budget beyond the box negligible
                r = float(max(2.0 ** rng.uniform(-3, -2), 2.5 * grid.spacing))
                ctr = rng.uniform(-1, 1, grid.dim)
            ball = Ball(ctr, r)
            if kind == "atoms":
                a = dec.synthesize_atom(grid, ball, p, q=q, s=s, rng=rng)
                rep = dec.verify_atom(a, p, q, s, c_slack=1.0)
                if not rep.passed:
                    raise AssertionError(f"bank atom {i} failed verification: {rep}")
                out.append((f"atom{i}", a.samples))
            else:
                eps = float(spec.get("eps", grid.dim + s + 2))
                m = dec.synthesize_molecule(grid, ball, p, q=q, s=s, eps=eps, rng=rng)
                rep = dec.verify_molecule(m, p, q, s, eps, c_slack=1.0)
                if not rep.passed:
                    raise AssertionError(f"bank molecule {i} failed verification: {rep}")
                out.append((f"mol{i}", m.samples))
    else:
        raise ValueError(f"unknown bank kind {kind!r}")
    return out
