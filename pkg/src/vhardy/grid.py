"""Grid geometry, quadrature, zero-padded convolution, dyadic scale ladders
and Whitney-type decompositions of node sets.

All grids are node centred: along each axis the nodes are ``-L + i*h`` for
``i = 0..N-1`` with ``h = 2L/N``.  Functions are taken to vanish outside the
box, and every convolution is an exact discrete *linear* convolution (the
FFT runs on a box of twice the side, so periodic wrap never occurs).
"""
from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

log = logging.getLogger(__name__)

VGF_MAGIC = b"VGF1"


def threads() -> int:
    """Worker cap taken from ``VHARDY_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("VHARDY_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on the box ``[-L, L)^n``.

    Parameters
    ----------
    dim : int
        Space dimension, 1 or 2.
    half_width : float
        L, half the side of the box.
    points : int
        Nodes per axis, a power of two.
    margin : float
        Fraction of the box kept free of data by convention, in ``[0, 1/2)``.
    """

    dim: int
    half_width: float
    points: int
    margin: float = 0.125

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.points < 2 or self.points & (self.points - 1):
            raise ValueError(f"points must be a power of two >= 2, got {self.points}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not 0 <= self.margin < 0.5:
            raise ValueError("margin must lie in [0, 1/2)")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    h = spacing

    @property
    def cell(self) -> float:
        """Quadrature weight h^n."""
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points ** self.dim

    @property
    def depth(self) -> int:
        """log2 of the number of nodes per axis."""
        return self.points.bit_length() - 1

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    def coords(self) -> list:
        """Per-axis coordinate arrays broadcast to the grid shape."""
        ax = self.axis()
        if self.dim == 1:
            return [ax]
        return list(np.meshgrid(ax, ax, indexing="ij"))

    def radius(self, center=None) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.asarray(center, float)
        return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(self.coords(), c)))

    def offsets(self) -> list:
        """Coordinates of the signed node offsets on the doubled FFT box.

        Index ``j`` stands for the offset ``j*h`` when ``j < N`` and
        ``(j - 2N)*h`` otherwise.
        """
        n = self.points
        j = np.arange(2 * n)
        d = np.where(j < n, j, j - 2 * n) * self.spacing
        if self.dim == 1:
            return [d]
        return list(np.meshgrid(d, d, indexing="ij"))

    def node_index(self, point) -> tuple:
        """Index of the node nearest to ``point`` (clipped to the box)."""
        p = np.atleast_1d(np.asarray(point, float))
        idx = np.rint((p + self.half_width) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, self.points - 1))

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.dim, self.half_width, self.points * factor, self.margin)

    def inner_mask(self) -> np.ndarray:
        """Nodes in the inner ``1 - 2*margin`` part of the box."""
        lim = self.half_width * (1 - 2 * self.margin)
        return np.all([np.abs(x) <= lim for x in self.coords()], axis=0)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at the nodes of ``grid``."""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.samples)
        if not np.iscomplexobj(a):
            a = a.astype(float)
        if a.shape != self.grid.shape:
            if a.size == self.grid.size:
                a = a.reshape(self.grid.shape)
            else:
                raise ValueError(f"expected {self.grid.size} samples, got {a.size}")
        if not np.all(np.isfinite(a)):
            raise ValueError("samples must be finite")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_callable(cls, grid: GridSpec, fn) -> "GridFunction":
        return cls(grid, fn(*grid.coords()))

    def like(self, samples) -> "GridFunction":
        return GridFunction(self.grid, samples)

    def abs(self) -> "GridFunction":
        return self.like(np.abs(self.samples))

    def __add__(self, other):
        return self.like(self.samples + _values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.like(self.samples - _values(other))

    def __neg__(self):
        return self.like(-self.samples)

    def __mul__(self, other):
        return self.like(self.samples * _values(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.like(self.samples / _values(other))

    def __pow__(self, s):
        return self.like(self.samples ** s)

    @property
    def support(self) -> np.ndarray:
        return self.samples != 0


def _values(x):
    return x.samples if isinstance(x, GridFunction) else x


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball ``{y : |y - center| < radius}``."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:
        return len(self.center)

    def mask(self, grid: GridSpec) -> np.ndarray:
        return grid.radius(self.center) < self.radius

    def indicator(self, grid: GridSpec) -> GridFunction:
        return GridFunction(grid, self.mask(grid).astype(float))

    def dilate(self, beta: float) -> "Ball":
        return Ball(self.center, beta * self.radius)

    @property
    def volume(self) -> float:
        """Lebesgue measure of the continuum ball."""
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius ** n

    def measure(self, grid: GridSpec) -> float:
        """Node-quadrature measure of the ball."""
        return float(self.mask(grid).sum()) * grid.cell


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class DyadicCube:
    """Dyadic cube of generation ``g``: a block of ``N/2^g`` nodes per axis.

    The cube is ``prod_i [-L + c_i*l, -L + (c_i+1)*l)`` with side
    ``l = 2L * 2**-g``.  ``boundary`` marks single-node cells that could not
    meet the lower distance bound.
    """

    generation: int
    index: tuple
    side: float
    boundary: bool = False

    def block(self, grid: GridSpec) -> int:
        return grid.points >> self.generation

    def slices(self, grid: GridSpec) -> tuple:
        m = self.block(grid)
        return tuple(slice(c * m, (c + 1) * m) for c in self.index)

    def lower(self, grid: GridSpec) -> np.ndarray:
        return -grid.half_width + np.asarray(self.index, float) * self.side

    def center(self, grid: GridSpec) -> np.ndarray:
        return self.lower(grid) + self.side / 2

    def mask(self, grid: GridSpec) -> np.ndarray:
        m = np.zeros(grid.shape, bool)
        m[self.slices(grid)] = True
        return m

    def node_count(self, grid: GridSpec) -> int:
        return self.block(grid) ** grid.dim

    def touches(self, other: "DyadicCube", grid: GridSpec) -> bool:
        """Closed cubes intersect (shared faces, edges or corners)."""
        a0, b0 = self.lower(grid), other.lower(grid)
        a1, b1 = a0 + self.side, b0 + other.side
        tol = 1e-9 * grid.spacing
        return bool(np.all(a0 <= b1 + tol) and np.all(b0 <= a1 + tol))

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.generation - 1, tuple(c // 2 for c in self.index), 2 * self.side)


# ---------------------------------------------------------------------------
# quadrature and convolution

def integrate(f: GridFunction):
    """Node quadrature ``h^n * sum(samples)``."""
    return f.grid.cell * f.samples.sum()


class Profile:
    """A kernel profile ``phi`` on R^n, dilated as ``t^-n phi(x/t)``.

    Subclasses implement :meth:`evaluate`.  ``reach`` bounds the support
    (compact profiles) or the effective reach (rapidly decaying ones) in
    units of ``t``.
    """

    name = "profile"
    reach = 1.0

    def __init__(self, dim: int):
        self.dim = dim
        self._fft_cache = {}

    def evaluate(self, *coords):  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, *coords):
        return self.evaluate(*coords)

    def sample(self, grid: GridSpec, t: float) -> np.ndarray:
        """``t^-n phi(z/t)`` on the signed offsets of the doubled box."""
        z = grid.offsets()
        return self.evaluate(*[c / t for c in z]) / t ** grid.dim

    def check_scale(self, grid: GridSpec, t: float):
        if self.reach * t > 2 * grid.half_width:
            raise ValueError(
                f"scale t={t:g} too large: kernel reach {self.reach * t:g} exceeds "
                f"box width {2 * grid.half_width:g}")

    def spectrum(self, grid: GridSpec, t: float, real=True) -> np.ndarray:
        key = (grid, float(t), real)
        hit = self._fft_cache.get(key)
        if hit is None:
            k = self.sample(grid, t)
            hit = sfft.rfftn(k, workers=threads()) if real else sfft.fftn(k, workers=threads())
            if len(self._fft_cache) > 256:
                self._fft_cache.clear()
            self._fft_cache[key] = hit
        return hit


class GaussianProfile(Profile):
    """``exp(-pi |x|^2)``, unit mass."""

    name = "gauss"
    reach = 3.0

    def evaluate(self, *coords):
        r2 = sum(c * c for c in coords)
        return np.exp(-np.pi * r2)


class BumpProfile(Profile):
    """Normalized ``(1 - |x|^2)_+^K`` with unit mass (support the closed unit ball)."""

    name = "bump"
    reach = 1.0

    def __init__(self, dim: int, order: int = 4):
        super().__init__(dim)
        self.order = order
        # mass of (1-r^2)^K over the unit ball
        self._mass = math.pi ** (dim / 2) * math.gamma(order + 1) / math.gamma(order + 1 + dim / 2)

    def evaluate(self, *coords):
        r2 = sum(c * c for c in coords)
        return np.where(r2 < 1, np.clip(1 - r2, 0, None) ** self.order, 0.0) / self._mass


def pad(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    out = np.zeros((2 * n,) * samples.ndim, dtype=samples.dtype)
    out[(slice(0, n),) * samples.ndim] = samples
    return out


def convolve_spectrum(f: GridFunction, spec: np.ndarray, real: bool) -> np.ndarray:
    """Linear convolution of ``f`` with a kernel given by its padded spectrum."""
    g = f.grid
    fp = pad(f.samples)
    shape = fp.shape
    if real:
        out = sfft.irfftn(sfft.rfftn(fp, workers=threads()) * spec, s=shape, workers=threads())
    else:
        out = sfft.ifftn(sfft.fftn(fp, workers=threads()) * spec, workers=threads())
    return out[(slice(0, g.points),) * g.dim] * g.cell


def convolve_kernel(f: GridFunction, kernel: np.ndarray) -> GridFunction:
    """Convolve with a kernel sampled on the signed offsets (see :meth:`GridSpec.offsets`)."""
    real = not (np.iscomplexobj(f.samples) or np.iscomplexobj(kernel))
    spec = sfft.rfftn(kernel, workers=threads()) if real else sfft.fftn(kernel, workers=threads())
    return f.like(convolve_spectrum(f, spec, real))


def convolve_at_scale(f: GridFunction, kernel: Profile, t: float) -> GridFunction:
    """Samples of ``f * phi_t`` with ``phi_t(x) = t^-n phi(x/t)``.

    Raises
    ------
    ValueError
        If the dilated kernel reaches beyond the width of the box, so that
        the layer would lose mass outside the sampled region.
    """
    kernel.check_scale(f.grid, t)
    real = not np.iscomplexobj(f.samples)
    return f.like(convolve_spectrum(f, kernel.spectrum(f.grid, t, real), real))


@dataclass(frozen=True, eq=False)
class ScaleStack:
    """Layers ``f * phi_t`` for ``t = 2^-k``, ``k = k_min..k_max``."""

    base: GridFunction
    kernel: Profile
    ks: tuple
    layers: np.ndarray = field(repr=False)

    @property
    def scales(self) -> np.ndarray:
        return 2.0 ** -np.asarray(self.ks, float)

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    def __len__(self):
        return len(self.ks)

    def layer(self, k: int) -> GridFunction:
        return self.base.like(self.layers[self.ks.index(k)])


def build_scale_stack(f: GridFunction, kernel: Profile, k_min: int, k_max: int) -> ScaleStack:
    """Convolve ``f`` against the kernel at every dyadic scale of the ladder."""
    if k_max < k_min:
        raise ValueError("k_max must be >= k_min")
    ks = tuple(range(k_min, k_max + 1))
    kernel.check_scale(f.grid, 2.0 ** -k_min)
    layers = np.stack([convolve_at_scale(f, kernel, 2.0 ** -k).samples for k in ks])
    layers.setflags(write=False)
    return ScaleStack(f, kernel, ks, layers)


def default_ladder(grid: GridSpec) -> tuple:
    """Scales from t = L/2 down to t = 2h."""
    k_min = -int(round(math.log2(grid.half_width))) + 1
    k_max = int(round(-math.log2(2 * grid.spacing)))
    return k_min, k_max


# ---------------------------------------------------------------------------
# Whitney decomposition

def complement_distance(mask: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Distance from each node to the nearest node outside ``mask``.

    Nodes just outside the box count as complement nodes.
    """
    padded = np.pad(np.asarray(mask, bool), 1, constant_values=False)
    d = ndimage.distance_transform_edt(padded)
    return d[(slice(1, -1),) * mask.ndim] * grid.spacing


def _block_reduce(a: np.ndarray, m: int, fn):
    n = a.shape[0] // m
    if a.ndim == 1:
        return fn(a.reshape(n, m), axis=1)
    return fn(a.reshape(n, m, n, m), axis=(1, 3))


def whitney_decompose(mask, grid: GridSpec, *, allow_full: bool = False) -> list:
    """Partition the nodes of ``mask`` into maximal dyadic cubes with
    ``sqrt(n) l(Q) <= dist(Q, complement) <= 4 sqrt(n) l(Q)``.

    Distances are node to node.  Nodes that no cube of side ``h`` can
    accommodate (possible in 2-D next to an axis neighbour outside the set)
    are returned as single-node cubes with ``boundary=True``.

    Parameters
    ----------
    mask : array of bool
        Node set to decompose.
    grid : GridSpec
    allow_full : bool
        Accept the whole box, treating the exterior as the complement.
    """
    mask = np.asarray(mask, bool).reshape(grid.shape)
    if not mask.any():
        raise ValueError("open set is empty")
    if mask.all() and not allow_full:
        raise ValueError("open set is the whole box; complement must be nonempty")
    dist = complement_distance(mask, grid)
    rootn = math.sqrt(grid.dim)
    covered = np.zeros(grid.shape, bool)
    cubes = []
    for g in range(1, grid.depth + 1):
        m = grid.points >> g
        side = 2 * grid.half_width / 2 ** g
        inside = _block_reduce(mask, m, np.all)
        dmin = _block_reduce(dist, m, np.min)
        taken = _block_reduce(covered, m, np.any)
        ok = inside & ~taken & (dmin >= rootn * side * (1 - 1e-12))
        for idx in zip(*np.nonzero(ok)):
            cube = DyadicCube(g, tuple(int(i) for i in idx), side)
            cubes.append(cube)
            covered[cube.slices(grid)] = True
    left = mask & ~covered
    if left.any():
        log.info("whitney: %d boundary cells of side h", int(left.sum()))
        for idx in zip(*np.nonzero(left)):
            cubes.append(DyadicCube(grid.depth, tuple(int(i) for i in idx), grid.spacing, True))
    return cubes


def cube_distance(cube: DyadicCube, dist: np.ndarray, grid: GridSpec) -> float:
    return float(dist[cube.slices(grid)].min())


# ---------------------------------------------------------------------------
# file formats

def write_vgf(path, f: GridFunction):
    """Write the VGF1 binary format."""
    g = f.grid
    data = np.ascontiguousarray(np.real(f.samples), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(VGF_MAGIC)
        fh.write(struct.pack("<IIdd", g.dim, g.points, g.half_width, g.margin))
        fh.write(data.tobytes(order="C"))


def read_vgf(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if raw[:4] != VGF_MAGIC:
        raise ValueError(f"{path}: not a VGF1 file")
    dim, n, half, margin = struct.unpack("<IIdd", raw[4:28])
    grid = GridSpec(dim, half, n, margin)
    data = np.frombuffer(raw[28:], dtype="<f8")
    if data.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} samples, found {data.size}")
    return GridFunction(grid, data.reshape(grid.shape))


def read_csv_1d(path, grid: GridSpec) -> GridFunction:
    """One sample per line, 1-D grids only."""
    if grid.dim != 1:
        raise ValueError("CSV import is only defined for 1-D grids")
    vals = np.loadtxt(path, delimiter=",", ndmin=1, dtype=float)
    return GridFunction(grid, vals.ravel())
