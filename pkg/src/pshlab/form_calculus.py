"""Spectral exterior calculus on the flat torus C^n / (Z^n + i Z^n).

Grid layout: ``res`` points per real axis, axes ordered x_1, y_1, ..., x_n, y_n, row-major.
Field arrays put the grid axes first; Hermitian fields have shape (*grid, n, n) and form
components have shape (*grid, C(n,p), C(n,q)).  Constant fields may use size-1 grid axes.

Normalizations: dd^c u is the complex Hessian H[u]_jk = d^2 u / dz_j dzbar_k, realized on
forms as d^c = (i/2)(dbar - d) so that dd^c = i d dbar.  Integration is the grid mean
(total mass 1).
"""

import os
import struct
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb, factorial

import numpy as np
import scipy.fft as sfft

from . import hermitian_algebra as ha
from .hermitian_algebra import DimensionError, PointForm, PositivityError

__all__ = [
    "GridSpec", "ScalarField", "HermitianForm11Field", "FormField", "ConeError",
    "ddc", "ddc_parts", "hessian_from_parts", "exterior_d", "d_c", "partial", "partial_bar",
    "ma_density", "mixed_ma_density", "integrate", "stokes_defect", "check_bandlimit",
    "write_hmaf", "read_hmaf", "fft_workers", "Slot", "cone_check",
]

MEM_CAP_BYTES = int(float(os.environ.get("PSHLAB_MEM_CAP", 4.5e9)))
_WORKERS = [1]


def fft_workers(k=None):
    """Get or set the worker count used by all FFTs (the CLI --threads flag)."""
    if k is not None:
        _WORKERS[0] = max(1, int(k))
    return _WORKERS[0]


class ConeError(PositivityError):
    """omega + dd^c u fails to be positive semi-definite beyond tolerance."""

    def __init__(self, msg, worst_point, worst_eigenvalue):
        super().__init__(msg)
        self.worst_point = worst_point
        self.worst_eigenvalue = worst_eigenvalue


class GridSpec:
    """Periodic grid on the unit torus of complex dimension n.

    res must be a power of two, at least 16 (at least 8 when n = 3, where 16^6 points do
    not fit in memory).
    """

    def __init__(self, n, res):
        n, res = int(n), int(res)
        if n not in (1, 2, 3):
            raise DimensionError(f"complex dimension must be 1, 2 or 3, got {n}")
        min_res = 8 if n == 3 else 16
        if res < min_res or res & (res - 1):
            raise ValueError(f"res must be a power of two >= {min_res} for n={n}, got {res}")
        self.n, self.res = n, res
        if self.points * 8 * 2 * n * n > MEM_CAP_BYTES:
            raise MemoryError(f"grid n={n} res={res} exceeds the memory cap")

    @property
    def ndim(self):
        return 2 * self.n

    @property
    def shape(self):
        return (self.res,) * self.ndim

    @property
    def points(self):
        return self.res ** self.ndim

    @property
    def spacing(self):
        return 1.0 / self.res

    def coords(self):
        """Sparse coordinate arrays (x_1, y_1, ..., x_n, y_n), broadcastable to the grid."""
        g = np.arange(self.res) / self.res
        out = []
        for a in range(self.ndim):
            shp = [1] * self.ndim
            shp[a] = self.res
            out.append(g.reshape(shp))
        return out

    def bshape(self):
        """Broadcast shape of a constant field."""
        return (1,) * self.ndim

    def __eq__(self, other):
        return isinstance(other, GridSpec) and (self.n, self.res) == (other.n, other.res)

    def __hash__(self):
        return hash((self.n, self.res))

    def __repr__(self):
        return f"GridSpec(n={self.n}, res={self.res})"

    def to_dict(self):
        return {"n": self.n, "res": self.res}


def check_bandlimit(grid, max_freq, factors=1):
    """Products of `factors` fields of frequency <= max_freq are alias-free iff res > 2*factors*max_freq."""
    if grid.res <= 2 * factors * max_freq:
        raise ValueError(f"res={grid.res} too small for {factors}-fold products at frequency {max_freq}")


# ---------------------------------------------------------------------------
# spectral symbols

@lru_cache(maxsize=8)
def _symbols(n, res, real):
    """Per-axis first and second derivative symbols, broadcast-shaped.

    First derivatives drop the Nyquist mode (keeps real fields real); second derivatives keep it.
    With real=True the last axis uses rfft frequencies.
    """
    nd = 2 * n
    k = np.fft.fftfreq(res, 1.0 / res)
    kr = np.fft.rfftfreq(res, 1.0 / res)
    d1, d2 = [], []
    for a in range(nd):
        kk = kr if (real and a == nd - 1) else k
        shp = [1] * nd
        shp[a] = len(kk)
        s1 = 2j * np.pi * kk
        s1[np.abs(kk) == res // 2] = 0
        d1.append(s1.reshape(shp))
        d2.append((-(2 * np.pi * kk) ** 2).reshape(shp))
    return d1, d2


@lru_cache(maxsize=8)
def _hess_symbols(n, res, real=True):
    """Symbols of the Hessian parts: diag (j,j) real; off-diagonal (j,k) as (re, im) pairs."""
    d1, d2 = _symbols(n, res, real)
    sym = {}
    for j in range(n):
        sym[(j, j)] = 0.25 * (d2[2 * j] + d2[2 * j + 1])
        for k in range(j + 1, n):
            xj, yj, xk, yk = d1[2 * j], d1[2 * j + 1], d1[2 * k], d1[2 * k + 1]
            sym[(j, k)] = (0.25 * (xj * xk + yj * yk), 0.25 * (xj * yk - yj * xk))
    return sym


def _dz_symbols(n, res):
    """Full-FFT symbols of d/dz_k and d/dzbar_k."""
    d1, _ = _symbols(n, res, False)
    dz = [0.5 * (d1[2 * k] - 1j * d1[2 * k + 1]) for k in range(n)]
    dzb = [0.5 * (d1[2 * k] + 1j * d1[2 * k + 1]) for k in range(n)]
    return dz, dzb


# ---------------------------------------------------------------------------
# band-limited synthesis (trigonometric evaluation from a compact coefficient block)

def _synth(grid, coeffs, symbol=None):
    """Evaluate sum_k c_k * symbol(k) * exp(2 pi i k.x) on the grid, real part.

    coeffs has shape (2K+1,)*2n for frequencies -K..K on each axis; symbol is a
    callable of the per-axis frequency arrays returning a broadcastable array.
    """
    nd = grid.ndim
    K = (coeffs.shape[0] - 1) // 2
    f = np.arange(-K, K + 1)
    c = coeffs
    if symbol is not None:
        c = c * symbol(*[f.reshape([-1 if b == a else 1 for b in range(nd)]) for a in range(nd)])
    E = np.exp(2j * np.pi * np.outer(np.arange(grid.res) / grid.res, f))  # (res, 2K+1)
    for a in range(nd - 1, 0, -1):
        c = np.moveaxis(np.tensordot(c, E, axes=([a], [1])), -1, a)
    # last contraction as one real matmul that writes grid order directly
    F = c.shape[0]
    stacked = np.concatenate([c.real.reshape(F, -1), c.imag.reshape(F, -1)], axis=0)
    out = np.concatenate([E.real, -E.imag], axis=1) @ stacked
    return out.reshape(grid.shape)


class ScalarField:
    """Real function sampled on the grid.

    Either backed by a value array, or by a compact block of Fourier coefficients
    (``from_modes``) whose values are synthesized on demand.  Treat as immutable.
    """

    def __init__(self, grid, values=None, _modes=None):
        self.grid = grid
        self._modes = _modes
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.size != grid.points:
                raise DimensionError(f"{values.size} values for a grid of {grid.points} points")
            values = values.reshape(grid.shape)
            if not np.all(np.isfinite(values)):
                raise ValueError("non-finite field values")
            self.__dict__["values"] = values
        elif _modes is None:
            raise ValueError("need values or modes")

    @classmethod
    def from_modes(cls, grid, modes):
        modes = np.asarray(modes, dtype=complex)
        if modes.ndim != grid.ndim or len(set(modes.shape)) != 1 or modes.shape[0] % 2 == 0:
            raise DimensionError("modes must be a cube of odd side with one axis per real dimension")
        K = (modes.shape[0] - 1) // 2
        if 2 * K >= grid.res:
            raise ValueError("mode block too wide for the grid")
        # enforce the symmetry that makes the field real
        modes = 0.5 * (modes + np.conj(modes[(slice(None, None, -1),) * grid.ndim]))
        return cls(grid, None, _modes=modes)

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @cached_property
    def values(self):
        return _synth(self.grid, self._modes)

    @property
    def max_freq(self):
        return None if self._modes is None else (self._modes.shape[0] - 1) // 2

    def sup(self):
        if "values" in self.__dict__ or self._modes is None:
            return float(self.values.max())
        return float(_synth(self.grid, self._modes).max())

    def affine(self, a, b=0.0):
        """a * self + b, preserving a mode backing when present."""
        if self._modes is not None and "values" not in self.__dict__:
            m = a * self._modes
            K = self.max_freq
            m[(K,) * self.grid.ndim] += b
            return ScalarField(self.grid, None, _modes=m)
        return ScalarField(self.grid, a * self.values + b)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values + other.values)
        return self.affine(1.0, float(other))

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.values - other.values)
        return self.affine(1.0, -float(other))

    def __mul__(self, c):
        return self.affine(float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.affine(-1.0)


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise DimensionError(f"grid mismatch: {g} vs {f.grid}")


class HermitianForm11Field:
    """Real (1,1)-form as a Hermitian matrix per grid point, mats shape (*grid, n, n)."""

    def __init__(self, grid, mats):
        mats = np.asarray(mats, dtype=complex)
        n = grid.n
        if mats.ndim != grid.ndim + 2 or mats.shape[-2:] != (n, n):
            raise DimensionError(f"mats shape {mats.shape} incompatible with {grid}")
        for a, L in enumerate(mats.shape[:-2]):
            if L not in (1, grid.res):
                raise DimensionError(f"axis {a} has length {L}")
        if not np.all(np.isfinite(mats)):
            raise ValueError("non-finite form coefficients")
        self.grid, self.mats = grid, mats

    @classmethod
    def constant(cls, grid, m):
        m = np.asarray(m, dtype=complex)
        if m.ndim == 0:
            m = m * np.eye(grid.n)
        return cls(grid, m.reshape(grid.bshape() + (grid.n, grid.n)))

    @classmethod
    def identity(cls, grid):
        return cls.constant(grid, np.eye(grid.n))

    @property
    def n(self):
        return self.grid.n

    @property
    def is_constant(self):
        return all(L == 1 for L in self.mats.shape[:-2])

    def full(self):
        return np.broadcast_to(self.mats, self.grid.shape + (self.n, self.n))

    def __add__(self, other):
        _same_grid(self, other)
        return HermitianForm11Field(self.grid, self.mats + other.mats)

    def __sub__(self, other):
        _same_grid(self, other)
        return HermitianForm11Field(self.grid, self.mats - other.mats)

    def scale(self, c):
        """Multiply by a real constant or a ScalarField (pointwise conformal factor)."""
        if isinstance(c, ScalarField):
            return HermitianForm11Field(self.grid, self.mats * c.values[..., None, None])
        return HermitianForm11Field(self.grid, float(c) * self.mats)

    def min_eigenvalue(self):
        return ha.eigvalsh(self.mats)[..., 0]

    @cached_property
    def comp(self):
        """Entrywise contiguous copy used by the slab kernels."""
        return Comp.from_mats(self.mats)

    @cached_property
    def det_values(self):
        """Pointwise det as a real array (broadcast shape of mats without the matrix axes)."""
        return self.comp.det()

    def to_form(self):
        return FormField(self.grid, {(1, 1): 1j * self.mats})

    def max_abs(self):
        return float(np.abs(self.mats).max())


class FormField:
    """Sum of (p,q)-components; parts maps (p, q) to arrays of shape (*grid, C(n,p), C(n,q))."""

    def __init__(self, grid, parts):
        self.grid = grid
        self.parts = {}
        for (p, q), arr in parts.items():
            arr = np.asarray(arr, dtype=complex)
            want = (comb(grid.n, p), comb(grid.n, q))
            if arr.shape[-2:] != want or arr.ndim != grid.ndim + 2:
                raise DimensionError(f"component ({p},{q}) has shape {arr.shape}")
            self.parts[(p, q)] = arr

    @classmethod
    def scalar(cls, u):
        return cls(u.grid, {(0, 0): u.values[..., None, None]})

    @property
    def bidegrees(self):
        return sorted(self.parts)

    @property
    def degree(self):
        degs = {p + q for p, q in self.parts}
        if len(degs) > 1:
            raise DimensionError("mixed total degree")
        return degs.pop() if degs else 0

    def part(self, p, q):
        if (p, q) in self.parts:
            return PointForm(self.grid.n, p, q, self.parts[(p, q)])
        return None

    def __add__(self, other):
        _same_grid(self, other)
        out = dict(self.parts)
        for k, v in other.parts.items():
            out[k] = out[k] + v if k in out else v
        return FormField(self.grid, out)

    def scale(self, c):
        return FormField(self.grid, {k: c * v for k, v in self.parts.items()})

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def wedge(self, other):
        _same_grid(self, other)
        n = self.grid.n
        out = {}
        for (p, q), a in self.parts.items():
            for (r, s), b in other.parts.items():
                w = PointForm(n, p, q, a).wedge(PointForm(n, r, s, b))
                if w is None:
                    continue
                key = (p + r, q + s)
                out[key] = out[key] + w.coeffs if key in out else w.coeffs
        return FormField(self.grid, out)

    def power(self, k):
        out = self
        for _ in range(k - 1):
            out = out.wedge(self)
        return out

    def sup_norm(self):
        return max((float(np.abs(v).max()) for v in self.parts.values()), default=0.0)

    def top_density(self):
        """ScalarField density of the (n,n)-part (zero if absent); the imaginary part is dropped."""
        n = self.grid.n
        if (n, n) not in self.parts:
            return ScalarField(self.grid, np.zeros(self.grid.shape))
        dens = PointForm(n, n, n, self.parts[(n, n)]).top_density()
        return ScalarField(self.grid, np.broadcast_to(dens.real, self.grid.shape))

    def top_density_imag(self):
        n = self.grid.n
        if (n, n) not in self.parts:
            return 0.0
        return float(np.abs(PointForm(n, n, n, self.parts[(n, n)]).top_density().imag).max())


# ---------------------------------------------------------------------------
# derivatives

def _grid_axes(grid):
    return tuple(range(grid.ndim))


def _full(grid, arr):
    return np.broadcast_to(arr, grid.shape + arr.shape[grid.ndim:])


def _apply_first_order(f, which):
    """Shared kernel of partial / partial_bar on every component."""
    grid, n = f.grid, f.grid.n
    axes = _grid_axes(grid)
    dz, dzb = _dz_symbols(n, grid.res)
    syms = dz if which == "d" else dzb
    out = {}
    for (p, q), arr in f.parts.items():
        if (which == "d" and p == n) or (which == "dbar" and q == n):
            continue
        F = sfft.fftn(_full(grid, arr), axes=axes, workers=fft_workers())
        acc = None
        for k in range(n):
            unit = np.zeros((n, 1) if which == "d" else (1, n), dtype=complex)
            unit[(k, 0) if which == "d" else (0, k)] = 1.0
            covec = PointForm(n, 1, 0, unit) if which == "d" else PointForm(n, 0, 1, unit)
            w = covec.wedge(PointForm(n, p, q, F * syms[k][..., None, None]))
            acc = w.coeffs if acc is None else acc + w.coeffs
        key = (p + 1, q) if which == "d" else (p, q + 1)
        res = sfft.ifftn(acc, axes=axes, workers=fft_workers())
        out[key] = out[key] + res if key in out else res
    return FormField(grid, out)


def partial(f):
    """The (1,0) part of d: sum_k dz_k ^ d/dz_k."""
    return _apply_first_order(f, "d")


def partial_bar(f):
    """The (0,1) part of d: sum_k dzbar_k ^ d/dzbar_k."""
    return _apply_first_order(f, "dbar")


def _check_not_top(f):
    n = f.grid.n
    if f.parts and all(p + q == 2 * n for p, q in f.parts):
        raise DimensionError("exterior derivative of a top-degree form")


def exterior_d(f):
    """d = partial + partial_bar (raises on top-degree input)."""
    _check_not_top(f)
    return partial(f) + partial_bar(f)


def d_c(f):
    """d^c = (i/2)(partial_bar - partial), so that dd^c = i partial partial_bar."""
    _check_not_top(f)
    return (partial_bar(f) - partial(f)).scale(0.5j)


# ---------------------------------------------------------------------------
# complex Hessian

def ddc_parts(u):
    """Real component fields of H[u]: {(j,j): real, (j,k): (re, im)} for j < k."""
    grid = u.grid
    if u._modes is not None and "values" not in u.__dict__:
        return _ddc_parts_modes(u)
    sym = _hess_symbols(grid.n, grid.res, real=True)
    if not np.all(np.isfinite(u.values)):
        raise ValueError("non-finite input")
    U = sfft.rfftn(u.values, workers=fft_workers())
    inv = lambda s: sfft.irfftn(U * s, s=grid.shape, workers=fft_workers())
    out = {}
    for key, s in sym.items():
        out[key] = inv(s) if key[0] == key[1] else (inv(s[0]), inv(s[1]))
    return out


def _ddc_parts_modes(u):
    grid, n = u.grid, u.grid.n
    two_pi_i = 2j * np.pi
    out = {}
    for j in range(n):
        out[(j, j)] = _synth(grid, u._modes, lambda *f, j=j: 0.25 * (two_pi_i ** 2) * (f[2 * j] ** 2 + f[2 * j + 1] ** 2))
        for k in range(j + 1, n):
            def re(*f, j=j, k=k):
                return 0.25 * two_pi_i ** 2 * (f[2 * j] * f[2 * k] + f[2 * j + 1] * f[2 * k + 1])

            def im(*f, j=j, k=k):
                return 0.25 * two_pi_i ** 2 * (f[2 * j] * f[2 * k + 1] - f[2 * j + 1] * f[2 * k])
            out[(j, k)] = (_synth(grid, u._modes, re), _synth(grid, u._modes, im))
    return out


def hessian_from_parts(grid, parts, scale=1.0, base=None, sl=slice(None)):
    """Assemble base + scale * H into a complex (*grid, n, n) array, optionally on a slab sl of axis 0."""
    n = grid.n
    first = parts[(0, 0)][sl]
    H = np.empty(first.shape + (n, n), dtype=complex)
    for j in range(n):
        H[..., j, j] = parts[(j, j)][sl]
        for k in range(j + 1, n):
            re, im = parts[(j, k)]
            H[..., j, k] = re[sl] + 1j * im[sl]
            H[..., k, j] = np.conj(H[..., j, k])
    if scale != 1.0:
        H *= scale
    if base is not None:
        H += base if base.shape[0] == 1 else base[sl]
    return H


def ddc(u):
    """dd^c u as the complex Hessian field H[u]."""
    return HermitianForm11Field(u.grid, hessian_from_parts(u.grid, ddc_parts(u)))


# ---------------------------------------------------------------------------
# Monge-Ampere densities and integration

def _slabs(grid, target=1 << 17):
    per = grid.points // grid.res
    step = max(1, target // max(per, 1))
    for i in range(0, grid.res, step):
        yield slice(i, min(grid.res, i + step))


def _take(mats, sl):
    return mats if mats.shape[0] == 1 else mats[sl]


class Comp:
    """Hermitian matrices stored entrywise: real diagonal arrays and complex upper off-diagonals.

    Contiguous per-entry arrays make the pointwise kernels below several times faster than
    operating on (..., n, n) stacks.
    """

    __slots__ = ("n", "diag", "off")

    def __init__(self, n, diag, off):
        self.n, self.diag, self.off = n, diag, off

    @classmethod
    def from_mats(cls, m):
        n = m.shape[-1]
        return cls(n, [np.ascontiguousarray(m[..., j, j].real) for j in range(n)],
                   {(j, k): np.ascontiguousarray(m[..., j, k])
                    for j in range(n) for k in range(j + 1, n)})

    @classmethod
    def from_parts(cls, n, parts, sl, scale=1.0):
        diag = [scale * parts[(j, j)][sl] for j in range(n)]
        off = {}
        for j in range(n):
            for k in range(j + 1, n):
                re, im = parts[(j, k)]
                off[(j, k)] = scale * (re[sl] + 1j * im[sl])
        return cls(n, diag, off)

    def __add__(self, o):
        return Comp(self.n, [a + b for a, b in zip(self.diag, o.diag)],
                    {k: self.off[k] + o.off[k] for k in self.off})

    def mats(self):
        n = self.n
        shape = np.broadcast_shapes(*[d.shape for d in self.diag], *[v.shape for v in self.off.values()])
        m = np.empty(shape + (n, n), dtype=complex)
        for j in range(n):
            m[..., j, j] = self.diag[j]
            for k in range(j + 1, n):
                m[..., j, k] = self.off[(j, k)]
                m[..., k, j] = np.conj(self.off[(j, k)])
        return m

    def det(self):
        d, o = self.diag, self.off
        if self.n == 1:
            return d[0]
        if self.n == 2:
            b = o[(0, 1)]
            return d[0] * d[1] - (b.real * b.real + b.imag * b.imag)
        a01, a02, a12 = o[(0, 1)], o[(0, 2)], o[(1, 2)]
        sq = lambda z: z.real * z.real + z.imag * z.imag
        return (d[0] * d[1] * d[2] + 2.0 * (a01 * a12 * np.conj(a02)).real
                - d[0] * sq(a12) - d[1] * sq(a02) - d[2] * sq(a01))

    def min_eig(self):
        if self.n == 1:
            return self.diag[0]
        if self.n == 2:
            p, q, b = self.diag[0], self.diag[1], self.off[(0, 1)]
            return 0.5 * (p + q) - np.sqrt((0.5 * (p - q)) ** 2 + b.real ** 2 + b.imag ** 2)
        return np.linalg.eigvalsh(self.mats())[..., 0]

    def fro(self):
        t = sum(d * d for d in self.diag)
        for v in self.off.values():
            t = t + 2.0 * (v.real ** 2 + v.imag ** 2)
        return np.sqrt(t)


def comp_wedge_density(comps):
    """n! * mixed discriminant of entrywise-stored matrices (polarization)."""
    n = comps[0].n
    if all(c is comps[0] for c in comps):
        return factorial(n) * comps[0].det()
    if n == 2:
        a, b = comps
        z, w = a.off[(0, 1)], b.off[(0, 1)]
        return (a.diag[0] * b.diag[1] + a.diag[1] * b.diag[0]
                - 2.0 * (z.real * w.real + z.imag * w.imag))
    total = 0.0
    for r in range(1, n + 1):
        sign = (-1) ** (n - r)
        for subset in combinations(range(n), r):
            acc = comps[subset[0]]
            for i in subset[1:]:
                acc = acc + comps[i]
            total = total + sign * acc.det()
    return total


class Slot:
    """A (1,1)-form given slab by slab: a HermitianForm11Field, or omega + scale * dd^c u.

    Keeps only the real Hessian components in memory, which matters at 64^4 points.
    """

    def __init__(self, grid, omega, parts=None, scale=1.0):
        if omega.grid != grid:
            raise DimensionError("grid mismatch in form slot")
        self.grid, self.omega, self.parts, self.scale = grid, omega, parts, scale
        self._ocomp = Comp.from_mats(omega.mats) if omega.is_constant else None

    @classmethod
    def of(cls, obj, grid):
        if isinstance(obj, Slot):
            return obj
        if isinstance(obj, HermitianForm11Field):
            return cls(grid, obj)
        omega, u = obj
        if u.grid != grid:
            raise DimensionError("grid mismatch in form slot")
        return cls(grid, omega, ddc_parts(u))

    def omega_slab(self, sl):
        if self._ocomp is not None:
            return self._ocomp
        c = self.omega.comp
        return Comp(c.n, [d[sl] for d in c.diag], {k: v[sl] for k, v in c.off.items()})

    def slab(self, sl):
        base = self.omega_slab(sl)
        if self.parts is None:
            return base
        return Comp.from_parts(self.grid.n, self.parts, sl, self.scale) + base


def _offset(idx, sl, full_axis0):
    return (int(idx[0] + sl.start) if full_axis0 else int(idx[0]),) + tuple(int(i) for i in idx[1:])


def cone_check(grid, slot, tol=None):
    """Raise ConeError if some point has an eigenvalue below -tol(point); returns the min eigenvalue."""
    slot = Slot.of(slot, grid)
    worst_val, worst_idx, min_eig = np.inf, None, np.inf
    for sl in _slabs(grid):
        c = slot.slab(sl)
        w = c.min_eig()
        min_eig = min(min_eig, float(w.min()))
        t = 1e-10 * (1.0 + c.fro()) if tol is None else tol
        excess = w + t
        i = int(np.argmin(excess))
        if np.ravel(excess)[i] < 0 and np.ravel(w)[i] < worst_val:
            worst_val = float(np.ravel(w)[i])
            worst_idx = _offset(np.unravel_index(i, np.shape(w)), sl, np.shape(w)[0] != 1)
    if worst_idx is not None:
        raise ConeError(f"psh cone violated at {worst_idx}: eigenvalue {worst_val:.3e}",
                        worst_idx, worst_val)
    return min_eig


def ma_density(omega, u, tol=None, check=True):
    """n! det(M_omega + H[u]) per point; cone-checked unless check=False."""
    _same_grid(omega, u)
    slot = Slot.of((omega, u), u.grid)
    if check:
        cone_check(u.grid, slot, tol)
    return mixed_ma_density([slot] * u.grid.n, u.grid)


def mixed_ma_density(forms, grid=None):
    """Pointwise wedge_top_density of n slots; each a HermitianForm11Field, (omega, u) pair or Slot."""
    if grid is None:
        first = forms[0]
        grid = first.grid if isinstance(first, (HermitianForm11Field, Slot)) else first[0].grid
    if len(forms) != grid.n:
        raise DimensionError(f"need {grid.n} slots, got {len(forms)}")
    cache = {}
    slots = []
    for f in forms:
        if id(f) not in cache:
            cache[id(f)] = Slot.of(f, grid)
        slots.append(cache[id(f)])
    dens = np.empty(grid.shape)
    for sl in _slabs(grid):
        comps = {}
        args = []
        for s_ in slots:
            if id(s_) not in comps:
                comps[id(s_)] = s_.slab(sl)
            args.append(comps[id(s_)])
        dens[sl] = np.broadcast_to(comp_wedge_density(args), dens[sl].shape)
    return ScalarField(grid, dens)


def integrate(density):
    """Grid mean: the integral against Lebesgue measure of total mass 1."""
    if isinstance(density, ScalarField):
        density = density.values
    return float(np.mean(density))


def stokes_defect(omega, u):
    """|int (omega + dd^c u)^n - int omega^n| (meaningful for closed omega)."""
    grid = u.grid
    return abs(integrate(ma_density(omega, u, check=False))
               - integrate(mixed_ma_density([omega] * grid.n, grid)))


# ---------------------------------------------------------------------------
# HMAF v1 field files

_MAGIC = b"HMAF"
_KINDS = {"scalar": 0, "herm11": 1, "form": 2}


def write_hmaf(path, field):
    """Write a field as HMAF v1.

    Header: b"HMAF", then little-endian u32 version=1, n, res, kind (0 scalar, 1 herm11,
    2 form), p, q (0 unless kind=form).  Payload: little-endian float64.
      scalar: values in grid order (x_1, y_1, ..., x_n, y_n; row-major).
      herm11: for j, k in row-major order, the real part over the grid, then the imaginary part.
      form:   for I, J over increasing multi-indices (lexicographic), real part then imaginary part.
    """
    grid = field.grid
    if isinstance(field, ScalarField):
        kind, p, q, blocks = 0, 0, 0, [field.values]
    elif isinstance(field, HermitianForm11Field):
        kind, p, q = 1, 0, 0
        m = field.full()
        blocks = [part for j in range(grid.n) for k in range(grid.n)
                  for part in (m[..., j, k].real, m[..., j, k].imag)]
    elif isinstance(field, FormField):
        if len(field.parts) != 1:
            raise ValueError("HMAF stores forms of a single bidegree")
        (p, q), arr = next(iter(field.parts.items()))
        kind = 2
        arr = _full(grid, arr)
        blocks = [part for I in range(arr.shape[-2]) for J in range(arr.shape[-1])
                  for part in (arr[..., I, J].real, arr[..., I, J].imag)]
    else:
        raise TypeError(f"cannot serialize {type(field).__name__}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<6I", 1, grid.n, grid.res, kind, p, q))
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def read_hmaf(path):
    with open(path, "rb") as fh:
        head = fh.read(28)
        if head[:4] != _MAGIC:
            raise ValueError(f"{path}: not an HMAF file")
        version, n, res, kind, p, q = struct.unpack("<6I", head[4:])
        if version != 1:
            raise ValueError(f"{path}: unsupported HMAF version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridSpec(n, res)
    blocks = data.reshape(-1, *grid.shape)
    if kind == 0:
        return ScalarField(grid, blocks[0].copy())
    if kind == 1:
        cplx = (blocks[0::2] + 1j * blocks[1::2]).reshape((n, n) + grid.shape)
        return HermitianForm11Field(grid, np.moveaxis(cplx, (0, 1), (-2, -1)).copy())
    if kind == 2:
        cplx = (blocks[0::2] + 1j * blocks[1::2]).reshape((comb(n, p), comb(n, q)) + grid.shape)
        return FormField(grid, {(p, q): np.moveaxis(cplx, (0, 1), (-2, -1)).copy()})
    raise ValueError(f"{path}: unknown kind tag {kind}")
