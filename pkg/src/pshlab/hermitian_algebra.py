"""Pointwise multilinear algebra of Hermitian (1,1)-forms and (p,q)-forms on C^n, n <= 3.

A real (1,1)-form  alpha = i * sum_jk A_jk dz_j ^ dzbar_k  is represented by its Hermitian
coefficient matrix A.  Every function here is batched: matrices have shape (..., n, n) and
the leading axes are treated as independent points.

Volume convention (used by every module): the top form
    (i dz_1 ^ dzbar_1) ^ ... ^ (i dz_n ^ dzbar_n)
has density 1 against Lebesgue measure of total mass 1 on the unit torus.  With it,
alpha_1 ^ ... ^ alpha_n has density n! * D(A_1, ..., A_n), where D is the mixed
discriminant.  All wedge densities must go through :func:`wedge_top_density`.
"""

from functools import lru_cache
from itertools import combinations
from math import comb, factorial

import numpy as np

__all__ = [
    "DimensionError", "PositivityError", "PointForm",
    "hermitian_part", "det_herm", "eigvalsh", "mixed_discriminant", "wedge_top_density",
    "relative_trace", "popovici_pointwise", "is_positive_11", "is_weakly_positive_22",
    "default_tol", "direction_set", "pair_with_directions", "multi_indices", "random_hermitian", "random_positive",
]


class DimensionError(ValueError):
    """Inputs disagree on complex dimension, bidegree or grid."""


class PositivityError(ValueError):
    """A matrix that must be positive definite is not."""


def _check_n(n):
    if n not in (1, 2, 3):
        raise DimensionError(f"complex dimension must be 1, 2 or 3, got {n}")


def _stack(mats):
    mats = [np.asarray(m) for m in mats]
    if not mats:
        raise DimensionError("empty matrix list")
    n = mats[0].shape[-1]
    _check_n(n)
    for m in mats:
        if m.ndim < 2 or m.shape[-1] != n or m.shape[-2] != n:
            raise DimensionError(f"matrix of shape {m.shape} does not match n={n}")
    return mats, n


def hermitian_part(a):
    a = np.asarray(a)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def det_herm(a):
    """Real determinant of batched Hermitian matrices (closed form for n <= 3)."""
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0].real
    if n == 2:
        return (a[..., 0, 0].real * a[..., 1, 1].real - np.abs(a[..., 0, 1]) ** 2)
    if n == 3:
        a00, a11, a22 = a[..., 0, 0].real, a[..., 1, 1].real, a[..., 2, 2].real
        a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
        return (a00 * a11 * a22 + 2.0 * (a01 * a12 * np.conj(a02)).real
                - a00 * np.abs(a12) ** 2 - a11 * np.abs(a02) ** 2 - a22 * np.abs(a01) ** 2)
    return np.linalg.det(a).real


def eigvalsh(a):
    """Ascending eigenvalues of batched Hermitian matrices; closed form for n <= 2."""
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0].real[..., None]
    if n == 2:
        p, q = a[..., 0, 0].real, a[..., 1, 1].real
        m = 0.5 * (p + q)
        r = np.hypot(0.5 * (p - q), np.abs(a[..., 0, 1]))
        return np.stack([m - r, m + r], axis=-1)
    return np.linalg.eigvalsh(a)


def mixed_discriminant(mats):
    """D(A_1, ..., A_n) by polarization.

    D = (1/n!) sum over subsets S of (-1)^(n-|S|) det(sum_{i in S} A_i), which equals
    (1/n!) times the coefficient of t_1...t_n in det(t_1 A_1 + ... + t_n A_n).
    """
    mats, n = _stack(mats)
    if len(mats) != n:
        raise DimensionError(f"need exactly n={n} matrices, got {len(mats)}")
    if all(m is mats[0] for m in mats):
        return det_herm(mats[0])
    total = 0.0
    for r in range(1, n + 1):
        sign = (-1) ** (n - r)
        for subset in combinations(range(n), r):
            s = mats[subset[0]]
            for i in subset[1:]:
                s = s + mats[i]
            total = total + sign * det_herm(s)
    return total / factorial(n)


def wedge_top_density(mats):
    """Density of alpha_1 ^ ... ^ alpha_n in the fixed volume convention: n! * D."""
    mats, n = _stack(mats)
    return factorial(n) * mixed_discriminant(mats)


def default_tol(a):
    """Positivity tolerance 1e-10 * (1 + spectral-norm bound), per point."""
    a = np.asarray(a)
    norm = np.sqrt((np.abs(a) ** 2).sum(axis=(-1, -2)))
    return 1e-10 * (1.0 + norm)


def _require_pd(b, name="b"):
    w = eigvalsh(b)[..., 0]
    tol = default_tol(b)
    if np.any(w <= tol):
        raise PositivityError(f"{name} is not positive definite (min eigenvalue {w.min():.3e})")


def relative_trace(a, b):
    """tr(b^{-1} a) for Hermitian a and positive definite b."""
    a, b = np.asarray(a), np.asarray(b)
    _stack([a, b])
    _require_pd(b)
    return np.trace(np.linalg.solve(b, a), axis1=-2, axis2=-1).real


def popovici_pointwise(t1, t2, t3):
    """Both sides of the pointwise density-ratio inequality.

    lhs = [t1 ^ t3^{n-1} / t1^n] * [t2 ^ t1^{n-1} / t1^n]
    rhs = (1/n) * [t2 ^ t3^{n-1} / t1^n]
    """
    (t1, t2, t3), n = _stack([t1, t2, t3])
    for name, t in (("t1", t1), ("t2", t2), ("t3", t3)):
        _require_pd(t, name)
    vol1 = wedge_top_density([t1] * n)
    a = wedge_top_density([t1] + [t3] * (n - 1)) / vol1
    b = wedge_top_density([t2] + [t1] * (n - 1)) / vol1
    c = wedge_top_density([t2] + [t3] * (n - 1)) / vol1
    return a * b, c / n


def is_positive_11(a, tol=None):
    """(flag, worst eigenvalue) for a single or batched Hermitian matrix."""
    a = np.asarray(a)
    w = eigvalsh(a)[..., 0]
    if tol is None:
        tol = default_tol(a)
    worst = float(np.min(w))
    return bool(np.all(w >= -np.asarray(tol))), worst


# ---------------------------------------------------------------------------
# (p,q)-forms at a point (or batched over leading axes)

@lru_cache(maxsize=None)
def multi_indices(n, p):
    """Strictly increasing multi-indices of length p in range(n), lexicographic."""
    return tuple(combinations(range(n), p))


def _merge_sign(a, b):
    """Sign of the permutation sorting a+b, or 0 if they overlap."""
    if set(a) & set(b):
        return 0
    seq = list(a) + list(b)
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inv % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(n, p, q, r, s):
    """Entries (I, J, K, L, IK, JL, sign) for (dz_I^dzb_J) ^ (dz_K^dzb_L)."""
    out = []
    I_p, J_q = multi_indices(n, p), multi_indices(n, q)
    K_r, L_s = multi_indices(n, r), multi_indices(n, s)
    pos_pr = {m: i for i, m in enumerate(multi_indices(n, p + r))}
    pos_qs = {m: i for i, m in enumerate(multi_indices(n, q + s))}
    base = -1 if (q * r) % 2 else 1  # move dz_K past dzb_J
    for i, I in enumerate(I_p):
        for k, K in enumerate(K_r):
            s1 = _merge_sign(I, K)
            if not s1:
                continue
            ik = pos_pr[tuple(sorted(I + K))]
            for j, J in enumerate(J_q):
                for l, L in enumerate(L_s):
                    s2 = _merge_sign(J, L)
                    if s2:
                        out.append((i, j, k, l, ik, pos_qs[tuple(sorted(J + L))], base * s1 * s2))
    return tuple(out)


class PointForm:
    """A (p,q)-form with coefficients of shape (..., C(n,p), C(n,q)).

    coeffs[..., I, J] multiplies dz_I ^ dzbar_J (all dz factors first).
    """

    def __init__(self, n, p, q, coeffs):
        _check_n(n)
        if not (0 <= p <= n and 0 <= q <= n):
            raise DimensionError(f"bidegree ({p},{q}) invalid for n={n}")
        coeffs = np.asarray(coeffs, dtype=complex)
        want = (comb(n, p), comb(n, q))
        if coeffs.shape[-2:] != want:
            raise DimensionError(f"coefficient shape {coeffs.shape} does not end in {want}")
        self.n, self.p, self.q, self.coeffs = n, p, q, coeffs

    @property
    def bidegree(self):
        return (self.p, self.q)

    @classmethod
    def from_hermitian(cls, a):
        """The real (1,1)-form i * sum A_jk dz_j ^ dzbar_k."""
        a = np.asarray(a)
        return cls(a.shape[-1], 1, 1, 1j * a)

    def to_hermitian(self):
        if self.bidegree != (1, 1):
            raise DimensionError("only (1,1)-forms have a Hermitian matrix")
        return -1j * self.coeffs

    def wedge(self, other):
        """Exterior product; None when the bidegree would exceed (n, n)."""
        if self.n != other.n:
            raise DimensionError("dimension mismatch in wedge")
        n, p, q, r, s = self.n, self.p, self.q, other.p, other.q
        if p + r > n or q + s > n:
            return None  # the product vanishes for degree reasons
        a, b = self.coeffs, other.coeffs
        shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        out = np.zeros(shape + (comb(n, p + r), comb(n, q + s)), dtype=complex)
        for i, j, k, l, ik, jl, sign in _wedge_table(n, p, q, r, s):
            prod = a[..., i, j] * b[..., k, l]
            if sign > 0:
                out[..., ik, jl] += prod
            else:
                out[..., ik, jl] -= prod
        return PointForm(n, p + r, q + s, out)

    def __add__(self, other):
        if self.bidegree != other.bidegree or self.n != other.n:
            raise DimensionError("bidegree mismatch in sum")
        return PointForm(self.n, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        c = np.asarray(c)
        if c.ndim:
            c = c[..., None, None]
        return PointForm(self.n, self.p, self.q, c * self.coeffs)

    def power(self, k):
        """k-th wedge power (k >= 1)."""
        out = self
        for _ in range(k - 1):
            out = out.wedge(self)
        return out

    def top_density(self):
        """Density of an (n,n)-form in the fixed volume convention."""
        n = self.n
        if self.bidegree != (n, n):
            raise DimensionError(f"top_density needs bidegree ({n},{n}), got {self.bidegree}")
        unit = (1j ** n) * (-1) ** (n * (n - 1) // 2)
        return self.coeffs[..., 0, 0] / unit


def direction_set(n, count, seed=0, quasi=None):
    """Unit (1,0)-covectors in C^n: a deterministic low-discrepancy part plus seeded random ones.

    Returns an array of shape (count, n).  By default half the directions come from a scrambled
    Halton sequence with fixed seed 0 (deterministic) and the rest from ``seed``.
    """
    from scipy.stats import norm, qmc

    if quasi is None:
        quasi = (count + 1) // 2
    quasi = min(quasi, count)
    parts = []
    if quasi:
        pts = qmc.Halton(d=2 * n, scramble=True, seed=0).random(quasi)
        parts.append(norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12)))
    if count - quasi:
        parts.append(np.random.default_rng(seed).standard_normal((count - quasi, 2 * n)))
    g = np.concatenate(parts, axis=0)
    z = g[:, :n] + 1j * g[:, n:]
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@lru_cache(maxsize=None)
def _pairing_tensor(n):
    """T[I, J, k, l] with density(theta ^ i G) = sum theta[I, J] G[k, l] T[I, J, k, l] for (n-1,n-1) theta."""
    m = comb(n, n - 1)
    T = np.zeros((m, m, n, n), dtype=complex)
    for I in range(m):
        for J in range(m):
            e = np.zeros((m, m), dtype=complex)
            e[I, J] = 1.0
            for k in range(n):
                for l in range(n):
                    G = np.zeros((n, n), dtype=complex)
                    G[k, l] = 1.0
                    T[I, J, k, l] = PointForm(n, n - 1, n - 1, e).wedge(PointForm.from_hermitian(G)).top_density()
    return T


def pair_with_directions(theta, gammas):
    """Densities of theta ^ (i g ^ gbar) for an (n-1,n-1)-form theta and directions g (shape (d, n)).

    Returns an array of shape (..., d)."""
    n = theta.n
    if theta.bidegree != (n - 1, n - 1):
        raise DimensionError("pairing needs an (n-1,n-1)-form")
    gammas = np.asarray(gammas)
    G = gammas[:, :, None] * np.conj(gammas[:, None, :])
    W = np.einsum("IJkl,dkl->IJd", _pairing_tensor(n), G)
    c = theta.coeffs
    m = c.shape[-1]
    out = c.reshape(-1, m * m) @ W.reshape(m * m, -1)
    return out.real.reshape(c.shape[:-2] + (len(gammas),))


def is_weakly_positive_22(theta, directions=64, tol=1e-10, seed=0):
    """Weak positivity of a (2,2)-form in n=3 via pairings theta ^ (i gamma ^ gammabar).

    Returns (flag, worst pairing density); works batched over leading axes of theta.
    """
    if theta.n != 3 or theta.bidegree != (2, 2):
        raise DimensionError("weak (2,2)-positivity is implemented for n=3, bidegree (2,2)")
    gam = direction_set(3, directions, seed) if np.isscalar(directions) else np.asarray(directions)
    worst = float(np.min(pair_with_directions(theta, gam)))
    return worst >= -tol, worst


def random_hermitian(rng, n, size=()):
    size = tuple(np.atleast_1d(size)) if size != () else ()
    g = rng.standard_normal(size + (n, n)) + 1j * rng.standard_normal(size + (n, n))
    return 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))


def random_positive(rng, n, size=(), floor=0.05):
    size = tuple(np.atleast_1d(size)) if size != () else ()
    g = rng.standard_normal(size + (n, n)) + 1j * rng.standard_normal(size + (n, n))
    return g @ np.conj(np.swapaxes(g, -1, -2)) / n + floor * np.eye(n)
