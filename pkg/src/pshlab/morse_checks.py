"""Gauduchon metrics, the Lamari pairing scan, integrated Popovici inequalities and
epsilon-ladder mass convergence for closed nef forms."""

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from . import hermitian_algebra as ha
from .form_calculus import (
    FormField, HermitianForm11Field, ScalarField, Slot, _dz_symbols, _hess_symbols, ddc, fft_workers,
    integrate, mixed_ma_density, partial, partial_bar,
)
from .scenarios import iter_psh, random_modes
from .volume_bounds import Family, eps_ladder, fit_slopes, omega_masses

__all__ = [
    "GauduchonFamily", "GauduchonError", "is_gauduchon", "gauduchon_defect", "gauduchon_family",
    "conformal_gauduchon", "lamari_pairing_scan", "popovici_integrated", "morse_mass_convergence",
]


class GauduchonError(ValueError):
    """A family member is not positive, or the conformal correction failed."""


def _ddc_form(f):
    return partial(partial_bar(f)).scale(1j)


def gauduchon_defect(theta):
    """sup-norm of the coefficients of dd^c(theta^(n-1))."""
    n = theta.grid.n
    if n == 1:
        return 0.0
    if theta.is_constant:
        return 0.0
    return _ddc_form(theta.to_form().power(n - 1)).sup_norm()


def is_gauduchon(theta, tol=1e-8):
    """(flag, defect); raises GauduchonError when theta is not positive definite."""
    lo = float(np.min(theta.min_eigenvalue()))
    if lo <= 0:
        raise GauduchonError(f"theta is not positive definite (eigenvalue {lo:.3e})")
    d = gauduchon_defect(theta)
    return bool(d <= tol), d


@dataclass
class GauduchonFamily:
    description: dict
    members: list
    defects: list = field(default_factory=list)
    kinds: list = field(default_factory=list)


def _random_constant(rng, n, floor=0.3):
    return ha.random_positive(rng, n, (), floor=floor)


def _kahler_member(grid, theta0, rng, K, fraction=0.5):
    """theta0 + dd^c chi with chi random band-limited, amplitude at `fraction` of the cone limit."""
    chi = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K))
    H = ddc(chi).mats
    M = np.broadcast_to(theta0, H.shape)
    L = np.linalg.cholesky(M)
    Li = np.linalg.inv(L)
    C = Li @ H @ np.conj(np.swapaxes(Li, -1, -2))
    lam = float(np.linalg.eigvalsh(0.5 * (C + np.conj(np.swapaxes(C, -1, -2))))[..., 0].min())
    a = fraction / -lam if lam < 0 else 1.0
    return HermitianForm11Field(grid, theta0 + a * H)


def _localized_member(grid, theta0, zero_at, power, floor):
    """theta0 + dd^c chi(x_1) with theta_11 = theta0_11 * g, g = ((1 - cos 2 pi (x_1 - zero_at))^p + floor) / mean.

    g is band-limited with mean 1, so chi exists and theta is closed; theta_11 is smallest
    near x_1 = zero_at.
    """
    x1 = (np.arange(grid.res) / grid.res)
    g = (1.0 - np.cos(2 * np.pi * (x1 - zero_at))) ** power + floor
    g = g / g.mean()
    m = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
    m[...] = theta0
    shape = [1] * grid.ndim
    shape[0] = grid.res
    m[..., 0, 0] = theta0[0, 0].real * g.reshape(shape) * np.ones(grid.shape)
    return HermitianForm11Field(grid, m)


def conformal_gauduchon(theta_t, rtol=1e-12, maxiter=200):
    """w^{1/(n-1)} theta_t with dd^c(w theta_t^(n-1)) = 0, mean(w) = 1 (a linear problem in w).

    The operator w -> top density of dd^c(w Psi), Psi = theta_t^(n-1), is solved by GMRES with
    the constant-coefficient part dd^c w ^ mean(theta_t)^(n-1) as preconditioner.
    """
    grid, n = theta_t.grid, theta_t.grid.n
    if n == 1:
        return theta_t, np.ones(grid.shape)
    # dd^c(w Psi) has top density sum_jk d_j dbar_k (w T_jk), T_jk = density of i dz_j ^ dzbar_k ^ Psi
    psi = theta_t.to_form().power(n - 1)
    P = ha.PointForm(n, n - 1, n - 1, np.broadcast_to(psi.parts[(n - 1, n - 1)],
                                                      grid.shape + psi.parts[(n - 1, n - 1)].shape[-2:]))
    T = {}
    for j in range(n):
        for k in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[j, k] = 1j
            T[(j, k)] = ha.PointForm(n, 1, 1, e).wedge(P).top_density()
    dz, dzb = _dz_symbols(n, grid.res)
    axes = tuple(range(grid.ndim))

    def A(w):
        w = w.reshape(grid.shape)
        acc = 0.0
        for (j, k), t in T.items():
            acc = acc + dz[j] * dzb[k] * sfft.fftn(w * t, axes=axes, workers=fft_workers())
        return sfft.ifftn(acc, axes=axes, workers=fft_workers()).real.ravel()

    tbar = theta_t.mats.reshape(-1, n, n).mean(axis=0)
    cof = np.linalg.det(tbar) * np.linalg.inv(tbar)
    coef = (factorial(n - 1)) * cof
    sym = _hess_symbols(n, grid.res, real=True)
    S = 0.0
    for j in range(n):
        S = S + coef[j, j].real * sym[(j, j)]
        for k in range(j + 1, n):
            re, im = sym[(j, k)]
            S = S + 2.0 * (coef[k, j].real * re - coef[k, j].imag * im)
    S = np.where(S == 0, np.inf, S)

    def pc(r):
        R = sfft.rfftn(r.reshape(grid.shape), workers=fft_workers())
        return sfft.irfftn(R / S, s=grid.shape, workers=fft_workers()).ravel()

    N = grid.points
    rhs = -A(np.ones(N))
    v, info = gmres(LinearOperator((N, N), matvec=A, dtype=float), rhs,
                    M=LinearOperator((N, N), matvec=pc, dtype=float), rtol=rtol, restart=60,
                    maxiter=maxiter)
    w = 1.0 + v - v.mean()
    if w.min() <= 0:
        raise GauduchonError("conformal factor is not positive")
    w = w.reshape(grid.shape)
    return theta_t.scale(ScalarField(grid, w ** (1.0 / (n - 1)))), w


def gauduchon_family(grid, size=8, seed=0, K=1, localized=False, anisotropy=1e-3,
                     nonkahler_amplitude=0.2, tol=1e-8):
    """Positive Gauduchon metrics on the grid.

    n = 2: theta_0 + dd^c chi (pluriclosed, hence Gauduchon), and with localized=True members
    diag(g, eta) with g concentrated away from x_1 = 0 (where the collapsing form lives).
    n >= 3: constant metrics plus conformally corrected perturbations theta_0 + a S (S a
    random non-closed Hermitian field).
    """
    n = grid.n
    rng = np.random.default_rng([seed, 11])
    members, kinds = [], []
    for k in range(size):
        theta0 = _random_constant(rng, n)
        if localized:
            t0 = np.diag([1.0] + [anisotropy] * (n - 1)).astype(complex)
            members.append(_localized_member(grid, t0, 0.0, 1 + k % 4, anisotropy))
            kinds.append(f"localized_p{1 + k % 4}")
        elif n == 2:
            members.append(_kahler_member(grid, theta0, rng, K))
            kinds.append("kahler_perturbation")
        elif k % 2 == 0:
            members.append(HermitianForm11Field.constant(grid, theta0))
            kinds.append("constant")
        else:
            S = np.zeros(grid.shape + (n, n), dtype=complex)
            for j in range(n):
                for l in range(j, n):
                    f = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K)).values
                    if j == l:
                        S[..., j, j] = f
                    else:
                        g = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K)).values
                        S[..., j, l] = f + 1j * g
                        S[..., l, j] = f - 1j * g
            S /= max(np.abs(ha.eigvalsh(S)).max(), 1e-300)
            floor = float(ha.eigvalsh(theta0)[0])
            theta_t = HermitianForm11Field(grid, theta0 + nonkahler_amplitude * floor * S)
            members.append(conformal_gauduchon(theta_t)[0])
            kinds.append("conformal_correction")
    defects = []
    for m in members:
        ok, d = is_gauduchon(m, tol)
        if not ok:
            raise GauduchonError(f"family member failed the Gauduchon test (defect {d:.3e})")
        defects.append(d)
    desc = {"size": size, "seed": seed, "K": K, "localized": localized, "n": n}
    return GauduchonFamily(desc, members, defects, kinds)


def lamari_pairing_scan(s, fam):
    """Family minimum of int omega ^ theta^(n-1) / int omega_X ^ theta^(n-1) (family-restricted)."""
    if not fam.members:
        raise ValueError("empty family")
    n, grid = s.n, s.grid
    ratios = []
    for th in fam.members:
        num = integrate(mixed_ma_density([s.omega] + [th] * (n - 1), grid))
        den = integrate(mixed_ma_density([s.omega_X] + [th] * (n - 1), grid))
        if den <= 0:
            raise AssertionError("non-positive pairing with omega_X")
        ratios.append(num / den)
    k = int(np.argmin(ratios))
    return float(ratios[k]), k, ratios


def popovici_integrated(t1, t2, t3, constructed=False):
    """(lhs, rhs, constructed) for (int t1 ^ t3^(n-1)) (int t1^(n-1) ^ t2) >= rhs.

    rhs = (1/n) (int sqrt(f23 f11))^2 with f23, f11 the densities of t2 ^ t3^(n-1) and t1^n;
    with constructed=True, t1 is first rescaled by c = (f23 / f11)^(1/n) so that
    t1^n = t2 ^ t3^(n-1) and rhs = (1/n) (int t1^n)^2.
    """
    grid, n = t1.grid, t1.grid.n
    for name, t in (("t1", t1), ("t2", t2), ("t3", t3)):
        if float(np.min(t.min_eigenvalue())) <= 0:
            raise ha.PositivityError(f"{name} is not positive definite")
    f23 = mixed_ma_density([t2] + [t3] * (n - 1), grid).values
    if constructed:
        f11 = mixed_ma_density([t1] * n, grid).values
        c = (f23 / f11) ** (1.0 / n)
        t1 = t1.scale(ScalarField(grid, c))
        if float(np.min(t1.min_eigenvalue())) <= 0:
            raise AssertionError("rescaled t1 lost positivity")
    f11 = mixed_ma_density([t1] * n, grid).values
    lhs = integrate(mixed_ma_density([t1] + [t3] * (n - 1), grid)) * \
        integrate(mixed_ma_density([t2] + [t1] * (n - 1), grid))
    if constructed:
        rhs = integrate(f11) ** 2 / n
    else:
        rhs = integrate(np.sqrt(f23 * f11)) ** 2 / n
    return lhs, rhs, constructed


def _masses_on(se, family, js, second=None):
    """Family masses int (omega_eps + dd^c u)^j ^ omega^(n-j) (or ^ second^(n-j))."""
    n, grid = se.n, se.grid
    out = []
    for smp in family.samples(se):
        slot = smp.slot(se.omega)
        row = {}
        for j in js:
            tail = [se.omega if second is None else second] * (n - j)
            row[j] = integrate(mixed_ma_density([slot] * j + tail, grid))
        out.append(row)
        smp.release()
    return out


def morse_mass_convergence(s, ladder=None, family=None, with_psi=True):
    """Per eps: max deviations of family masses from int omega^n and int omega^(n-1) ^ omega'.

    Deviations against the exact rung values int omega_eps^n and int omega_eps^(n-1) ^ omega'_eps
    are reported as spectral deviations (they vanish for closed forms by Stokes).
    """
    if not s.closed:
        raise ValueError("morse_mass_convergence needs a closed omega")
    ladder = eps_ladder() if ladder is None else list(ladder)
    family = Family(6) if family is None else family
    n, grid = s.n, s.grid
    op = s.extras.get("omega_prime", s.omega_X)
    base = omega_masses(s)
    base_mixed = integrate(mixed_ma_density([s.omega] * (n - 1) + [op], grid))
    rows = []
    for eps in ladder:
        se = s.regularized(eps)
        ope = op + s.omega_X.scale(eps)
        vol = omega_masses(se)
        vol_mixed = integrate(mixed_ma_density([se.omega] * (n - 1) + [ope], grid))
        top = [r[n] for r in _masses_on(se, family, [n])]
        if with_psi:
            sp = se.with_omega(ope, "omega_prime_eps")
            psi_slots = [smp.slot(ope) for smp in Family(family.count, family.seed + 1, family.max_freq).samples(sp)]
            mixed = []
            for smp, ps in zip(family.samples(se), psi_slots):
                mixed.append(integrate(mixed_ma_density([smp.slot(se.omega)] * (n - 1) + [ps], grid)))
        else:
            mixed = [r[n - 1] for r in _masses_on(se, family, [n - 1], second=ope)]
        rows.append({
            "eps": eps,
            "deviation": max(abs(m - base) for m in top),
            "mixed_deviation": max(abs(m - base_mixed) for m in mixed),
            "spectral_deviation": max(abs(m - vol) for m in top) / vol,
            "mixed_spectral_deviation": max(abs(m - vol_mixed) for m in mixed) / vol_mixed,
        })
    C, change = fit_slopes(ladder, [r["deviation"] for r in rows])
    Cm, change_m = fit_slopes(ladder, [r["mixed_deviation"] for r in rows])
    for r, c, cm in zip(rows, C, Cm):
        r["C"], r["C_mixed"] = c, cm
    return {"rows": rows, "C_max_relative_change": change, "C_mixed_max_relative_change": change_m,
            "spectral_deviation": max(max(r["spectral_deviation"], r["mixed_spectral_deviation"]) for r in rows),
            "volume": base, "mixed_volume": base_mixed}
