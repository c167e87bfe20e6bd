"""omega-psh envelopes P_omega(h) by the beta-exponential Monge-Ampere scheme.

For each beta of an increasing schedule we solve, by damped Newton-Krylov,

    G(M + H[phi]) = det(M) * exp(g),    g = log(exp(beta (phi - h)) + exp(-L)),

where G(A) = prod(lambda_i^+) + sum(lambda_i^-) is a Lipschitz extension of det from the
positive cone (it agrees with det on positive matrices and is negative outside the cone,
so any solution lies in the cone).  The soft floor exp(-L) keeps the right-hand side
representable in double precision far below the obstacle; it enters the error bounds
through scheme_tol and defect_tol below.

envelope_obstacle_1d is an independent oracle for n = 1 (projected SOR on the
second-difference Laplacian); it shares no code with the beta scheme.
"""

from dataclasses import dataclass, field
from math import factorial, log

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from . import hermitian_algebra as ha
from .form_calculus import (
    Comp, ScalarField, Slot, _hess_symbols, _slabs, cone_check, fft_workers, integrate,
    mixed_ma_density,
)

__all__ = [
    "EnvelopeResult", "SchemeError", "default_betas", "scheme_tol", "defect_tol", "default_tau",
    "envelope_beta", "envelope_obstacle_1d", "orthogonality_defect", "envelope_min_check",
    "crease_mask", "box_family", "FLOOR_L", "BUILTIN_OBSTACLES", "builtin_obstacle",
]

FLOOR_L = 12.0


class SchemeError(RuntimeError):
    """Newton failed to converge at some beta."""

    def __init__(self, msg, beta, residual):
        super().__init__(msg)
        self.beta, self.residual = beta, residual


def default_betas(beta_max=16384, start=16.0):
    """start, 4 start, 16 start, ... up to beta_max (beta_max appended if not on the ladder).

    Rungs below 16 are pre-asymptotic: they cost Newton steps and their step distances are
    not yet monotone.
    """
    out, b = [], float(start)
    while b < beta_max:
        out.append(b)
        b *= 4
    out.append(float(beta_max))
    return out


def scheme_tol(beta_max, L=FLOOR_L):
    """Uniform error scale of the discrete scheme: (L + 2) / beta_max.

    |phi_beta - h| on the contact set is log(density ratio) / beta, and re-solving with an
    envelope as obstacle moves it by at most about L / beta (the floor); 2 covers log-ratios
    up to e^2.
    """
    return (L + 2.0) / beta_max


def default_tau(beta_max, L=FLOOR_L):
    return max(10.0 / beta_max, 5.0 * scheme_tol(beta_max, L))


def defect_tol(beta_max, tau, total_mass, newton_tol=0.0, n=1, L=FLOOR_L):
    """Bound on the MA mass of phi_beta on {phi < h - tau}.

    There the right-hand side is at most det(M) (exp(-beta tau) + exp(-L)), so the mass is
    bounded by total_mass (exp(-beta tau) + exp(-L)) + n! newton_tol.
    """
    return total_mass * (np.exp(-beta_max * tau) + np.exp(-L)) + factorial(n) * newton_tol


@dataclass
class EnvelopeResult:
    phi: ScalarField
    beta_trace: list
    contact_mask: np.ndarray
    orthogonality_defect: float
    sup_violation: float
    tau: float = 0.0
    scheme_tol: float = 0.0
    beta_max: float = 0.0
    step_distances: list = field(default_factory=list)
    min_eigenvalue: float = 0.0
    total_mass: float = 0.0

    def metrics(self):
        return {
            "sup_violation": self.sup_violation,
            "orthogonality_defect": self.orthogonality_defect,
            "tau": self.tau, "scheme_tol": self.scheme_tol, "beta_max": self.beta_max,
            "contact_fraction": float(np.mean(self.contact_mask)),
            "min_eigenvalue": self.min_eigenvalue, "total_mass": self.total_mass,
            "beta_trace": [list(t) for t in self.beta_trace],
            "step_distances": list(self.step_distances),
            "beta_step_distances_decreasing": bool(np.all(np.diff(self.step_distances) < 0)),
        }


# ---------------------------------------------------------------------------
# builtin obstacles

def _well(x, centre, p=4):
    """((1 + cos 2 pi (x - centre)) / 2)^p: band-limited, peaked at centre."""
    return ((1.0 + np.cos(2 * np.pi * (x - centre))) / 2.0) ** p


def _prod_well(grid, centre, p=4):
    out = 1.0
    for c in grid.coords():
        out = out * _well(c, centre, p)
    return np.broadcast_to(out, grid.shape)


def _obstacle_bump(grid, seed):
    return 1.0 - 2.0 * _prod_well(grid, 0.5)


def _obstacle_two_wells(grid, seed):
    return 0.5 - 0.4 * (_prod_well(grid, 0.25) + _prod_well(grid, 0.75))


def _obstacle_min_pair(grid, seed):
    # each piece has (1/4) Laplacian >= -1 / (n-dims) so both are admissible for omega = identity
    x = grid.coords()
    nd = grid.ndim
    amp = 0.8 / (np.pi ** 2 * nd)
    h1 = amp
    for c in x:
        h1 = h1 * np.cos(2 * np.pi * c)
    h2 = 0.5 * amp * np.sin(2 * np.pi * sum(x)) + 0.3 * amp
    return np.minimum(np.broadcast_to(h1, grid.shape), np.broadcast_to(h2, grid.shape))


def _obstacle_random(grid, seed):
    from .scenarios import random_modes
    rng = np.random.default_rng([seed, 3])
    f = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, 2)).values
    return 0.3 * f / max(np.abs(f).max(), 1e-300)


BUILTIN_OBSTACLES = {
    "bump": _obstacle_bump,
    "two_wells": _obstacle_two_wells,
    "min_pair": _obstacle_min_pair,
    "random": _obstacle_random,
}


def builtin_obstacle(name, grid, seed=0):
    """Named obstacle on the grid: bump (1 - 2 well), two_wells, min_pair (minimum of two
    admissible obstacles for omega = identity), random (seeded band-limited)."""
    if name not in BUILTIN_OBSTACLES:
        raise ValueError(f"unknown builtin obstacle {name!r}; choose from {sorted(BUILTIN_OBSTACLES)}")
    return ScalarField(grid, np.ascontiguousarray(BUILTIN_OBSTACLES[name](grid, seed), dtype=float))


# ---------------------------------------------------------------------------
# pointwise pieces of the extended determinant

def _eig(A):
    """Eigenvalues (ascending) and, for n = 3, eigenvectors of stacked matrices (N, n, n)."""
    n = A.shape[-1]
    if n <= 2:
        return ha.eigvalsh(A), None
    return np.linalg.eigh(A)


def _gdet(w):
    return np.prod(np.clip(w, 0.0, None), axis=-1) + np.clip(w, None, 0.0).sum(axis=-1)


def _gcoef(A, w, V):
    """Derivative of G at A: adj(A) on the cone, the projector onto the non-positive eigenspace off it."""
    N, n = A.shape[0], A.shape[-1]
    if n == 1:
        return np.ones((N, 1, 1), dtype=complex)
    pd = w[:, 0] > 0
    if n == 2:
        adj = np.empty_like(A)
        adj[:, 0, 0], adj[:, 1, 1] = A[:, 1, 1], A[:, 0, 0]
        adj[:, 0, 1], adj[:, 1, 0] = -A[:, 0, 1], -A[:, 1, 0]
        lo, hi = w[:, 0], w[:, 1]
        gap = np.where(hi - lo > 0, hi - lo, 1.0)
        proj = (hi[:, None, None] * np.eye(2) - A) / gap[:, None, None]
        off = np.where((hi <= 0)[:, None, None], np.broadcast_to(np.eye(2), A.shape), proj)
        return np.where(pd[:, None, None], adj, off)
    adj = np.linalg.det(A)[:, None, None] * np.linalg.inv(np.where(pd[:, None, None], A, np.eye(n)))
    neg = (w <= 0).astype(float)
    proj = np.einsum("nik,nk,njk->nij", V, neg, np.conj(V))
    return np.where(pd[:, None, None], adj, proj)


class _Operator:
    """Spectral Hessian machinery on a fixed grid (rfft layout)."""

    def __init__(self, grid):
        self.grid = grid
        self.shape = grid.shape
        self.sym = _hess_symbols(grid.n, grid.res, real=True)

    def parts(self, v):
        U = sfft.rfftn(v.reshape(self.shape), workers=fft_workers())
        inv = lambda s: sfft.irfftn(U * s, s=self.shape, workers=fft_workers())
        return {k: (inv(s) if k[0] == k[1] else (inv(s[0]), inv(s[1]))) for k, s in self.sym.items()}

    def matrices(self, M, v):
        """Stacked (N, n, n) matrices M + H[v]."""
        n = self.grid.n
        p = self.parts(v)
        A = np.empty((self.grid.points, n, n), dtype=complex)
        for j in range(n):
            A[:, j, j] = p[(j, j)].ravel()
            for k in range(j + 1, n):
                A[:, j, k] = (p[(j, k)][0] + 1j * p[(j, k)][1]).ravel()
                A[:, k, j] = np.conj(A[:, j, k])
        return A + M

    def tr_bh(self, B, v):
        """tr(B H[v]) with B given as components (N-arrays)."""
        n = self.grid.n
        p = self.parts(v)
        t = 0.0
        for j in range(n):
            t = t + B[(j, j)].real * p[(j, j)].ravel()
            for k in range(j + 1, n):
                re, im = p[(j, k)]
                t = t + 2.0 * (B[(k, j)].real * re.ravel() - B[(k, j)].imag * im.ravel())
        return t

    def symbol_tr(self, C):
        n = self.grid.n
        t = 0.0
        for j in range(n):
            t = t + C[j, j].real * self.sym[(j, j)]
            for k in range(j + 1, n):
                re, im = self.sym[(j, k)]
                t = t + 2.0 * (C[k, j].real * re - C[k, j].imag * im)
        return t

    def solve_symbol(self, d, sym):
        D = sfft.rfftn(d.reshape(self.shape), workers=fft_workers())
        return sfft.irfftn(D / sym, s=self.shape, workers=fft_workers()).ravel()


def _omega_stack(omega, grid):
    m = omega.mats
    if omega.is_constant:
        return m.reshape(1, grid.n, grid.n)
    return np.ascontiguousarray(np.broadcast_to(m, grid.shape + (grid.n, grid.n))).reshape(-1, grid.n, grid.n)


def envelope_beta(s, h, beta_schedule=None, newton_opts=None):
    """P_omega(h) for a scenario with positive definite omega (see module docstring).

    newton_opts: tol (sup-norm of the residual, default 1e-9 * max det M), max_newton (60
    per beta), L (floor, default 12), tau (contact threshold), gmres_rtol (1e-2),
    verbose (False), phi0 (initial iterate, default min h; a warm start lets a one-rung
    schedule [beta_max] reach the same discrete solution).
    """
    grid = s.grid
    opts = {"tol": None, "max_newton": 60, "L": FLOOR_L, "tau": None, "gmres_rtol": 1e-2,
            "verbose": False, "min_step": 2.0 ** -10, "cone_strict": False, "phi0": None}
    opts.update(newton_opts or {})
    betas = [float(b) for b in (beta_schedule or default_betas())]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta schedule must be increasing")
    if h.grid != grid:
        raise ValueError("obstacle grid does not match the scenario")
    n, N, L = grid.n, grid.points, opts["L"]
    M = _omega_stack(s.omega, grid)
    wM = ha.eigvalsh(M)[:, 0]
    if wM.min() <= 1e-12:
        raise ValueError("envelope_beta needs positive definite omega; pass omega + eps * omega_X")
    detM = ha.det_herm(M).real
    detM_full = np.broadcast_to(detM, (N,)) if detM.size == 1 else detM
    tol = opts["tol"] if opts["tol"] is not None else 1e-9 * float(detM.max())
    kscale = float(wM.max())
    op = _Operator(grid)
    hf = h.values.ravel()

    def residual(phi, beta):
        A = op.matrices(M, phi)
        w, V = _eig(A)
        z = beta * (phi - hf)
        g = np.logaddexp(z, -L)
        return _gdet(w) - detM_full * np.exp(g), (A, w, V, z, g)

    if opts["phi0"] is None:
        phi = np.full(N, hf.min())
    else:
        p0 = opts["phi0"]
        phi = np.array((p0.values if isinstance(p0, ScalarField) else p0), dtype=float).ravel()
        if phi.size != N:
            raise ValueError("phi0 does not match the grid")
    trace, dists = [], []
    prev = None
    for beta in betas:
        F, aux = residual(phi, beta)
        its = lin_total = 0
        eta = opts["gmres_rtol"]
        while np.abs(F).max() >= tol:
            if its >= opts["max_newton"]:
                raise SchemeError(f"Newton did not converge at beta={beta:g} "
                                  f"(residual {np.abs(F).max():.3e})", beta, float(np.abs(F).max()))
            its += 1
            A, w, V, z, g = aux
            B = _gcoef(A, w, V)
            sig = 0.5 * (1.0 + np.tanh(0.5 * (z + L)))
            c = detM_full * np.exp(g) * beta * sig
            sc = 1.0 / np.real(np.trace(B, axis1=1, axis2=2))
            Bs = B * sc[:, None, None]
            cc = sc * c
            Bcomp = {(j, k): Bs[:, j, k] for j in range(n) for k in range(n)}
            tsym = op.symbol_tr(Bs.mean(axis=0))
            kappa = float(np.abs(tsym).mean())
            W = kappa / (kappa + cc)
            shifted = tsym - max(float(cc.min()), 1e-3 * kappa)
            ccs = np.maximum(cc, 1e-300)

            def precond(d, W=W, shifted=shifted, ccs=ccs):
                return W * op.solve_symbol(W * d, shifted) - (1.0 - W) * d / ccs

            def matvec(d, Bcomp=Bcomp, cc=cc):
                return op.tr_bh(Bcomp, d) - cc * d

            t, n0 = 1.0, np.linalg.norm(F)
            for rtol, maxiter in ((eta, 20), (1e-10, 100)):
                count = [0]
                delta, _ = gmres(LinearOperator((N, N), matvec=matvec, dtype=float), -sc * F,
                                 M=LinearOperator((N, N), matvec=precond, dtype=float),
                                 rtol=rtol, restart=100, maxiter=maxiter,
                                 callback=lambda _r: count.__setitem__(0, count[0] + 1),
                                 callback_type="pr_norm")
                lin_total += count[0]
                t = 1.0
                while t >= opts["min_step"]:
                    F1, aux1 = residual(phi + t * delta, beta)
                    inside = not opts["cone_strict"] or aux1[1][:, 0].min() > -1e-12 * kscale
                    if inside and np.linalg.norm(F1) <= (1.0 - 1e-4 * t) * n0:
                        break
                    t *= 0.5
                else:
                    continue  # retry with an accurate linear solve
                break
            else:
                raise SchemeError(f"line search failed at beta={beta:g} "
                                  f"(residual {np.abs(F).max():.3e})", beta, float(np.abs(F).max()))
            eta = min(opts["gmres_rtol"], max(1e-8, 0.9 * (np.linalg.norm(F1) / n0) ** 2))
            phi = phi + t * delta
            F, aux = F1, aux1
        if aux[1][:, 0].min() <= 0:
            raise SchemeError(f"converged iterate left the cone at beta={beta:g}", beta,
                              float(np.abs(F).max()))
        trace.append((beta, its, float(np.abs(F).max()), lin_total))
        if opts["verbose"]:
            print(f"beta={beta:g} newton={its} gmres={lin_total} residual={np.abs(F).max():.2e}", flush=True)
        if prev is not None:
            dists.append(float(np.abs(phi - prev).max()))
        prev = phi.copy()

    A, w, _, _, _ = aux
    min_eig = float(w[:, 0].min())
    phi_f = ScalarField(grid, phi.reshape(grid.shape))
    beta_max = betas[-1]
    tau = opts["tau"] if opts["tau"] is not None else default_tau(beta_max, L)
    dens = factorial(n) * ha.det_herm(A).real
    total = float(np.mean(dens))
    below = phi < hf - tau
    defect = float(np.sum(dens[below]) / N)
    return EnvelopeResult(
        phi=phi_f, beta_trace=trace,
        contact_mask=(np.abs(phi - hf) <= tau).reshape(grid.shape),
        orthogonality_defect=max(defect, 0.0),
        sup_violation=float(max(np.max(phi - hf), 0.0)),
        tau=tau, scheme_tol=scheme_tol(beta_max, L), beta_max=beta_max,
        step_distances=dists, min_eigenvalue=min_eig, total_mass=total,
    )


def orthogonality_defect(s, result, h, tau=None):
    """Integral of ma_density(omega, phi) over {phi < h - tau}."""
    tau = result.tau if tau is None else tau
    phi = result.phi
    dens = mixed_ma_density([Slot.of((s.omega, phi), s.grid)] * s.n, s.grid).values
    return float(max(np.sum(dens[phi.values < h.values - tau]) / s.grid.points, 0.0))


# ---------------------------------------------------------------------------
# n = 1 oracle

def envelope_obstacle_1d(m, h, tol=1e-12, maxit=500000, omega_sor=None):
    """Largest grid u <= h with m + (1/4) Lap_h u >= 0, by red-black projected SOR.

    Lap_h is the five-point second-difference Laplacian on the periodic grid.  The stopping
    test is max |min(h - u, (m + Lap_h u / 4) dx^2)| <= tol.
    """
    grid = h.grid
    if grid.n != 1:
        raise ValueError("envelope_obstacle_1d is the n = 1 oracle")
    hv = h.values
    mv = np.broadcast_to(m.values if isinstance(m, ScalarField) else np.asarray(m, float), hv.shape)
    if np.any(mv < 0):
        raise ValueError("omega density must be non-negative")
    res = grid.res
    dx2 = grid.spacing ** 2
    om = omega_sor if omega_sor is not None else 2.0 / (1.0 + np.sin(np.pi / res))
    i, j = np.indices(hv.shape)
    red = (i + j) % 2 == 0
    u = np.full(hv.shape, hv.min())
    src = 4.0 * mv * dx2

    def nb(v):
        return np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1)

    for it in range(maxit):
        for mask in (red, ~red):
            gs = (nb(u) + src) / 4.0
            u = np.where(mask, np.minimum(hv, u + om * (gs - u)), u)
        if it % 20 == 0:
            r = np.abs(np.minimum(hv - u, (mv + 0.25 * (nb(u) - 4.0 * u) / dx2) * dx2)).max()
            if r <= tol:
                return ScalarField(grid, u)
    raise RuntimeError(f"projected SOR did not reach {tol:g} in {maxit} sweeps")


# ---------------------------------------------------------------------------
# envelopes of minima

def crease_mask(u, v, cells=0.5):
    """Grid points within `cells` grid spacings of {u = v}, by the first-order distance |d| / |grad d|.

    d = u - v; the default 0.5 marks the cells the crease passes through.
    """
    grid = u.grid
    d = u.values - v.values
    g = np.gradient(d, grid.spacing, axis=tuple(range(d.ndim)))
    if d.ndim == 1:
        g = [g]
    gn = np.sqrt(sum(gi ** 2 for gi in g))
    return np.abs(d) <= cells * grid.spacing * gn


def box_family(grid, splits=2):
    """The fixed family of sub-boxes: each real axis cut into `splits` equal intervals."""
    edges = [slice(k * grid.res // splits, (k + 1) * grid.res // splits) for k in range(splits)]
    boxes = [()]
    for _ in range(grid.ndim):
        boxes = [b + (e,) for b in boxes for e in edges]
    return boxes


def envelope_min_check(s, u, v, beta_schedule=None, newton_opts=None, tol=1e-4):
    """Envelope-of-minimum inequalities, integrated over sub-boxes minus the crease neighbourhood.

    Checks per box B' = box minus crease:
      mass_w(B') <= mass_u(B') + mass_v(B') + tol * total,
      int_B' density_w <= int_B' max(f, g) + tol * total,
      int_B' density(max(u, v)) >= int_B' min(f, g) - tol * total,
    where w = P(min(u, v)), f = ma(u), g = ma(v), and off the crease the density of
    max(u, v) is that of the locally active branch.
    """
    uf = u.u if hasattr(u, "u") else u
    vf = v.u if hasattr(v, "u") else v
    grid = s.grid
    hmin = ScalarField(grid, np.minimum(uf.values, vf.values))
    res = envelope_beta(s, hmin, beta_schedule, newton_opts)
    f = mixed_ma_density([Slot.of((s.omega, uf), grid)] * s.n, grid).values
    g = mixed_ma_density([Slot.of((s.omega, vf), grid)] * s.n, grid).values
    w = mixed_ma_density([Slot.of((s.omega, res.phi), grid)] * s.n, grid).values
    dmax = np.where(uf.values >= vf.values, f, g)
    crease = crease_mask(uf, vf)
    total = float(np.mean(f))
    N = grid.points
    rows = []
    for box in box_family(grid):
        keep = ~crease[box]
        mw = float(np.sum(w[box][keep]) / N)
        mu = float(np.sum(f[box][keep]) / N)
        mv = float(np.sum(g[box][keep]) / N)
        mx = float(np.sum(np.maximum(f, g)[box][keep]) / N)
        mn = float(np.sum(np.minimum(f, g)[box][keep]) / N)
        dm = float(np.sum(dmax[box][keep]) / N)
        rows.append({"mass_w": mw, "mass_u": mu, "mass_v": mv,
                     "subadditivity_margin": (mu + mv - mw) / total,
                     "max_density_margin": (mx - mw) / total,
                     "min_density_margin": (dm - mn) / total})
    margins = {k: min(r[k] for r in rows) for k in
               ("subadditivity_margin", "max_density_margin", "min_density_margin")}
    ok = all(m >= -tol for m in margins.values())
    return {"passed": bool(ok), "tol": tol, "margins": margins, "boxes": rows,
            "crease_fraction": float(np.mean(crease)), "envelope": res}
