"""Named (omega, omega_X) configurations on the torus, omega-psh samplers, and the condition-(B) constant.

All scenario forms are defined as functions on the torus, independent of the grid: random
ingredients are drawn from seeded Fourier coefficients and normalized on a fixed reference
grid, so the same parameters give the same form at every resolution.
"""

from dataclasses import dataclass, field
from math import acos, comb, pi

import numpy as np

from . import hermitian_algebra as ha
from .form_calculus import (
    Comp, ConeError, comp_wedge_density, FormField, GridSpec, HermitianForm11Field, ScalarField, Slot,
    _slabs, cone_check, d_c, ddc, ddc_parts, exterior_d, hessian_from_parts, partial, partial_bar,
)

__all__ = [
    "SCENARIOS", "Scenario", "PshSample", "BuildError", "build_scenario", "condition_b_constant",
    "sample_psh", "iter_psh", "is_omega_psh", "random_modes", "ddc_form",
]

SCENARIOS = ("flat_kahler", "guan_li_closed", "nonclosed_hermitian", "nef_degenerate", "product_collapsing")

DEFAULTS = {
    "flat_kahler": {"n": 2, "res": 16, "seed": 0},
    "guan_li_closed": {"n": 2, "res": 16, "seed": 0, "amplitude": 0.5, "freq": 1},
    "nonclosed_hermitian": {"n": 2, "res": 16, "seed": 0, "amplitude": 0.3, "freq": 1},
    "nef_degenerate": {"n": 2, "res": 16, "seed": 0, "scale": 0.25},
    "product_collapsing": {"n": 2, "res": 16, "seed": 0, "u_amplitude": 0.3, "half_width": 0.15},
}

# closedness/band-limit checks of grid-independent forms run on this resolution
_CHECK_RES = {1: 16, 2: 16, 3: 8}


class BuildError(ValueError):
    """A scenario failed its own invariants; the message names the offending parameter."""


@dataclass
class Scenario:
    name: str
    params: dict
    grid: GridSpec
    omega: HermitianForm11Field
    omega_X: HermitianForm11Field
    closed: bool
    degenerate: bool
    extras: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.grid.n

    def regularized(self, eps):
        """The ladder rung omega + eps * omega_X (same name, eps recorded in params)."""
        eps = float(eps)
        if eps < 0:
            raise ValueError("eps must be non-negative")
        om = self.omega + self.omega_X.scale(eps)
        params = dict(self.params, eps=self.params.get("eps", 0.0) + eps)
        return Scenario(self.name, params, self.grid, om, self.omega_X, self.closed,
                        self.degenerate and eps == 0, dict(self.extras), dict(self.checks))

    def with_omega(self, omega, label):
        """Same scenario with a different form (e.g. 1.5 * omega for monotonicity tests)."""
        params = dict(self.params, variant=label)
        return Scenario(self.name, params, self.grid, omega, self.omega_X, self.closed,
                        False, dict(self.extras), dict(self.checks))

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params), "grid": self.grid.to_dict(),
                "closed": self.closed, "degenerate": self.degenerate, "checks": dict(self.checks)}


@dataclass
class PshSample:
    u: ScalarField
    t: float
    seed: int
    offset: float
    t_star: float = 0.0
    generator: str = "random"
    index: int = 0
    _parts: dict = field(default=None, repr=False)
    moments: list = field(default=None, repr=False)
    rel_min_eig: float = None

    def masses(self, js):
        """int (omega + dd^c u)^j ^ omega^(n-j) from the moments int (dd^c f)^k ^ omega^(n-k).

        Multilinearity gives sum_k C(j,k) t^k moment_k since dd^c u = t dd^c f.
        """
        if self.moments is None:
            return None
        return {j: sum(comb(j, k) * self.t ** k * self.moments[k] for k in range(j + 1)) for j in js}

    def slot(self, omega):
        """omega + dd^c u as a slab-evaluated form (reuses a cached Hessian when present)."""
        if self._parts is not None:
            return Slot(self.u.grid, omega, self._parts, self.t)
        return Slot.of((omega, self.u), self.u.grid)

    def release(self):
        self._parts = None


# ---------------------------------------------------------------------------
# random band-limited ingredients

def random_modes(rng, ndim, K, decay=1.0, zero_mean=True):
    """Complex coefficients for frequencies -K..K per axis with weight (1+|k|^2)^-decay."""
    shape = (2 * K + 1,) * ndim
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    f = np.arange(-K, K + 1)
    k2 = sum(f.reshape([-1 if b == a else 1 for b in range(ndim)]) ** 2 for a in range(ndim))
    c = c / (1.0 + k2) ** decay
    if zero_mean:
        c[(K,) * ndim] = 0
    return c


def _herm_field_from_modes(grid, mode_blocks):
    """Hermitian field whose (j,j) entries and (j<k) real/imag parts are band-limited fields."""
    n = grid.n
    m = np.empty(grid.shape + (n, n), dtype=complex)
    for j in range(n):
        m[..., j, j] = ScalarField.from_modes(grid, mode_blocks[(j, j)]).values
        for k in range(j + 1, n):
            re = ScalarField.from_modes(grid, mode_blocks[(j, k, 0)]).values
            im = ScalarField.from_modes(grid, mode_blocks[(j, k, 1)]).values
            m[..., j, k] = re + 1j * im
            m[..., k, j] = re - 1j * im
    return m


def _spectral_norm_max(mats):
    w = ha.eigvalsh(mats)
    return float(np.max(np.abs(w)))


def ddc_form(omega):
    """dd^c omega = i d dbar omega as a FormField (the (2,2)-part)."""
    return partial(partial_bar(omega.to_form())).scale(1j)


# ---------------------------------------------------------------------------
# scenario builders: each returns (omega, omega_X, closed, degenerate, extras) on a grid

def _flat(grid, p):
    I = HermitianForm11Field.identity(grid)
    return I, I, True, False, {}


def _guan_li_rho(n, p):
    rng = np.random.default_rng([p["seed"], 101])
    modes = random_modes(rng, 2 * n, p["freq"])
    ref = GridSpec(n, _CHECK_RES[n])
    H = ddc(ScalarField.from_modes(ref, modes)).mats
    return modes / _spectral_norm_max(H) * p["amplitude"]


def _guan_li(grid, p):
    modes = _guan_li_rho(grid.n, p)
    rho = ScalarField.from_modes(grid, modes)
    parts = ddc_parts(rho)
    om = HermitianForm11Field(grid, hessian_from_parts(grid, parts, base=np.eye(grid.n)))
    return om, HermitianForm11Field.identity(grid), True, False, {"rho_modes": modes}


def _nonclosed_blocks(n, p):
    rng = np.random.default_rng([p["seed"], 202])
    blocks = {}
    for j in range(n):
        blocks[(j, j)] = random_modes(rng, 2 * n, p["freq"])
        for k in range(j + 1, n):
            blocks[(j, k, 0)] = random_modes(rng, 2 * n, p["freq"])
            blocks[(j, k, 1)] = random_modes(rng, 2 * n, p["freq"])
    ref = GridSpec(n, _CHECK_RES[n])
    norm = _spectral_norm_max(_herm_field_from_modes(ref, blocks))
    return {k: v / norm for k, v in blocks.items()}


def _nonclosed(grid, p):
    blocks = _nonclosed_blocks(grid.n, p)
    S = _herm_field_from_modes(grid, blocks)
    om = HermitianForm11Field(grid, np.eye(grid.n) + p["amplitude"] * S)
    return om, HermitianForm11Field.identity(grid), False, False, {}


def _nef(grid, p):
    n, s = grid.n, p["scale"]
    x = grid.coords()
    m = np.zeros(grid.shape + (n, n), dtype=complex)
    m[...] = s * np.eye(n)
    # omega = s (I + dd^c chi), chi = cos(2 pi x_1) / pi^2, so dd^c chi = -cos(2 pi x_1) dz_1 dzbar_1
    m[..., 0, 0] = s * (1.0 - np.cos(2 * pi * x[0])) * np.ones(grid.shape)
    mp = np.zeros(grid.shape + (n, n), dtype=complex)
    mp[...] = s * np.eye(n)
    mp[..., n - 1, n - 1] = s * (1.0 - np.cos(2 * pi * x[2 * n - 2])) * np.ones(grid.shape)
    extras = {"omega_prime": HermitianForm11Field(grid, mp)}
    return HermitianForm11Field(grid, m), HermitianForm11Field.identity(grid), True, True, extras


def _bump(x, w):
    """cos^4(pi x / 2w) on |x| < w (distance taken on the circle), exactly 0 elsewhere."""
    d = (x + 0.5) % 1.0 - 0.5
    out = np.cos(pi * d / (2 * w)) ** 4
    return np.where(np.abs(d) < w, out, 0.0)


def _collapsing(grid, p):
    if grid.n != 2:
        raise BuildError("product_collapsing is defined for n=2 (parameter n)")
    a, w = p["u_amplitude"], p["half_width"]
    # u(z_1) = a cos(2 pi x_1) has 1 + dd^c u < 0 exactly where cos(2 pi x_1) > 1/(pi^2 a)
    if a * pi ** 2 <= 1.0:
        raise BuildError("u_amplitude too small: 1 + dd^c u is never negative (parameter u_amplitude)")
    limit = acos(1.0 / (pi ** 2 * a)) / (2 * pi)
    if not 0 < w < limit:
        raise BuildError(f"half_width must lie in (0, {limit:.4f}) (parameter half_width)")
    x = grid.coords()
    rho = _bump(x[0], w) * np.ones(grid.shape)
    m = rho[..., None, None] * np.eye(2)
    u = ScalarField(grid, a * np.cos(2 * pi * x[0]) * np.ones(grid.shape))
    extras = {"obstacle": u, "rho": ScalarField(grid, rho), "support_x1": (-w, w), "u_negative_region": limit}
    return HermitianForm11Field(grid, m.astype(complex)), HermitianForm11Field.identity(grid), False, True, extras


_BUILDERS = {"flat_kahler": _flat, "guan_li_closed": _guan_li, "nonclosed_hermitian": _nonclosed,
             "nef_degenerate": _nef, "product_collapsing": _collapsing}


def _check_params(name, params):
    if name not in _BUILDERS:
        raise BuildError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    p = dict(DEFAULTS[name])
    unknown = set(params) - set(p)
    if unknown:
        raise BuildError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    p.update(params)
    if name == "guan_li_closed" and not 0 <= p["amplitude"] < 1:
        raise BuildError("amplitude must lie in [0, 1) to keep omega positive (parameter amplitude)")
    if name == "nonclosed_hermitian" and not 0 <= p["amplitude"] <= 0.5:
        raise BuildError("amplitude must lie in [0, 0.5] to keep omega >= 0.5 (parameter amplitude)")
    if name == "nef_degenerate" and not 0 < p["scale"] <= 0.25:
        raise BuildError("scale must lie in (0, 0.25] so that omega <= omega_X / 2 (parameter scale)")
    if "freq" in p and not 1 <= p["freq"] <= p["res"] // 8:
        raise BuildError(f"freq must lie in [1, res/8] (parameter freq)")
    return p


def _closedness(name, n, p):
    """sup-norms of dd^c omega and d omega ^ d^c omega on the check grid (exact for band-limited omega)."""
    ref = GridSpec(n, _CHECK_RES[n])
    om = _BUILDERS[name](ref, p)[0]
    f = om.to_form()
    dw = exterior_d(f)
    ddcw = ddc_form(om)
    dwdcw = dw.wedge(d_c(f))
    return {"ddc_omega_sup": ddcw.sup_norm(), "dw_dcw_sup": dwdcw.sup_norm(), "d_omega_sup": dw.sup_norm()}


def build_scenario(name, params=None):
    """Build and verify a named scenario; raises BuildError naming the offending parameter."""
    p = _check_params(name, params or {})
    grid = GridSpec(p["n"], p["res"])
    omega, omega_X, closed, degenerate, extras = _BUILDERS[name](grid, p)
    checks = {}
    wx = cone_check(grid, omega_X)
    if wx <= 0:
        raise BuildError("omega_X is not positive definite")
    try:
        checks["omega_min_eig"] = cone_check(grid, omega)
    except ConeError as exc:
        key = "amplitude" if "amplitude" in p else "scale"
        raise BuildError(f"omega not semi-positive (eigenvalue {exc.worst_eigenvalue:.3e}); "
                         f"parameter {key}") from exc
    if name != "flat_kahler":
        checks.update(_closedness(name, grid.n, p))
    else:
        checks.update({"ddc_omega_sup": 0.0, "dw_dcw_sup": 0.0, "d_omega_sup": 0.0})
    if closed and max(checks["ddc_omega_sup"], checks["dw_dcw_sup"]) > 1e-9:
        raise BuildError(f"closed scenario {name} has dd^c omega of size {checks['ddc_omega_sup']:.2e}")
    if name == "nonclosed_hermitian" and p["amplitude"] > 0 and checks["d_omega_sup"] < 1e-8:
        raise BuildError("nonclosed scenario came out closed (parameter seed)")
    if name == "product_collapsing":
        lo, hi = extras["support_x1"]
        x1 = (grid.coords()[0].ravel() + 0.5) % 1.0 - 0.5
        outside = np.abs(x1) >= hi
        zero = np.all(omega.mats[outside] == 0)
        checks["zero_outside_support"] = bool(zero)
        if not zero:
            raise BuildError("omega does not vanish outside the bump (parameter half_width)")
    return Scenario(name, p, grid, omega, omega_X, closed, degenerate, extras, checks)


# ---------------------------------------------------------------------------
# condition (B)

def condition_b_constant(s, directions=64, tol=None, seed=0):
    """Smallest B with B omega^2 +- dd^c omega and B omega^3 +- d omega ^ d^c omega weakly positive.

    Pairings of magnitude below tol count as zero.  Returns (B, certificates); B is inf when
    omega^2 pairs to 0 against a direction where dd^c omega does not.
    """
    n, grid = s.n, s.grid
    certs = {"positivity_notion": "weak (pairing with i g ^ gbar)", "directions": int(directions)}
    if n == 1:
        return 0.0, dict(certs, ddc={"B": 0.0}, dw_dcw={"B": 0.0})
    f = s.omega.to_form()
    ddcw = ddc_form(s.omega)
    w2 = f.power(2)
    scale = 1.0 + s.omega.max_abs() ** 2
    tol = 1e-9 * scale if tol is None else tol

    def ratio(num, den, label, dir_idx=None):
        num = np.abs(num)
        bad = num > tol
        if np.any(bad & (den <= tol)):
            i = int(np.argmax(bad & (den <= tol)))
            return np.inf, {"B": float("inf"), "point": _unravel(num.shape, i), "direction": dir_idx,
                            "sentinel": label}
        r = np.where(bad, (num - tol) / np.where(den > tol, den, 1.0), 0.0)
        i = int(np.argmax(r))
        return float(r.ravel()[i]), {"B": float(r.ravel()[i]), "point": _unravel(num.shape, i),
                                     "direction": dir_idx}

    if n == 2:
        num = np.broadcast_to(_dens(ddcw), grid.shape)
        den = np.broadcast_to(_dens(w2), grid.shape)
        B1, c1 = ratio(num, den, "ddc")
        B2, c2 = 0.0, {"B": 0.0, "note": "d omega ^ d^c omega is a (3,3)-form, zero for n=2"}
    else:
        gam = ha.direction_set(3, directions, seed)
        a22 = ddcw.part(2, 2)
        den = ha.pair_with_directions(w2.part(2, 2), gam)
        num = ha.pair_with_directions(a22, gam) if a22 is not None else np.zeros_like(den)
        num = np.broadcast_to(num, grid.shape + (len(gam),)).reshape(grid.points, -1)
        den = np.broadcast_to(den, grid.shape + (len(gam),)).reshape(grid.points, -1)
        B1, c1 = ratio(num, den, "ddc")
        p_idx, d_idx = c1.pop("point")
        c1.update(point=_pt(grid, p_idx), direction=int(d_idx))
        dwdcw = exterior_d(f).wedge(d_c(f))
        num = np.broadcast_to(_dens(dwdcw), grid.shape)
        den = np.broadcast_to(_dens(f.power(3)), grid.shape)
        B2, c2 = ratio(num, den, "dw_dcw")
    certs.update(ddc=c1, dw_dcw=c2)
    return max(B1, B2), certs


def _dens(form):
    n = form.grid.n
    if (n, n) not in form.parts:
        return np.zeros(form.grid.shape)
    return ha.PointForm(n, n, n, form.parts[(n, n)]).top_density().real


def _unravel(shape, i):
    return [int(v) for v in np.unravel_index(int(i), shape)]


def _pt(grid, i):
    return [int(v) for v in np.unravel_index(int(i), grid.shape)]


# ---------------------------------------------------------------------------
# omega-psh samplers

def _take_det(omega, sl):
    d = omega.det_values
    return d if np.ndim(d) == 0 or d.shape[0] == 1 else d[sl]


def _gen_eig2(M, dM, parts, sl, want_moments):
    """Smallest root of det(M + lam^-1 ...) for n = 2: eigenvalues of M^-1 H via the stable quadratic.

    det(H - l M) = dM l^2 - b l + dH with b the mixed term; also returns (2 dM, b, 2 dH).
    """
    h11, h22 = parts[(0, 0)][sl], parts[(1, 1)][sl]
    re, im = parts[(0, 1)]
    re, im = re[sl], im[sl]
    m11, m22, m12 = M.diag[0], M.diag[1], M.off[(0, 1)]
    dH = h11 * h22
    dH -= re * re
    dH -= im * im
    b = m11 * h22
    b += m22 * h11
    b -= 2.0 * (m12.real * re + m12.imag * im)
    disc = b * b
    disc -= 4.0 * dM * dH
    np.maximum(disc, 0.0, out=disc)
    np.sqrt(disc, out=disc)
    np.copysign(disc, b, out=disc)
    q = disc
    q += b
    r1 = q / (2.0 * dM)
    safe = np.where(q != 0, q, 1.0)
    r2 = np.divide(2.0 * dH, safe)
    r2[q == 0] = 0.0
    lam = np.minimum(r1, r2, out=r1)
    dens = (2.0 * dM, b, 2.0 * dH) if want_moments else None
    return lam, dens


def _min_gen_eig(grid, omega, parts, moments=None):
    """min over the grid of the smallest eigenvalue of omega^{-1} H (omega positive definite).

    If a list `moments` of length n+1 is passed, moment k accumulates the grid mean of the
    wedge density of H^k ^ omega^(n-k) in the same pass.
    """
    n = grid.n
    slot = Slot(grid, omega)
    lo = np.inf
    for sl in _slabs(grid):
        M = slot.omega_slab(sl)
        H = Comp.from_parts(n, parts, sl) if n != 2 else None
        shape = (sl.stop - sl.start,) + grid.shape[1:]
        if n == 1:
            lam = H.diag[0] / M.diag[0]
            dens = (M.diag[0], H.diag[0])
        elif n == 2:
            lam, dens = _gen_eig2(M, _take_det(omega, sl), parts, sl, moments is not None)
        else:
            Mm, Hm = np.broadcast_to(M.mats(), H.mats().shape), H.mats()
            L = np.linalg.cholesky(Mm)
            Li = np.linalg.inv(L)
            C = Li @ Hm @ np.conj(np.swapaxes(Li, -1, -2))
            lam = np.linalg.eigvalsh(0.5 * (C + np.conj(np.swapaxes(C, -1, -2))))[..., 0]
            dens = [comp_wedge_density([H] * k + [M] * (n - k)) for k in range(n + 1)] \
                if moments is not None else None
        if moments is not None:
            for k in range(n + 1):
                moments[k] += float(np.sum(np.broadcast_to(dens[k], shape))) / grid.points
        lo = min(lo, float(np.min(lam)))
    return lo


def _min_eig_at(grid, omega, parts, t):
    slot = Slot(grid, omega, parts, t)
    lo = np.inf
    for sl in _slabs(grid):
        c = slot.slab(sl)
        lo = min(lo, float(np.min(c.min_eig() + 1e-12 * (1.0 + c.fro()))))
    return lo


def _t_star(s, parts, moments=None):
    """sup{t >= 0 : M_omega + t H >= 0 at every grid point}; inf when H >= 0 everywhere.

    Returns (t*, smallest generalized eigenvalue or None); moments are filled on the
    positive definite path only.
    """
    grid = s.grid
    if not s.degenerate:
        lam = _min_gen_eig(grid, s.omega, parts, moments)
        return (np.inf if lam >= 0 else -1.0 / lam), lam
    return _t_star_degenerate(s, parts), None


def _t_star_degenerate(s, parts):
    grid = s.grid
    # degenerate omega: bisection on the smallest eigenvalue of M + t H
    if _min_eig_at(grid, s.omega, parts, 1e-12) < 0:
        return 0.0
    lo, hi = 1e-12, 1.0
    while _min_eig_at(grid, s.omega, parts, hi) >= 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            return np.inf
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if _min_eig_at(grid, s.omega, parts, mid) >= 0 else (lo, mid)
    return lo


def _single_variable_modes(rng, grid, K, k):
    """Random modes depending only on (x_k, y_k)."""
    nd = grid.ndim
    m = np.zeros((2 * K + 1,) * nd, dtype=complex)
    sub = random_modes(rng, 2, K)
    idx = [K] * nd
    idx[2 * k] = slice(None)
    idx[2 * k + 1] = slice(None)
    m[tuple(idx)] = sub
    return m


def _pullback_generator(s, rng, K):
    """f(z_1) with dd^c f = diag(mean(rho g) - rho g, 0): omega-psh for small t whenever omega = rho I."""
    grid = s.grid
    rho = s.extras["rho"].values
    r = ScalarField.from_modes(grid, _single_variable_modes(rng, grid, K, 0)).values
    r = r / max(np.abs(r).max(), 1e-300)
    g = 1.0 + 0.5 * r
    rhs = np.mean(rho * g) - rho * g
    k = np.fft.fftfreq(grid.res, 1.0 / grid.res)
    lap = -(2 * pi) ** 2 * (k[:, None] ** 2 + k[None, :] ** 2) / 4.0  # symbol of (1/4) Laplacian in z_1
    R = np.fft.fft2(rhs[(slice(None), slice(None)) + (0,) * (grid.ndim - 2)])
    lap[0, 0] = 1.0
    F = np.fft.ifft2(R / lap).real
    F = F - F.mean()
    return ScalarField(grid, np.broadcast_to(F.reshape(F.shape + (1,) * (grid.ndim - 2)), grid.shape).copy())


def _candidates(s, rng, K):
    """Generator candidates in fallback order: full random, single-variable, then pullback."""
    grid = s.grid
    yield "random", ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K))
    if s.degenerate:
        for k in range(grid.n):
            yield f"single_variable_z{k + 1}", ScalarField.from_modes(grid, _single_variable_modes(rng, grid, K, k))
        if "rho" in s.extras:
            yield "pullback", _pullback_generator(s, rng, K)


def _zero_hessian(f, parts):
    if f._modes is not None:
        m = f._modes.copy()
        m[((m.shape[0] - 1) // 2,) * m.ndim] = 0
        return not np.any(m)
    return all(not np.any(a) for v in parts.values() for a in (v if isinstance(v, tuple) else (v,)))


def iter_psh(s, count, seed=0, max_freq=2, keep_hessian=False, safety=0.9):
    """Yield PshSample objects one at a time (memory-friendly on large grids)."""
    grid = s.grid
    if max_freq > grid.res // 8 or max_freq < 1:
        raise ValueError(f"max_freq must lie in [1, res/8] = [1, {grid.res // 8}]")
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        chosen = None
        for label, f in _candidates(s, rng, max_freq):
            parts = ddc_parts(f)
            if _zero_hessian(f, parts):
                chosen = (label, f, parts, np.inf, None, None)
                break
            moments = [0.0] * (grid.n + 1)
            ts, lam = _t_star(s, parts, moments)
            if ts > 0:
                chosen = (label, f, parts, ts, moments if lam is not None else None, lam)
                break
        if chosen is None:
            raise RuntimeError(f"no omega-psh generator found for sample {i}")
        label, f, parts, ts, moments, lam = chosen
        if not np.isfinite(ts):  # constant (or psh-for-all-t) generator: u = 0
            u = ScalarField.constant(grid, 0.0)
            yield PshSample(u, 0.0, seed, 0.0, float(ts), label, i, None)
            continue
        t = safety * ts
        sup = t * f.sup()
        u = f.affine(t, -sup)
        yield PshSample(u, t, seed, sup, ts, label, i, parts if keep_hessian else None,
                        moments, None if lam is None else 1.0 + t * lam)


def sample_psh(s, count, seed=0, max_freq=2, keep_hessian=False):
    """count samples u = 0.9 t* f - sup(0.9 t* f) (see iter_psh)."""
    return list(iter_psh(s, count, seed, max_freq, keep_hessian))


def is_omega_psh(s, u, tol=None):
    """(flag, worst eigenvalue, worst point) of M_omega + H[u]."""
    slot = u.slot(s.omega) if isinstance(u, PshSample) else Slot.of((s.omega, u), s.grid)
    try:
        w = cone_check(s.grid, slot, tol)
    except ConeError as exc:
        return False, exc.worst_eigenvalue, exc.worst_point
    return True, w, None
