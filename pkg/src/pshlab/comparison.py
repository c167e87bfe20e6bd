"""Modified comparison principle, contact-set inequality and domination campaigns on grid data.

All samples are smooth bounded omega-psh functions, strictly inside the hypothesis class of
the statements checked here: a failure points at the implementation, not at the mathematics.

Sublevel sets are grid masks.  A cell whose defining inequality holds within BOUNDARY_TIE
is assigned to the set; each report also carries the masses with the opposite assignment
so the sensitivity to this choice is visible.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .form_calculus import ScalarField, Slot, mixed_ma_density
from .scenarios import PshSample, condition_b_constant, is_omega_psh, iter_psh

__all__ = [
    "ComparisonReport", "BOUNDARY_TIE", "s_max", "comparison_factor", "modified_comparison_check",
    "contact_pair", "contact_inequality_check", "domination_falsification", "density_of",
]

BOUNDARY_TIE = 1e-9


@dataclass
class ComparisonReport:
    scenario: str
    u_id: int
    v_id: int
    lam: float
    s: float
    B: float
    m_lambda: float
    cells: int
    lhs: float
    rhs: float
    margin: float
    relative_margin: float
    vacuous: bool
    passed: bool
    tie_sensitivity: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def s_max(lam, B, n):
    """lam^3 / (32 B (n-1)^2); infinite when B = 0 or n = 1."""
    if B == 0 or n == 1:
        return np.inf
    return lam ** 3 / (32.0 * B * (n - 1) ** 2)


def comparison_factor(s_val, lam, B, n):
    """(1 - 4 B (n-1)^2 s / lam^3)^n."""
    return (1.0 - 4.0 * B * (n - 1) ** 2 * s_val / lam ** 3) ** n


def density_of(s, u, scale=1.0):
    """Pointwise n! det(M_omega + scale * H[u]) for a PshSample or ScalarField."""
    grid = s.grid
    if isinstance(u, PshSample) and u._parts is not None:
        slot = Slot(grid, s.omega, u._parts, u.t * scale)
    else:
        uf = u.u if isinstance(u, PshSample) else u
        slot = Slot.of((s.omega, uf), grid)
        if scale != 1.0:
            slot = Slot(grid, s.omega, slot.parts, scale)
    return mixed_ma_density([slot] * s.n, grid).values


def _values(u):
    return (u.u if isinstance(u, PshSample) else u).values


def modified_comparison_check(s, u, v, lam, svals, B=None, tol=1e-8):
    """One ComparisonReport per s in svals.

    U = {u < (1 - lam) v + m_lam + s}, m_lam = min(u - (1 - lam) v);
    lhs = factor(s) * int_U ma((1 - lam) v), rhs = int_U ma(u); pass iff rhs - lhs >= -tol * V.
    """
    n, grid = s.n, s.grid
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if B is None:
        B = condition_b_constant(s)[0]
    if not np.isfinite(B):
        raise ValueError("condition (B) constant is infinite for this scenario")
    smax = s_max(lam, B, n)
    bad = [sv for sv in svals if not 0 < sv < smax]
    if bad:
        raise ValueError(f"s values {bad} outside (0, {smax:.6g})")
    vf = v.u if isinstance(v, PshSample) else v
    w_scale = 1.0 - lam
    w_ok, w_min, _ = is_omega_psh(s, ScalarField(grid, w_scale * vf.values))
    if not w_ok:
        raise ValueError(f"(1 - lam) v left the cone (eigenvalue {w_min:.3e})")
    fu = density_of(s, u)
    fw = density_of(s, v, w_scale)
    diff = _values(u) - w_scale * vf.values
    m_lam = float(diff.min())
    vol = float(np.mean(mixed_ma_density([s.omega] * n, grid).values))
    N = grid.points
    out = []
    for sv in svals:
        g = diff - (m_lam + sv)
        mask = g < BOUNDARY_TIE
        strict = g < -BOUNDARY_TIE
        fac = comparison_factor(sv, lam, B, n)
        lhs = fac * float(fw[mask].sum()) / N
        rhs = float(fu[mask].sum()) / N
        lhs_s = fac * float(fw[strict].sum()) / N
        rhs_s = float(fu[strict].sum()) / N
        margin = rhs - lhs
        cells = int(mask.sum())
        out.append(ComparisonReport(
            s.name, getattr(u, "index", -1), getattr(v, "index", -1), float(lam), float(sv),
            float(B), m_lam, cells, lhs, rhs, margin, margin / vol, cells == 0,
            bool(cells == 0 or margin >= -tol * vol),
            tie_sensitivity=abs((rhs_s - lhs_s) - margin) / vol,
            extras={"factor": fac, "s_max": smax, "tol": tol}))
    return out


# ---------------------------------------------------------------------------
# contact-set inequality

def contact_pair(s, psi, amplitude=0.05, planes=1, axis=0):
    """u = psi - q^2 with q^2 = a sin^2(pi planes (x_axis - x0)), x0 the grid point where psi is largest.

    q vanishes on the hyperplanes x_axis = x0 + k / planes (the region R, made of grid points),
    u <= psi everywhere, and u = psi with equal gradients on R.  The amplitude is halved until u
    is omega-psh.  Returns (u, R mask, amplitude used).
    """
    grid = s.grid
    pv = _values(psi)
    x0 = np.unravel_index(int(np.argmax(pv)), grid.shape)[axis] / grid.res
    x = grid.coords()[axis]
    q2 = np.broadcast_to(np.sin(np.pi * planes * (x - x0)) ** 2, grid.shape)
    R = np.broadcast_to(np.abs(np.sin(np.pi * planes * (x - x0))) < 1e-12, grid.shape)
    a = float(amplitude)
    while True:
        u = ScalarField(grid, pv - a * q2)
        if np.any(u.values > pv + 1e-15):
            raise ValueError("constructed pair violates u <= psi")
        if a == 0 or is_omega_psh(s, u)[0]:
            return u, np.array(R), a
        a *= 0.5
        if a < 1e-8:
            a = 0.0


def contact_inequality_check(s, u, psi, region, tol=1e-8):
    """On region: (omega_u)^j ^ (omega_psi)^(n-j) <= (omega_psi)^n + tol * V for every j."""
    n, grid = s.n, s.grid
    uf = u.u if isinstance(u, PshSample) else u
    pf = psi.u if isinstance(psi, PshSample) else psi
    if np.any(uf.values > pf.values + 1e-12):
        raise ValueError("contact pair violates u <= psi")
    su, sp = Slot.of((s.omega, uf), grid), Slot.of((s.omega, pf), grid)
    top = mixed_ma_density([sp] * n, grid).values
    vol = float(np.mean(mixed_ma_density([s.omega] * n, grid).values))
    margins = {}
    for j in range(n + 1):
        mixed = mixed_ma_density([su] * j + [sp] * (n - j), grid).values
        margins[j] = float(np.min((top - mixed)[region])) / vol if np.any(region) else np.inf
    ok = all(m >= -tol for m in margins.values())
    return {"passed": bool(ok), "margins": margins, "tol": tol, "region_cells": int(np.sum(region))}


# ---------------------------------------------------------------------------
# domination campaigns

def domination_falsification(s, trials=500, c=0.5, eps_exp=1.0, seed=0, pool=24, max_freq=2,
                             tol=1e-9):
    """(a) constructive checks of the weighted principle with u = v + c0; (b) screened random search.

    A quarter of the trials use u = rho v + kappa with rho near 1 and kappa near 0, where
    both screens are close to tight.  The domination screen checks omega_u^n <= c omega_v^n
    on the enlarged set {u < v + delta}, delta = 1e-3 osc(u - v), and the weighted screen checks
    e^{-eps v} omega_v^n >= e^{-eps u} omega_u^n at every grid point.  A pair passing a screen
    whose conclusion fails by more than tol is a violation.
    """
    if not 0 <= c < 1:
        raise ValueError("c must lie in [0, 1)")
    if s.degenerate:
        raise ValueError("domination campaigns need positive omega; pass s.regularized(eps)")
    rng = np.random.default_rng([seed, 7])
    samples = list(iter_psh(s, pool, seed=seed, max_freq=max_freq, keep_hessian=True))
    dens = [density_of(s, smp) for smp in samples]
    vals = [smp.u.values for smp in samples]
    for smp in samples:
        smp.release()
    scale = float(np.mean(dens[0])) + 1.0

    # (a) constructive
    cons_ok = 0
    for k in range(trials):
        i = int(rng.integers(pool))
        c0 = float(rng.uniform(0.0, 1.0))
        v, fv = vals[i], dens[i]
        u, fu = v + c0, fv
        hyp = np.all(np.exp(-eps_exp * v) * fv >= np.exp(-eps_exp * u) * fu - tol * scale)
        concl = np.all(v <= u + tol)
        cons_ok += int(hyp and concl)

    # (b) random falsification search
    stats = {"screened": 0, "prop_passed": 0, "cor_passed": 0, "violations": 0}
    worst = []
    for k in range(trials):
        i, j = (int(x) for x in rng.integers(pool, size=2))
        kappa = float(rng.uniform(-0.5, 1.5))
        rho = float(rng.uniform(0.0, 1.0))
        if k % 4 == 0:
            # near-boundary pairs u = rho v + kappa, where both screens are close to tight
            j = i
            rho = float(rng.uniform(0.9, 1.0))
            kappa = float(rng.uniform(-0.05, 0.2))
        u = vals[i] * rho + kappa  # rho u_i is omega-psh for rho in [0, 1]
        fu = density_of_scaled(s, samples[i], rho) if rho != 1.0 else dens[i]
        v, fv = vals[j], dens[j]
        stats["screened"] += 1
        d = u - v
        osc = float(d.max() - d.min())
        below = d < 1e-3 * osc
        if np.all(fu[below] <= c * fv[below] + tol * scale):
            stats["prop_passed"] += 1
            if d.min() < -tol:
                stats["violations"] += 1
                worst.append({"kind": "proposition", "pair": [i, j], "kappa": kappa, "rho": rho,
                              "min_u_minus_v": float(d.min())})
        if np.all(np.exp(-eps_exp * v) * fv >= np.exp(-eps_exp * u) * fu - tol * scale):
            stats["cor_passed"] += 1
            if np.max(v - u) > tol:
                stats["violations"] += 1
                worst.append({"kind": "corollary", "pair": [i, j], "kappa": kappa, "rho": rho,
                              "max_v_minus_u": float(np.max(v - u))})
    return {"constructive_trials": trials, "constructive_passed": cons_ok, **stats,
            "violation_examples": worst[:5], "c": c, "eps": eps_exp, "pool": pool,
            "passed": bool(stats["violations"] == 0 and cons_ok == trials)}



def density_of_scaled(s, smp, rho):
    """Density of rho * u for a sample whose Hessian has been released: recompute from values."""
    return density_of(s, ScalarField(s.grid, rho * smp.u.values))
