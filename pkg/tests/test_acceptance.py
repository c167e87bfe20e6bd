"""Acceptance criteria AC1-AC12.

Each test prints one line ``ACk PASS|FAIL <numbers>`` (also repeated in the pytest terminal
summary) and then asserts.  Tolerances are pinned below; the n = 2 envelope criteria run at
res 16 (see the decisions ledger).
"""

import itertools
import json
import time
from math import factorial

import numpy as np
import pytest

from pshlab import cli
from pshlab import envelope as E
from pshlab import hermitian_algebra as ha
from pshlab.comparison import domination_falsification, modified_comparison_check, s_max
from pshlab.form_calculus import FormField, GridSpec, ScalarField, d_c, exterior_d
from pshlab.morse_checks import morse_mass_convergence, popovici_integrated
from pshlab.scenarios import build_scenario, condition_b_constant, sample_psh
from pshlab.volume_bounds import Family, binomial_identity_check, eps_ladder, hat_v_closed_check, mass_survey

from conftest import AC_LINES, random_field, random_positive_field

# pinned tolerances
AC1_REL, AC1_SECONDS = 1e-6, 30.0
AC2_GAP, AC2_DEFECT_REL, AC2_TAU, AC2_SECONDS = 1e-3, 1e-4, 1e-2, 60.0
AC3_FACTOR = 2.0
AC4_REL = 1e-3
AC5_REL = 1e-2
AC6_CLOSED, AC6_NONCLOSED = 1e-8, 1e-6
AC7_POINT, AC7_INTEGRATED = 1e-12, 1e-9
AC8_REL = 1e-4
AC9_C_CHANGE, AC9_SPECTRAL = 0.2, 1e-8
AC11_REL, AC11_D2, AC11_BINOM = 1e-12, 1e-9, 1e-9

BETA_MAX = 16384.0
ENV_RES = 16


def record(k, ok, detail):
    line = f"AC{k:<3} {'PASS' if ok else 'FAIL'}  {detail}"
    AC_LINES[f"AC{k}"] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def flat2():
    return build_scenario("flat_kahler", {"n": 2, "res": ENV_RES})


def test_ac1_mass_constancy():
    t0 = time.perf_counter()
    s = build_scenario("guan_li_closed", {"n": 2, "res": 64})
    rep = mass_survey(s, Family(20, seed=0), [1, 2])
    elapsed = time.perf_counter() - t0
    dev = max(rep.margins[f"max_relative_deviation_j{j}"] for j in (1, 2))
    ok = dev <= AC1_REL and elapsed <= AC1_SECONDS
    record(1, ok, f"max relative deviation {dev:.2e} (<= {AC1_REL:g}), {elapsed:.1f} s (<= {AC1_SECONDS:g} s)")


def test_ac2_oracle_equivalence():
    s = build_scenario("flat_kahler", {"n": 1, "res": 256})
    t0 = time.perf_counter()
    gaps, defects = [], []
    for name in ("bump", "two_wells", "min_pair"):
        h = E.builtin_obstacle(name, s.grid)
        r = E.envelope_beta(s, h, E.default_betas(BETA_MAX))
        o = E.envelope_obstacle_1d(1.0, h)
        gaps.append(float(np.abs(r.phi.values - o.values).max()))
        defects.append(E.orthogonality_defect(s, r, h, tau=AC2_TAU) / r.total_mass)
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= AC2_GAP and max(defects) <= AC2_DEFECT_REL and elapsed <= AC2_SECONDS
    record(2, ok, f"gap {max(gaps):.2e} (<= {AC2_GAP:g}), defect/mass {max(defects):.2e} "
                  f"(<= {AC2_DEFECT_REL:g}), {elapsed:.1f} s (<= {AC2_SECONDS:g} s)")


def _bump(grid, seed):
    rng = np.random.default_rng([seed, 17])
    c = grid.coords()
    centre = rng.uniform(0, 1, size=len(c))
    out = 0.15
    for x, x0 in zip(c, centre):
        out = out * E._well(x, x0, 2)
    return np.broadcast_to(out, grid.shape)


def test_ac3_envelope_axioms(flat2):
    g = flat2.grid
    st = E.scheme_tol(BETA_MAX)
    bound = AC3_FACTOR * st
    betas = E.default_betas(BETA_MAX)
    worst = {"monotone": 0.0, "shift": 0.0, "idempotent": 0.0, "sub_obstacle": 0.0}
    for seed in range(10):
        h = E.builtin_obstacle("random", g, seed=seed)
        p = E.envelope_beta(flat2, h, betas)
        # monotonicity: h <= h2 gives P(h) <= P(h2)
        h2 = ScalarField(g, h.values + _bump(g, seed))
        p2 = E.envelope_beta(flat2, h2, betas)
        worst["monotone"] = max(worst["monotone"], float(np.max(p.phi.values - p2.phi.values)))
        # shift: P(h) + c solves the discrete problem for h + c (the solution is unique)
        c = 0.3
        ps = E.envelope_beta(flat2, ScalarField(g, h.values + c), [BETA_MAX], {"phi0": p.phi.values + c})
        worst["shift"] = max(worst["shift"], float(np.abs(ps.phi.values - p.phi.values - c).max()))
        # idempotence: P(P(h)) = P(h)
        pp = E.envelope_beta(flat2, p.phi, [BETA_MAX], {"phi0": p.phi})
        worst["idempotent"] = max(worst["idempotent"], float(np.abs(pp.phi.values - p.phi.values).max()))
        worst["sub_obstacle"] = max(worst["sub_obstacle"], float(np.max(p.phi.values - h.values)))
    ok = all(v <= bound for v in worst.values())
    record(3, ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f" (<= 2 scheme_tol = {bound:.2e}; res {ENV_RES})")


def test_ac4_orthogonality(flat2):
    h = E.builtin_obstacle("two_wells", flat2.grid)
    r = E.envelope_beta(flat2, h, E.default_betas(BETA_MAX))
    rel = r.orthogonality_defect / r.total_mass
    record(4, rel <= AC4_REL, f"mass on {{phi < h - tau}} / total {rel:.2e} (<= {AC4_REL:g}), "
                              f"tau {r.tau:.2e}, res {ENV_RES}")


def test_ac5_collapsing():
    s = build_scenario("product_collapsing", {"n": 2, "res": ENV_RES})
    h = s.extras["obstacle"]
    vol_X = float(np.mean(ha.wedge_top_density([s.omega_X.mats.reshape(-1, 2, 2)] * 2)))
    masses = []
    for eps in (0.1, 0.05, 0.025):
        r = E.envelope_beta(s.regularized(eps), h, E.default_betas(BETA_MAX))
        masses.append(r.total_mass)
    decreasing = all(b < a for a, b in zip(masses, masses[1:]))
    rel = masses[-1] / vol_X
    record(5, decreasing and rel <= AC5_REL,
           f"masses {', '.join(f'{m:.3e}' for m in masses)}; last / int omega_X^2 {rel:.2e} (<= {AC5_REL:g})")


def test_ac6_modified_comparison():
    worst_closed = np.inf
    checks = 0
    for name in ("flat_kahler", "guan_li_closed"):
        s = build_scenario(name, {"n": 2, "res": 16})
        smp = sample_psh(s, 10, seed=6)
        rng = np.random.default_rng(6)
        for k in range(25):
            i, j = rng.choice(10, size=2, replace=False)
            lam = float(rng.uniform(0.1, 0.9))
            d = smp[i].u.values - (1 - lam) * smp[j].u.values
            sv = float(rng.uniform(0.01, 1.0)) * float(d.max() - d.min())
            r = modified_comparison_check(s, smp[i], smp[j], lam, [sv], B=0.0, tol=AC6_CLOSED)[0]
            worst_closed = min(worst_closed, r.relative_margin)
            checks += 1
    s3 = build_scenario("nonclosed_hermitian", {"n": 3, "res": 8})
    B = condition_b_constant(s3)[0]
    smax = s_max(0.5, B, 3)
    smp3 = sample_psh(s3, 4, seed=6, max_freq=1)
    worst_nc = np.inf
    for i, j in ((0, 1), (2, 3)):
        reps = modified_comparison_check(s3, smp3[i], smp3[j], 0.5,
                                         [f * smax for f in (0.05, 0.1, 0.25, 0.5)], B=B, tol=AC6_NONCLOSED)
        worst_nc = min(worst_nc, min(r.relative_margin for r in reps))
    ok = worst_closed >= -AC6_CLOSED and worst_nc >= -AC6_NONCLOSED
    record(6, ok, f"closed: {checks} checks, worst margin {worst_closed:.2e} (>= -{AC6_CLOSED:g}); "
                  f"n=3 nonclosed B={B:.3g}, s up to s_max/2={smax / 2:.2e}, worst {worst_nc:.2e} (>= -{AC6_NONCLOSED:g})")


def test_ac7_popovici():
    rng = np.random.default_rng(7)
    worst_point = np.inf
    for n in (2, 3):
        t1, t2, t3 = (ha.random_positive(rng, n, (100000,)) for _ in range(3))
        lhs, rhs = ha.popovici_pointwise(t1, t2, t3)
        worst_point = min(worst_point, float(np.min((lhs - rhs) / rhs)))
    g = GridSpec(2, 16)
    worst_int = np.inf
    for k in range(100):
        a, b, c = (random_positive_field(g, [k, i]) for i in range(3))
        lhs, rhs, _ = popovici_integrated(a, b, c, constructed=True)
        worst_int = min(worst_int, (lhs - rhs) / rhs)
    ok = worst_point >= -AC7_POINT and worst_int >= -AC7_INTEGRATED
    record(7, ok, f"pointwise 2x1e5 triples worst rel margin {worst_point:.2e} (>= -{AC7_POINT:g}); "
                  f"integrated constructed 100 triples worst {worst_int:.2e} (>= -{AC7_INTEGRATED:g})")


def test_ac8_min_envelope(flat2):
    smp = sample_psh(flat2, 40, seed=8)
    worst = {}
    crease = []
    for k in range(20):
        r = E.envelope_min_check(flat2, smp[2 * k], smp[2 * k + 1], E.default_betas(BETA_MAX), tol=AC8_REL)
        for key, m in r["margins"].items():
            worst[key] = min(worst.get(key, np.inf), m)
        crease.append(r["crease_fraction"])
    ok = all(m >= -AC8_REL for m in worst.values())
    record(8, ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
           + f" (>= -{AC8_REL:g}); crease fraction <= {max(crease):.2f}, res {ENV_RES}")


def test_ac9_eps_ladder():
    nef = build_scenario("nef_degenerate", {"n": 2, "res": 16})
    ladder = eps_ladder(0.2, 5)
    hv = hat_v_closed_check(nef, ladder, Family(8, seed=9))
    mm = morse_mass_convergence(nef, ladder, Family(6, seed=9))
    change = max(hv["C_max_relative_change"], mm["C_max_relative_change"], mm["C_mixed_max_relative_change"])
    spectral = max(hv["spectral_deviation"], mm["spectral_deviation"])
    ok = change <= AC9_C_CHANGE and spectral <= AC9_SPECTRAL
    record(9, ok, f"C relative change {change:.3f} (<= {AC9_C_CHANGE:g}), spectral deviation "
                  f"{spectral:.2e} (<= {AC9_SPECTRAL:g})")


def test_ac10_domination():
    parts = []
    total = 0
    for name in ("flat_kahler", "guan_li_closed", "nonclosed_hermitian", "nef_degenerate", "product_collapsing"):
        s = build_scenario(name, {"n": 2, "res": 16})
        if s.degenerate:
            s = s.regularized(0.1)
        r = domination_falsification(s, trials=500, seed=10)
        total += r["violations"] + (r["constructive_trials"] - r["constructive_passed"])
        parts.append(f"{name} {r['violations']}/{r['screened']} (prop {r['prop_passed']}, cor {r['cor_passed']})")
    record(10, total == 0, "violations per scenario: " + "; ".join(parts))


def _leibniz_mixed(mats):
    """(1/n!) sum over sigma, pi of sgn(pi) prod_i (A_sigma(i))[i, pi(i)]."""
    n = len(mats)
    total = 0.0
    for pi in itertools.permutations(range(n)):
        inv = sum(1 for a, b in itertools.combinations(range(n), 2) if pi[a] > pi[b])
        sign = -1.0 if inv % 2 else 1.0
        for sigma in itertools.permutations(range(n)):
            prod = 1.0
            for i in range(n):
                prod = prod * mats[sigma[i]][i, pi[i]]
            total += sign * prod
    return (total / factorial(n)).real


def test_ac11_algebra_oracles():
    rng = np.random.default_rng(11)
    worst = 0.0
    for n in (1, 2, 3):
        for _ in range(1000):
            mats = [ha.random_hermitian(rng, n) for _ in range(n)]
            got = float(ha.mixed_discriminant(mats))
            want = _leibniz_mixed(mats)
            scale = max(1.0, float(np.prod([np.abs(ha.eigvalsh(m)).max() for m in mats])))
            worst = max(worst, abs(got - want) / scale)
    d2 = 0.0
    for n, res in ((1, 16), (2, 16), (3, 8)):
        f = FormField.scalar(random_field(GridSpec(n, res), 11, K=1))
        d2 = max(d2, exterior_d(exterior_d(f)).sup_norm())
        if n > 1:
            d2 = max(d2, exterior_d(exterior_d(d_c(f))).sup_norm())
    binom = 0.0
    for name, n, res in (("guan_li_closed", 2, 16), ("nonclosed_hermitian", 2, 16), ("nonclosed_hermitian", 3, 8)):
        s = build_scenario(name, {"n": n, "res": res})
        for smp in sample_psh(s, 3, seed=11, max_freq=1):
            binom = max(binom, binomial_identity_check(s, smp))
    ok = worst <= AC11_REL and d2 <= AC11_D2 and binom <= AC11_BINOM
    record(11, ok, f"mixed discriminant vs Leibniz 3x1000 sets worst rel {worst:.2e} (<= {AC11_REL:g}); "
                   f"d^2 {d2:.2e}, binomial {binom:.2e} (<= {AC11_D2:g})")


def test_ac12_determinism(tmp_path):
    outs = [tmp_path / "run1", tmp_path / "run2"]
    codes = [cli.run(["suite", "--quick", "--out", str(d)]) for d in outs]
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.json"))
    same = bool(files) and all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    same = same and files == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*.json"))
    for f in files:
        json.loads((outs[0] / f).read_text())
    record(12, same and codes == [0, 0],
           f"{len(files)} JSON reports byte-identical: {same}; exit codes {codes}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
