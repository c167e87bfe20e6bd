"""Batch front-end: ``pshlab <subcommand> ...``.

Exit codes: 0 when every asserted contract holds, 1 on usage errors (bad flags, ranges,
missing files), 2 on a contract violation or numerical failure; the failing metric is named
on stderr and in the report.

Reports are JSON with sorted keys and no timestamps, so identical configurations on the same
build give byte-identical files.  Tabular data goes to CSV next to the report, fields to HMAF.
"""

import argparse
import csv
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .form_calculus import ConeError, GridSpec, ScalarField, fft_workers, read_hmaf, write_hmaf

SCHEMA_VERSION = 1
SCENARIO_NAMES = ["flat_kahler", "guan_li_closed", "nonclosed_hermitian", "nef_degenerate",
                  "product_collapsing"]
OUT_ENV = "PSHLAB_OUT"


class UsageError(Exception):
    pass


class ContractViolation(Exception):
    def __init__(self, metric, detail):
        super().__init__(f"{metric}: {detail}")
        self.metric, self.detail = metric, detail


@dataclass
class RunConfig:
    """Everything that determines a run; serialized verbatim into each report."""

    subcommand: str
    scenario: str = None
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "."
    figures: bool = False
    threads: int = 1

    def to_dict(self):
        return {"subcommand": self.subcommand, "scenario": self.scenario, "params": self.params,
                "grid": self.grid, "solver": self.solver, "seed": self.seed,
                "figures": self.figures, "threads": self.threads}


# ---------------------------------------------------------------------------
# serialization

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings, tuples to lists."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


def commit_id():
    env = os.environ.get("PSHLAB_COMMIT")
    if env:
        return env
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def make_report(cfg, op, inputs, metrics, tolerances, contracts):
    return {
        "schema_version": SCHEMA_VERSION, "tool_version": __version__, "commit": commit_id(),
        "scenario": cfg.scenario, "op": op, "inputs": inputs, "metrics": metrics,
        "tolerances": tolerances, "seed": cfg.seed, "config": cfg.to_dict(),
        "contracts": contracts,
    }


def write_json(path, obj):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


# ---------------------------------------------------------------------------
# figures (optional; matplotlib is imported only here)

def _figure(path, xs, ys_by_label, xlabel, ylabel, logx=False, logy=False):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise UsageError("--figures needs matplotlib (pip install 'artifact[figures]')") from exc
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, ys in ys_by_label.items():
        ax.plot(xs, ys, marker="o", ms=3, lw=1, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    if len(ys_by_label) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _positive(vals):
    return [max(abs(v), 1e-300) for v in vals]


# ---------------------------------------------------------------------------
# argument types

def _int_range(lo, hi=None):
    def conv(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}")
        if v < lo or (hi is not None and v > hi):
            raise argparse.ArgumentTypeError(f"{v} outside [{lo}, {hi if hi is not None else 'inf'}]")
        return v
    return conv


def _float_range(lo=-math.inf, hi=math.inf, open_lo=False, open_hi=False):
    def conv(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {s!r}")
        bad = (v < lo or v > hi or (open_lo and v == lo) or (open_hi and v == hi)
               or not math.isfinite(v))
        if bad:
            raise argparse.ArgumentTypeError(f"{v} outside {'(' if open_lo else '['}{lo}, {hi}{')' if open_hi else ']'}")
        return v
    return conv


def _float_list(s):
    try:
        vals = [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated finite numbers, got {s!r}")
    return vals


def _int_list(s):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _param(s):
    if "=" not in s:
        raise argparse.ArgumentTypeError(f"expected key=value, got {s!r}")
    k, v = s.split("=", 1)
    try:
        val = int(v)
    except ValueError:
        try:
            val = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"parameter {k} needs a numeric value")
    return k.strip(), val


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _scenario_args(p, default="flat_kahler", grid=None):
    p.add_argument("--scenario", choices=SCENARIO_NAMES, default=default)
    p.add_argument("--grid", type=_int_range(8, 256), default=grid,
                   help="points per real axis (power of two)")
    p.add_argument("--n", type=_int_range(1, 3), default=None, help="complex dimension")
    p.add_argument("--param", type=_param, action="append", default=[],
                   help="extra scenario parameter key=value (repeatable)")
    p.add_argument("--seed", type=_int_range(0), default=0)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")


def build_parser():
    top = _Parser(prog="pshlab", description="Discrete checks for omega-psh volume functionals.")
    top.add_argument("--threads", type=_int_range(1, 256), default=1, help="FFT worker cap")
    top.add_argument("--figures", action="store_true", help="also render PNG figures (matplotlib)")
    top.add_argument("--version", action="version", version=f"pshlab {__version__}")
    sub = top.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    sc = sub.add_parser("scenario", help="list or build scenarios")
    scs = sc.add_subparsers(dest="action", parser_class=_Parser)
    scs.required = True
    scs.add_parser("list")
    b = scs.add_parser("build")
    _scenario_args(b)
    b.add_argument("--dump-fields", action="store_true", help="write omega and omega_X as HMAF")

    ev = sub.add_parser("envelope", help="psh envelopes")
    evs = ev.add_subparsers(dest="action", parser_class=_Parser)
    evs.required = True
    r = evs.add_parser("run")
    _scenario_args(r)
    r.add_argument("--obstacle", default="bump",
                   help="builtin name (bump, two_wells, min_pair, random) or an HMAF scalar file")
    r.add_argument("--beta-max", type=_float_range(16.0, 1e6), default=16384.0)
    r.add_argument("--tol", type=_float_range(0.0, 1.0, open_lo=True), default=None,
                   help="Newton residual tolerance (default 1e-9 max det omega)")
    r.add_argument("--eps", type=_float_range(0.0, 10.0), default=0.0,
                   help="regularize omega + eps omega_X (needed for degenerate scenarios)")
    r.add_argument("--defect-rel", type=_float_range(0.0, 1.0, open_lo=True), default=1e-3,
                   help="orthogonality defect tolerance relative to total mass")

    ms = sub.add_parser("mass", help="mass surveys")
    mss = ms.add_subparsers(dest="action", parser_class=_Parser)
    mss.required = True
    m = mss.add_parser("survey")
    _scenario_args(m, "guan_li_closed")
    m.add_argument("--family-size", type=_int_range(1, 100000), default=20)
    m.add_argument("--js", type=_int_list, default=None, help="comma-separated j values")
    m.add_argument("--m-clip", type=_float_range(0.0, 1e6), default=None)
    m.add_argument("--eps-ladder", type=_float_list, default=None)
    m.add_argument("--max-freq", type=_int_range(1, 8), default=2)

    cp = sub.add_parser("compare", help="comparison, contact and domination checks")
    cps = cp.add_subparsers(dest="action", parser_class=_Parser)
    cps.required = True
    c = cps.add_parser("check")
    _scenario_args(c)
    c.add_argument("--lambda", dest="lam", type=_float_range(0.0, 1.0, True, True), default=0.5)
    c.add_argument("--s-sweep", type=_float_list, default=[0.1, 0.25, 0.5],
                   help="fractions of s_max (or of osc(u - (1 - lambda) v) when B = 0), in (0, 1)")
    c.add_argument("--pairs", type=_int_range(1, 10000), default=10)
    c.add_argument("--trials", type=_int_range(0, 1000000), default=500)
    c.add_argument("--c", dest="c_dom", type=_float_range(0.0, 1.0, open_hi=True), default=0.5)
    c.add_argument("--eps", type=_float_range(0.0, 10.0), default=0.1,
                   help="regularization for domination campaigns on degenerate scenarios")

    mo = sub.add_parser("morse", help="Gauduchon families, pairing scan and Morse-type masses")
    mos = mo.add_subparsers(dest="action", parser_class=_Parser)
    mos.required = True
    k = mos.add_parser("check")
    _scenario_args(k, "nef_degenerate")
    k.add_argument("--family-size", type=_int_range(1, 1000), default=4)
    k.add_argument("--eps-ladder", type=_float_list, default=None)
    k.add_argument("--constructed", action="store_true",
                   help="integrated inequality in the constructed (equality-density) mode")
    k.add_argument("--localized", action="store_true", help="localized Gauduchon members (n = 2)")

    st = sub.add_parser("suite", help="run the reduced acceptance suite")
    st.add_argument("--quick", action="store_true")
    st.add_argument("--seed", type=_int_range(0), default=0)
    st.add_argument("--out", default=None)
    return top


# ---------------------------------------------------------------------------
# helpers

def _outdir(args):
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _build(args, n_default=2, res_default=16):
    from .scenarios import BuildError, build_scenario
    params = dict(args.param)
    params["n"] = args.n if args.n is not None else params.get("n", n_default)
    params["res"] = args.grid if args.grid is not None else params.get("res", res_default)
    params["seed"] = args.seed
    try:
        return build_scenario(args.scenario, params)
    except (BuildError, ValueError, MemoryError) as exc:
        raise UsageError(str(exc)) from exc


def _max_freq(s, want=2):
    # band limit: products of two fields need res >= 8 max_freq
    return max(1, min(want, s.grid.res // 8))


def _config(args, s=None, solver=None):
    return RunConfig(
        subcommand=" ".join(x for x in (args.cmd, getattr(args, "action", None)) if x),
        scenario=s.name if s else getattr(args, "scenario", None),
        params=dict(s.params) if s else {},
        grid=s.grid.to_dict() if s else {},
        solver=solver or {}, seed=getattr(args, "seed", 0), out=str(args.out),
        figures=args.figures, threads=args.threads)


def _assert(contracts, metric, value, bound, sense="<="):
    ok = value <= bound if sense == "<=" else value >= bound
    if isinstance(value, float) and not math.isfinite(value):
        ok = False
    contracts.append({"metric": metric, "value": value, "bound": bound, "sense": sense,
                      "passed": bool(ok)})


def _finish(report, path):
    write_json(path, report)
    failed = [c for c in report["contracts"] if not c["passed"]]
    if failed:
        c = failed[0]
        raise ContractViolation(c["metric"], f"{c['value']!r} not {c['sense']} {c['bound']!r} "
                                             f"(report {path})")
    return 0


# ---------------------------------------------------------------------------
# subcommands

def cmd_scenario(args):
    if args.action == "list":
        for name in SCENARIO_NAMES:
            print(name)
        return 0
    s = _build(args)
    out = _outdir(args)
    stem = f"scenario_{s.name}_n{s.n}_r{s.grid.res}"
    files = []
    if args.dump_fields:
        for label, f in (("omega", s.omega), ("omega_X", s.omega_X)):
            p = out / f"{stem}_{label}.hmaf"
            write_hmaf(p, f)
            files.append(p.name)
    cfg = _config(args, s)
    report = make_report(cfg, "scenario build", {"fields": files}, s.to_dict(), {}, [])
    return _finish(report, out / f"{stem}.json")


def _load_obstacle(spec, grid, seed):
    from .envelope import BUILTIN_OBSTACLES, builtin_obstacle
    if spec in BUILTIN_OBSTACLES:
        return builtin_obstacle(spec, grid, seed), spec
    p = Path(spec)
    if not p.is_file():
        raise UsageError(f"--obstacle: {spec!r} is neither a builtin "
                         f"({', '.join(BUILTIN_OBSTACLES)}) nor an existing file")
    try:
        h = read_hmaf(p)
    except (ValueError, OSError) as exc:
        raise UsageError(f"--obstacle: {exc}") from exc
    if not isinstance(h, ScalarField) or h.grid != grid:
        raise UsageError(f"--obstacle: {spec} is not a scalar field on {grid}")
    return h, p.name


def cmd_envelope(args):
    from .envelope import SchemeError, default_betas, defect_tol, envelope_beta
    s = _build(args, res_default=64 if (args.n or 2) == 1 else 16)
    if s.degenerate and args.eps == 0:
        raise UsageError(f"{s.name} has degenerate omega; pass --eps > 0")
    if args.eps > 0:
        s = s.regularized(args.eps)
    h, label = _load_obstacle(args.obstacle, s.grid, args.seed)
    betas = default_betas(args.beta_max)
    opts = {"tol": args.tol}
    out = _outdir(args)
    solver = {"beta_schedule": betas, "newton": opts, "eps": args.eps}
    cfg = _config(args, s, solver)
    stem = f"envelope_{s.name}_n{s.n}_r{s.grid.res}_{Path(label).stem}"
    contracts = []
    try:
        res = envelope_beta(s, h, betas, opts)
    except SchemeError as exc:
        metrics = {"newton_residual": exc.residual, "failed_beta": exc.beta, "error": str(exc)}
        _assert(contracts, "newton_converged", False, True, ">=")
        report = make_report(cfg, "envelope run", {"obstacle": label}, metrics, {}, contracts)
        return _finish(report, out / f"{stem}.json")
    met = res.metrics()
    dtol = max(defect_tol(res.beta_max, res.tau, res.total_mass, 0.0, s.n),
               args.defect_rel * res.total_mass)
    tols = {"sup_violation": res.scheme_tol, "orthogonality_defect": dtol,
            "defect_rel": args.defect_rel}
    _assert(contracts, "sup_violation", met["sup_violation"], res.scheme_tol)
    _assert(contracts, "orthogonality_defect", met["orthogonality_defect"], dtol)
    _assert(contracts, "min_eigenvalue", met["min_eigenvalue"], 0.0, ">=")
    write_hmaf(out / f"{stem}_phi.hmaf", res.phi)
    write_hmaf(out / f"{stem}_obstacle.hmaf", h)
    write_hmaf(out / f"{stem}_contact.hmaf",
               ScalarField(s.grid, res.contact_mask.astype(float)))
    rows = [{"beta": b, "newton_steps": it, "residual": r, "gmres_iterations": g,
             "step_distance": (res.step_distances[i - 1] if i > 0 else None)}
            for i, (b, it, r, g) in enumerate(res.beta_trace)]
    write_csv(out / f"{stem}_beta.csv", rows,
              ["beta", "newton_steps", "residual", "gmres_iterations", "step_distance"])
    if args.figures and res.step_distances:
        _figure(out / f"{stem}_steps.png", [r[0] for r in res.beta_trace[1:]],
                {"sup |phi_b - phi_prev|": _positive(res.step_distances)}, "beta", "step distance",
                logx=True, logy=True)
    inputs = {"obstacle": label, "fields": [f"{stem}_phi.hmaf", f"{stem}_obstacle.hmaf",
                                            f"{stem}_contact.hmaf"]}
    report = make_report(cfg, "envelope run", inputs, met, tols, contracts)
    return _finish(report, out / f"{stem}.json")


def cmd_mass(args):
    from .volume_bounds import Family, hat_v_closed_check, mass_survey, v_M_survey
    s = _build(args)
    js = args.js or list(range(1, s.n + 1))
    if any(not 0 <= j <= s.n for j in js):
        raise UsageError(f"--js values must lie in [0, {s.n}]")
    fam = Family(args.family_size, args.seed, _max_freq(s, args.max_freq))
    out = _outdir(args)
    cfg = _config(args, s, {"family": fam.describe(), "js": js, "m_clip": args.m_clip,
                            "eps_ladder": args.eps_ladder})
    stem = f"mass_{s.name}_n{s.n}_r{s.grid.res}"
    contracts, tols = [], {}
    try:
        rep = mass_survey(s, fam, js)
    except ConeError as exc:
        _assert(contracts, "cone_violation", exc.worst_eigenvalue, 0.0, ">=")
        return _finish(make_report(cfg, "mass survey", {}, {"error": str(exc)}, {}, contracts),
                       out / f"{stem}.json")
    metrics = {"survey": rep.to_dict()}
    rows = [{"sample": i, **{f"mass_j{j}": rep.masses[j][i] for j in js}}
            for i in range(len(rep.masses[js[0]]))]
    write_csv(out / f"{stem}_samples.csv", rows, ["sample"] + [f"mass_j{j}" for j in js])
    if s.closed:
        tols["closed_relative_deviation"] = 1e-6
        for j in js:
            _assert(contracts, f"max_relative_deviation_j{j}", rep.margins[f"max_relative_deviation_j{j}"], 1e-6)
    else:
        for j in js:
            _assert(contracts, f"min_mass_j{j}", rep.stats[j]["min"], 0.0, ">")
    if args.m_clip is not None:
        vm = v_M_survey(s, args.m_clip, fam)
        metrics["v_M"] = vm.to_dict()
        if "lower_margin" in vm.margins:
            _assert(contracts, "v_M_lower_margin", vm.margins["lower_margin"], 0.0, ">=")
            _assert(contracts, "v_M_upper_margin", vm.margins["upper_margin"], 0.0, ">=")
        _assert(contracts, "v_M_positive_lower", float(vm.stats[s.n]["min"]), 0.0, ">")
    if args.eps_ladder:
        if any(e <= 0 for e in args.eps_ladder):
            raise UsageError("--eps-ladder values must be positive")
        if s.closed:
            lad = hat_v_closed_check(s, args.eps_ladder, fam)
            metrics["ladder"] = lad
            write_csv(out / f"{stem}_ladder.csv", lad["rows"],
                      ["eps", "min", "max", "volume_eps", "deviation", "C", "spectral_deviation"])
            tols.update({"C_max_relative_change": 0.2, "spectral_deviation": 1e-8})
            if len(args.eps_ladder) > 1:
                _assert(contracts, "C_max_relative_change", lad["C_max_relative_change"], 0.2)
            _assert(contracts, "spectral_deviation", lad["spectral_deviation"], 1e-8)
            if args.figures:
                _figure(out / f"{stem}_ladder.png", [r["eps"] for r in lad["rows"]],
                        {"deviation": _positive([r["deviation"] for r in lad["rows"]])},
                        "eps", "max |mass - V|", logx=True, logy=True)
        else:
            lrows = []
            for e in args.eps_ladder:
                r = mass_survey(s.regularized(e), fam, js)
                lrows.append({"eps": e, "volume_eps": r.volume,
                              **{f"min_j{j}": r.stats[j]["min"] for j in js},
                              **{f"max_j{j}": r.stats[j]["max"] for j in js}})
            metrics["ladder"] = {"rows": lrows}
            write_csv(out / f"{stem}_ladder.csv", lrows, list(lrows[0]))
    if args.figures:
        _figure(out / f"{stem}_samples.png", list(range(len(rows))),
                {f"j={j}": rep.masses[j] for j in js}, "sample", "mass")
    report = make_report(cfg, "mass survey", {"family": fam.describe(), "js": js}, metrics, tols,
                         contracts)
    return _finish(report, out / f"{stem}.json")


def cmd_compare(args):
    from .comparison import (
        contact_inequality_check, contact_pair, domination_falsification, modified_comparison_check,
        s_max,
    )
    from .scenarios import condition_b_constant, sample_psh
    s = _build(args)
    if any(not 0 < f < 1 for f in args.s_sweep):
        raise UsageError("--s-sweep fractions must lie in (0, 1)")
    out = _outdir(args)
    stem = f"compare_{s.name}_n{s.n}_r{s.grid.res}"
    B = 0.0 if s.closed else float(condition_b_constant(s)[0])
    smax = s_max(args.lam, B, s.n)
    cfg = _config(args, s, {"lambda": args.lam, "s_sweep": args.s_sweep, "pairs": args.pairs,
                            "trials": args.trials, "c": args.c_dom, "eps": args.eps})
    contracts = []
    tol_cmp = 1e-8 if s.closed else 1e-6
    tols = {"comparison_relative": tol_cmp, "contact_relative": 1e-8, "domination": 1e-9}
    mf = _max_freq(s)
    samples = sample_psh(s, 2 * args.pairs, seed=args.seed, max_freq=mf, keep_hessian=False)
    rows = []
    for k in range(args.pairs):
        u, v = samples[2 * k], samples[2 * k + 1]
        if math.isfinite(smax):
            svals = [f * smax for f in args.s_sweep]
        else:
            d = u.u.values - (1 - args.lam) * v.u.values
            svals = [f * float(d.max() - d.min()) for f in args.s_sweep]
        for r in modified_comparison_check(s, u, v, args.lam, svals, B=B, tol=tol_cmp):
            row = r.to_dict()
            row.pop("extras")
            row["pair"] = k
            rows.append(row)
    cols = ["pair", "u_id", "v_id", "lam", "s", "B", "m_lambda", "cells", "lhs", "rhs", "margin",
            "relative_margin", "vacuous", "passed", "tie_sensitivity"]
    write_csv(out / f"{stem}_comparison.csv", rows, cols)
    worst = min(r["relative_margin"] for r in rows)
    _assert(contracts, "comparison_relative_margin", worst, -tol_cmp, ">=")
    psi = samples[0]
    u, R, a = contact_pair(s, psi)
    con = contact_inequality_check(s, u, psi, R)
    _assert(contracts, "contact_margin", min(con["margins"].values()), -1e-8, ">=")
    metrics = {"B": B, "s_max": smax, "comparison_worst_relative_margin": worst,
               "comparison_vacuous": sum(1 for r in rows if r["vacuous"]),
               "comparison_checks": len(rows), "contact": {**con, "amplitude": a}}
    if args.trials > 0:
        sd = s.regularized(args.eps) if s.degenerate else s
        dom = domination_falsification(sd, args.trials, c=args.c_dom, seed=args.seed, max_freq=mf)
        metrics["domination"] = dom
        metrics["domination_eps"] = args.eps if s.degenerate else 0.0
        _assert(contracts, "domination_violations", dom["violations"], 0)
        _assert(contracts, "domination_constructive_failures",
                dom["constructive_trials"] - dom["constructive_passed"], 0)
    if args.figures:
        by_pair = {}
        for r in rows:
            by_pair.setdefault(f"pair {r['pair']}", []).append(r["rhs"])
        _figure(out / f"{stem}_sublevel.png", args.s_sweep, by_pair, "s / s_ref",
                "sublevel mass of ma(u)")
    report = make_report(cfg, "compare check", {"lambda": args.lam, "s_sweep": args.s_sweep},
                         metrics, tols, contracts)
    return _finish(report, out / f"{stem}.json")


def cmd_morse(args):
    from .hermitian_algebra import random_positive
    from .form_calculus import HermitianForm11Field
    from .morse_checks import gauduchon_family, lamari_pairing_scan, morse_mass_convergence, popovici_integrated
    from .volume_bounds import Family
    s = _build(args, res_default=16)
    out = _outdir(args)
    stem = f"morse_{s.name}_n{s.n}_r{s.grid.res}"
    cfg = _config(args, s, {"family_size": args.family_size, "eps_ladder": args.eps_ladder,
                            "constructed": args.constructed, "localized": args.localized})
    contracts, tols = [], {"gauduchon_defect": 1e-8, "popovici_relative": 1e-9,
                           "C_max_relative_change": 0.2, "spectral_deviation": 1e-8}
    fam = gauduchon_family(s.grid, args.family_size, args.seed, localized=args.localized)
    delta, arg, ratios = lamari_pairing_scan(s, fam)
    metrics = {"gauduchon": {"defects": fam.defects, "kinds": fam.kinds},
               "lamari": {"delta_star": delta, "argmin": arg, "ratios": ratios}}
    _assert(contracts, "gauduchon_defect", max(fam.defects), 1e-8)
    # integrated inequality on family triples
    rng = np.random.default_rng([args.seed, 5])
    pop = []
    for k in range(max(3, args.family_size)):
        t = [fam.members[(k + i) % len(fam.members)] for i in range(3)]
        t[1] = t[1] + HermitianForm11Field.constant(s.grid, random_positive(rng, s.n, (), 0.1))
        lhs, rhs, _ = popovici_integrated(*t, constructed=args.constructed)
        pop.append({"triple": k, "lhs": lhs, "rhs": rhs, "relative_margin": (lhs - rhs) / abs(rhs)})
    write_csv(out / f"{stem}_popovici.csv", pop, ["triple", "lhs", "rhs", "relative_margin"])
    worst = min(r["relative_margin"] for r in pop)
    metrics["popovici_worst_relative_margin"] = worst
    _assert(contracts, "popovici_relative_margin", worst, -1e-9, ">=")
    if s.closed:
        ladder = args.eps_ladder or [0.2, 0.1, 0.05]
        if any(e <= 0 for e in ladder):
            raise UsageError("--eps-ladder values must be positive")
        conv = morse_mass_convergence(s, ladder, Family(args.family_size, args.seed, _max_freq(s)))
        metrics["convergence"] = conv
        write_csv(out / f"{stem}_ladder.csv", conv["rows"],
                  ["eps", "deviation", "C", "mixed_deviation", "C_mixed", "spectral_deviation",
                   "mixed_spectral_deviation"])
        if len(ladder) > 1:
            _assert(contracts, "C_max_relative_change", conv["C_max_relative_change"], 0.2)
        _assert(contracts, "spectral_deviation", conv["spectral_deviation"], 1e-8)
        if args.figures:
            _figure(out / f"{stem}_ladder.png", ladder,
                    {"top": _positive([r["deviation"] for r in conv["rows"]]),
                     "mixed": _positive([r["mixed_deviation"] for r in conv["rows"]])},
                    "eps", "max deviation", logx=True, logy=True)
    report = make_report(cfg, "morse check", {"family": fam.description}, metrics, tols, contracts)
    return _finish(report, out / f"{stem}.json")


def cmd_suite(args):
    """Reduced acceptance runs: each step is a subcommand invocation writing its own report."""
    out = _outdir(args)
    seed = str(args.seed)
    quick = args.quick
    g2 = "16"
    steps = [
        ("scenarios", ["scenario", "build", "--scenario", "guan_li_closed", "--grid", g2]),
        ("mass_closed", ["mass", "survey", "--scenario", "guan_li_closed", "--grid", "16" if quick else "64",
                         "--family-size", "6" if quick else "20", "--seed", seed]),
        ("mass_ladder", ["mass", "survey", "--scenario", "nef_degenerate", "--grid", g2,
                         "--family-size", "4", "--eps-ladder", "0.2,0.1,0.05", "--seed", seed]),
        ("envelope_1d", ["envelope", "run", "--scenario", "flat_kahler", "--n", "1",
                         "--grid", "32" if quick else "256", "--obstacle", "two_wells",
                         "--beta-max", "1024" if quick else "16384", "--seed", seed]),
        ("compare", ["compare", "check", "--scenario", "flat_kahler", "--grid", g2,
                     "--pairs", "3" if quick else "10", "--trials", "50" if quick else "500",
                     "--seed", seed]),
        ("morse", ["morse", "check", "--scenario", "nef_degenerate", "--grid", g2,
                   "--family-size", "3" if quick else "6", "--seed", seed]),
    ]
    summary = []
    code = 0
    for name, argv in steps:
        sub = out / name
        rc = run(["--threads", str(args.threads)] + argv + ["--out", str(sub)])
        summary.append({"step": name, "argv": argv, "exit_code": rc})
        code = max(code, rc)
    cfg = RunConfig("suite", seed=args.seed, out=str(args.out), threads=args.threads,
                    solver={"quick": quick})
    contracts = [{"metric": f"step_{r['step']}", "value": r["exit_code"], "bound": 0,
                  "sense": "<=", "passed": r["exit_code"] == 0} for r in summary]
    report = make_report(cfg, "suite", {"quick": quick}, {"steps": summary}, {}, contracts)
    write_json(out / "suite.json", report)
    for r in summary:
        print(f"{r['step']:<12} {'PASS' if r['exit_code'] == 0 else 'FAIL'}")
    return code


COMMANDS = {"scenario": cmd_scenario, "envelope": cmd_envelope, "mass": cmd_mass,
            "compare": cmd_compare, "morse": cmd_morse, "suite": cmd_suite}


def run(argv=None):
    """Parse argv and execute; returns the exit code (0 pass, 1 usage, 2 contract violation)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        old = fft_workers()
        fft_workers(args.threads)
        try:
            return COMMANDS[args.cmd](args)
        finally:
            fft_workers(old)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"contract violation: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
