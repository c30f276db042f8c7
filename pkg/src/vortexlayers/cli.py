"""Command line front end.

    vortexlayers plan --alpha 0.05 --n 8 --layers 4 --out run/
    vortexlayers audit --alpha 0.05 --n 8 --out run/
    vortexlayers verify --lemma bs-c01 --J 0 --delta 0.1 --sweep 8,16,32 --out run/
    vortexlayers construct --plan run/plan.json --layers-field 2 --layers-schedule 8 --out run/
    vortexlayers force-audit --plan run/plan.json --out run/
    vortexlayers blowup --alpha 0.05 --n 8 --out run/
    vortexlayers report --out run/

Every command accepts ``--config file.json`` whose keys override the flags,
and ``--seed``.  Outputs carry no timestamps, so equal inputs give equal
bytes.  Exit status is 0 iff every check that is not marked out-of-regime
passes; failures print a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import math
import os
import sys
import warnings

import numpy as np

from . import construct as cons
from .errors import VortexLayersError
from .flow import (random_odd_spec, check_1dode_bounds, check_1dode2_bounds, polynomial_spec,
                   cubic_reduced_velocity, flow_factors)
from .grid import verify as gv
from .grid.io import write_grid
from .params import plan as make_plan, audit_constraints, force_exponents, schedule, Plan

LEMMAS = ("bs-c01", "bs-c12", "quadratic", "bs-c1", "farfield", "inner", "outer", "nabla-alpha",
          "1dode", "1dode2", "3dpde")


# ------------------------------------------------------------- helpers

def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _out(args, name):
    return os.path.join(args.out, name)


def _sweep(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _multi_index(text):
    v = [int(x) for x in str(text).split(",")]
    if len(v) == 1:
        # "--J 0" is the zero multi-index, "--J 1" a first derivative along x1
        return (v[0], 0, 0)
    return tuple(v)


def _plan_from(args) -> Plan:
    if getattr(args, "plan", None):
        with open(args.plan) as fh:
            d = json.load(fh)["plan"]
        return make_plan(d["alpha"], d["N"], d.get("r"), d.get("C", 10.0))
    return make_plan(args.alpha, args.n, args.r)


def _checks_csv(rows):
    lines = ["check,value,bound,pass,out_of_regime"]
    for name, val, bound, ok, oor in rows:
        lines.append(f"{name},{val:.12g},{bound:.12g},{str(bool(ok)).lower()},{str(bool(oor)).lower()}")
    return "\n".join(lines) + "\n"


def _exit_code(rows):
    return 0 if all(ok or oor for _, _, _, ok, oor in rows) else 1


# ------------------------------------------------------------ commands

def cmd_plan(args):
    p = _plan_from(args)
    out = {"plan": p.to_dict()}
    if not p.euler:
        sch = schedule(p, args.layers, force_override=True)
        out["layers"] = [lay.to_dict() for lay in sch.layers]
        out["flags"] = sch.flags
        out["feasible"] = not sch.flags
        out["force_exponents"] = force_exponents(p)
    path = args.out if args.out.endswith(".json") else _out(args, "plan.json")
    _write_json(path, out)
    return 0


def cmd_audit(args):
    p = _plan_from(args)
    rep = audit_constraints(p)
    _write(_out(args, "constraints.csv"), rep.to_csv())
    if p.euler:
        return 0
    ex = force_exponents(p)
    lines = ["term,exponent,negative"] + [f"{k},{v:.12g},{str(v < 0).lower()}" for k, v in ex.items()]
    _write(_out(args, "force_exponents.csv"), "\n".join(lines) + "\n")
    return 0 if rep.all_pass else 1


def _bound_csv(lemma, claim, rep):
    lines = []
    for i, line in enumerate(rep.to_csv().splitlines()):
        lines.append(("lemma,claim," if i == 0 else f"{lemma},{claim},") + line)
    lines.append(f"# status={'pass' if rep.all_pass else 'fail'} rows={len(rep.rows)}")
    return "\n".join(lines) + "\n"


def _verify_1dode(args):
    rng = np.random.default_rng(args.seed)
    reps = []
    for _ in range(args.count):
        spec, x = random_odd_spec(rng)
        reps.append(check_1dode_bounds(spec, x, 1.0, n_times=17))
    return _merge("1dode", reps)


def _verify_1dode2(args):
    rng = np.random.default_rng(args.seed)
    reps = []
    for _ in range(args.count):
        a, b = rng.uniform(0.5, 2.0), rng.uniform(-0.2, 0.2)
        spec = polynomial_spec(a, b)
        X = 0.9 * math.sqrt(a / (6 * abs(b))) if b else 1.0
        reps.append(check_1dode2_bounds(spec, min(X, 2.0), rng.uniform(0.0, 0.8), n_x=9, n_times=9))
    return _merge("1dode2", reps)


def _verify_3dpde(args):
    rng = np.random.default_rng(args.seed)
    reps = []
    for _ in range(args.count):
        c, b = rng.uniform(0.5, 2.0), rng.uniform(-0.05, 0.05)
        e, q = rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.5)
        X = min(1.0, 0.9 * math.sqrt(c / (6 * abs(b)))) if b else 1.0
        ff = flow_factors(cubic_reduced_velocity(c, b, e, q), rng.uniform(0.0, 0.8), X, n_nodes=65)
        reps.append(ff.report)
    return _merge("3dpde", reps)


def _merge(lemma, reps):
    out = reps[0].__class__(lemma)
    for k, rep in enumerate(reps):
        for row in rep.rows:
            out.rows.append(row.__class__(f"{row.bound_id}#{k}", row.t, row.lhs, row.rhs, row.relation))
    return out


CLAIMS = {"1dode": "bounds (i)-(vii) on phi phi_x phi_xx",
          "1dode2": "containment and derivative bounds on [t 1]",
          "3dpde": "six log-derivative bounds on g1 g3"}


def cmd_verify(args):
    lemma = args.lemma
    if lemma not in LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {', '.join(LEMMAS)}")
    if lemma in CLAIMS:
        rep = {"1dode": _verify_1dode, "1dode2": _verify_1dode2, "3dpde": _verify_3dpde}[lemma](args)
        _write(_out(args, f"decay_{lemma}.csv"), _bound_csv(lemma, CLAIMS[lemma], rep))
        return 0 if rep.all_pass else 1
    sweep = _sweep(args.sweep)
    kw = dict(delta=args.delta, slack=args.slack)
    fam = args.family
    if lemma == "bs-c01":
        rep = gv.verify_bs_c01(sweep, _multi_index(args.J), fam=fam or "identity", **kw)
    elif lemma == "bs-c12":
        rep = gv.verify_bs_c12(sweep, _multi_index(args.J), fam=fam or "identity", **kw)
    elif lemma == "quadratic":
        rep = gv.verify_quadratic(sweep, args.r or 0.0, fam=fam or "fixed", seed=args.seed, **kw)
    elif lemma == "bs-c1":
        rep = gv.verify_bs_c1(sweep, fam=fam or "identity", **kw)
    elif lemma == "farfield":
        rep = gv.verify_farfield(sweep, fam=fam or "fixed")
    elif lemma == "nabla-alpha":
        rep = gv.verify_nabla_alpha(sweep, args.alpha, fam=fam or "identity", **kw)
    else:
        inner, outer = cons.verify_interaction_lemmas(sweep, delta=args.delta, slack=args.slack,
                                                      seed=args.seed)
        rep = inner if lemma == "inner" else outer
    _write(_out(args, f"decay_{lemma}.csv"), rep.to_csv())
    return 0 if rep.passed else 1


def _build(args, p):
    warnings.simplefilter("ignore")
    n_field = args.layers_field
    if not 1 <= n_field <= 2:
        raise ValueError("--layers-field must be 1 or 2: layer 2 would need a time-dependent inner flow")
    states = [cons.layer_zero(p, args.force_override, args.res)]
    if n_field > 1:
        states.append(cons.build_layer(1, states, p, args.force_override, n_times=args.n_times,
                                       per_support=args.res))
    return states


def _layer_checks(states, args):
    rows = []
    for st in states:
        oor = st.out_of_regime
        inv = cons.check_layer_invariants(st)
        rows.append((f"layer{st.n}_invariants", float(inv.all_pass), 1.0, inv.all_pass, False))
        ind = cons.induction_check(st)
        rows.append((f"layer{st.n}_induction", float(sum(r.passed for r in ind.rows)), float(len(ind.rows)),
                     ind.all_pass, oor))
        if not st.static:
            rev = cons.flow_reversibility(st, st.T, seed=args.seed)
            rows.append((f"layer{st.n}_reversibility", rev, 1e-8, rev <= 1e-8, False))
            res, _ = cons.layer_pde_residual(st, float(st.times[len(st.times) // 2]), args.pde_points,
                                             seed=args.seed)
            rows.append((f"layer{st.n}_pde_residual", res, 1e-4, res <= 1e-4, False))
            ratio = st.axis["ratio_to_A"]
            rows.append((f"layer{st.n}_ratio_to_A", ratio, 35 / 34, 1 / 34 < ratio < 35 / 34, oor))
    dw, du = cons.symmetry_defects(states, 1.0, seed=args.seed)
    rows.append(("symmetry_vorticity", dw, 1e-12, dw <= 1e-12, False))
    rows.append(("symmetry_velocity", du, 1e-12, du <= 1e-12, False))
    return rows


def _audit_checks(audit, states):
    oor = any(st.out_of_regime for st in states)
    rows = [("exponents_negative", float(max(r["exponent"] for r in audit.rows)), 0.0, audit.summable(), False)]
    if len(states) > 1:
        for k in ("switching",) + cons.TERMS:
            v = audit.ratio(k)
            rows.append((f"ratio_{k}", v, 1.0, v <= 1.0, oor))
    return rows


def _blowup_checks(b, p):
    err = max(abs(r["ratio"] - p.R) for r in b.rows[1:]) if len(b.rows) > 1 else 0.0
    return [("blowup_ratio_R", err, 1e-9, err <= 1e-9, False)]


def cmd_construct(args):
    p = _plan_from(args)
    states = _build(args, p)
    sch = schedule(p, args.layers_schedule, True)
    for n in range(args.layers_schedule + 1):
        if n < len(states):
            d = states[n].to_dict()
            d["level"] = "field"
        else:
            d = sch[n].to_dict()
            d["level"] = "schedule"
        _write_json(_out(args, f"layer_{n}.json"), d)
    if args.grids:
        os.makedirs(_out(args, "grids"), exist_ok=True)
        for st in states:
            lf = st.field(1.0)
            write_grid(_out(args, f"grids/layer{st.n}_vorticity_t1.bin"), lf.w)
            write_grid(_out(args, f"grids/layer{st.n}_velocity_t1.bin"), lf.u)
    rows = _layer_checks(states, args)
    audit = cons.force_audit(p, states, args.layers_schedule, seed=args.seed, per_support=args.res)
    _write(_out(args, "force_audit.csv"), audit.to_csv())
    rows += _audit_checks(audit, states)
    b = cons.blowup_diagnostic(p, args.layers_schedule, states)
    _write(_out(args, "blowup.csv"), b.to_csv())
    rows += _blowup_checks(b, p)
    _write(_out(args, "checks.csv"), _checks_csv(rows))
    return _exit_code(rows)


def cmd_force_audit(args):
    p = _plan_from(args)
    states = _build(args, p)
    audit = cons.force_audit(p, states, args.layers_schedule, seed=args.seed, per_support=args.res)
    _write(_out(args, "force_audit.csv"), audit.to_csv())
    rows = _audit_checks(audit, states)
    _write(_out(args, "force_checks.csv"), _checks_csv(rows))
    return _exit_code(rows)


def cmd_blowup(args):
    p = _plan_from(args)
    b = cons.blowup_diagnostic(p, args.layers_schedule)
    _write(_out(args, "blowup.csv"), b.to_csv())
    return _exit_code(_blowup_checks(b, p))


# -------------------------------------------------------------- report

def _decay_status(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    tail = lines[-1] if lines and lines[-1].startswith("#") else ""
    info = dict(kv.split("=", 1) for kv in tail[1:].split() if "=" in kv)
    return info.get("status", "?"), tail[1:].strip()


def cmd_report(args):
    out = ["# Run report", ""]
    d = args.out
    pj = os.path.join(d, "plan.json")
    if os.path.exists(pj):
        with open(pj) as fh:
            pl = json.load(fh)["plan"]
        out += [f"alpha = {pl['alpha']}, N = {pl['N']}, R = {pl['R']:.10g}, s = {pl['s']:.10g}, "
                f"r = {pl['r']:.10g}", ""]
    out += ["| lemma | file | status | detail |", "|---|---|---|---|"]
    cc = os.path.join(d, "constraints.csv")
    if os.path.exists(cc):
        with open(cc) as fh:
            rows = list(csv.DictReader(fh))
        ok = all(r["pass"] == "1" for r in rows) and rows
        worst = min((float(r["margin"]) for r in rows), default=math.nan)
        out.append(f"| constraints | constraints.csv | {'pass' if ok else 'fail'} | worst margin {worst:.6g} |")
    for path in sorted(glob.glob(os.path.join(d, "decay_*.csv"))):
        name = os.path.basename(path)[len("decay_"):-4]
        status, detail = _decay_status(path)
        out.append(f"| {name} | {os.path.basename(path)} | {status} | {detail} |")
    for fname, lemma in (("checks.csv", "construction"), ("force_checks.csv", "force audit")):
        path = os.path.join(d, fname)
        if not os.path.exists(path):
            continue
        with open(path) as fh:
            for r in csv.DictReader(fh):
                status = "pass" if r["pass"] == "true" else ("out-of-regime" if r["out_of_regime"] == "true"
                                                             else "fail")
                out.append(f"| {lemma}: {r['check']} | {fname} | {status} | {r['value']} vs {r['bound']} |")
    bp = os.path.join(d, "blowup.csv")
    if os.path.exists(bp):
        with open(bp) as fh:
            rows = list(csv.DictReader(fh))
        out.append(f"| blow-up series | blowup.csv | {len(rows)} layers | "
                   f"partial sum {float(rows[-1]['partial_sum']):.6g} |")
    layers = sorted(glob.glob(os.path.join(d, "layer_*.json")),
                    key=lambda s: int(os.path.basename(s)[6:-5]))
    if layers:
        out += ["", "| layer | level | T | flags |", "|---|---|---|---|"]
        for path in layers:
            with open(path) as fh:
                L = json.load(fh)
            T = L.get("T", L.get("T_star"))
            out.append(f"| {L['n']} | {L['level']} | {T} | {'; '.join(L.get('flags', []))} |")
    _write(os.path.join(d, "report.md"), "\n".join(out) + "\n")
    return 0


# ----------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="vortexlayers", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, alpha=True):
        p.add_argument("--config", help="JSON file whose keys override the flags")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if alpha:
            p.add_argument("--alpha", type=float, default=0.05)
            p.add_argument("--n", type=float, default=8.0, help="base frequency N")
            p.add_argument("--r", type=float, default=None, help="force Holder exponent (default s/2)")
            p.add_argument("--plan", default=None, help="plan.json written by 'plan'")

    p = sub.add_parser("plan", help="parameters and layer schedule")
    common(p)
    p.add_argument("--layers", type=int, default=8)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("audit", help="exponent constraints")
    common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("verify", help="one lemma sweep")
    common(p)
    p.add_argument("--lemma", required=True, choices=LEMMAS)
    p.add_argument("--sweep", default="8,16,32")
    p.add_argument("--J", default="0", help="multi-index, e.g. 0 or 0,1,0")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--slack", type=float, default=0.25)
    p.add_argument("--family", default=None, choices=("identity", "fixed", "curved"))
    p.add_argument("--count", type=int, default=100, help="seeded cases for flow lemmas")
    p.set_defaults(func=cmd_verify, alpha=0.06)

    for name, func, hlp in (("construct", cmd_construct, "field and schedule layers, audits"),
                            ("force-audit", cmd_force_audit, "per-term force norms"),
                            ("blowup", cmd_blowup, "stretching series")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--layers-field", type=int, default=2)
        p.add_argument("--layers-schedule", type=int, default=8)
        p.add_argument("--res", type=int, default=16, help="samples across each layer support")
        p.add_argument("--n-times", type=int, default=5)
        p.add_argument("--pde-points", type=int, default=100)
        p.add_argument("--force-override", action="store_true")
        p.add_argument("--no-grids", dest="grids", action="store_false")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="collect a run directory into report.md")
    common(p, alpha=False)
    p.set_defaults(func=cmd_report)
    return ap


def parse(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            for k, v in json.load(fh).items():
                setattr(args, k.replace("-", "_"), v)
    return args


def main(argv=None):
    try:
        args = parse(argv)
        os.makedirs(args.out if not args.out.endswith(".json") else (os.path.dirname(args.out) or "."),
                    exist_ok=True)
        return args.func(args)
    except VortexLayersError as e:
        print(json.dumps(e.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    except (ValueError, KeyError, MemoryError, NotImplementedError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}, sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
