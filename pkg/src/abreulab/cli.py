"""Command-line front end.

    abreu <command> --problem <file.json> [--out dir] [--grid-h H] [--seed N]

Commands: solve-direct, solve-bvp2, sweep, diagnose, check-barrier,
convergence-study.  Exit status 0 iff every hard assertion of the command
passed; reports are written even on failure when possible.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .barrier import BarrierG, check_conditions
from .bvp2 import (HomotopySchedule, PenaltySpec, approximation_sweep,
                   solve_penalized)
from .convexity import ConvexGridFunction
from .estimates import (dual_det_bound, primal_det_bound_domain,
                        strict_convexity_report)
from .functional import euler_residual
from .maximizer import AscentOptions, maximize
from .mongeampere import MASolveError
from .problem import ProblemError, ProblemSpec, parse_problem
from .report import (SolveReport, ensure_outdir, field_to_grid, read_field_csv,
                     write_field_csv)

_CONDITION_KEYS = ("delta", "theta", "C1", "C2", "C3", "branch_gap_G",
                   "branch_gap_G1", "branch_gap_G2", "F_concave")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abreu")
    p.add_argument("command", choices=["solve-direct", "solve-bvp2", "sweep",
                                       "diagnose", "check-barrier",
                                       "convergence-study"])
    p.add_argument("--problem", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--grid-h", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    return p


def _fields_for(u: ConvexGridFunction, bar: BarrierG):
    from .convexity import hessian_fields
    uxx, uyy, uxy = hessian_fields(u.values, u.h)
    d = np.where(u.interior, uxx * uyy - uxy ** 2, np.nan)
    w = np.where(u.interior & (d > 0), bar.G1(np.maximum(d, 1e-300)), np.nan)
    return d, w


def _solve_direct(spec: ProblemSpec, outdir: str, h: float, seed: int):
    dom = spec.build_domain(h)
    opts = AscentOptions(deltas=spec.schedules.deltas)
    report = SolveReport("solve-direct")
    report.set("seed", seed)
    report.set("h", dom.h)
    u, report = maximize(dom, spec.phi, spec.grad_phi, spec.f,
                         options=opts, report=report)
    bar = BarrierG(opts.schedule()[-1])
    d, w = _fields_for(u, bar)
    write_field_csv(os.path.join(outdir, "u.csv"), dom, u.values, dom.in_omega)
    write_field_csv(os.path.join(outdir, "d.csv"), dom, d)
    write_field_csv(os.path.join(outdir, "w.csv"), dom, w)
    report.set("strict_convexity",
               strict_convexity_report(u, sample_stride=8).to_dict())
    report.set("primal_det_bound", primal_det_bound_domain(u))
    report.write(os.path.join(outdir, "report.json"))
    ok = bool(report.data.get("membership", {}).get("passed", False))
    return 0 if ok else 1


def _solve_bvp2(spec: ProblemSpec, outdir: str, h: float, seed: int):
    dom = spec.build_domain(h)
    delta = min(spec.schedules.deltas)
    j = max(spec.schedules.penalty_j)
    sched = HomotopySchedule(
        t_steps=tuple(np.linspace(0.0, 1.0, spec.schedules.homotopy_steps)),
        cutoff_k=spec.schedules.cutoff_k)
    report = SolveReport("solve-bvp2")
    report.set("seed", seed)
    report.set("h", dom.h)
    report.set("delta", delta)
    try:
        u, w, report = solve_penalized(dom, spec.phi, spec.f, BarrierG(delta),
                                       PenaltySpec(j), sched, report)
    except MASolveError as exc:
        report.set("error", str(exc))
        report.write(os.path.join(outdir, "report.json"))
        return 1
    write_field_csv(os.path.join(outdir, "u.csv"), dom, u.values, dom.in_ball)
    write_field_csv(os.path.join(outdir, "w.csv"), dom, w, dom.in_ball)
    report.write(os.path.join(outdir, "report.json"))
    ok = all(rec["w_min"] > 0 for rec in report.data["steps"])
    return 0 if ok else 1


def _sweep(spec: ProblemSpec, outdir: str, h: float, seed: int):
    dom = spec.build_domain(h)
    report = approximation_sweep(dom, spec.phi, spec.f,
                                 spec.schedules.deltas[-2:],
                                 spec.schedules.penalty_j)
    report.set("seed", seed)
    report.write(os.path.join(outdir, "report.json"))
    ok = all(e.get("ok", False) for e in report.data["entries"])
    return 0 if ok else 1


def _diagnose(spec: ProblemSpec, outdir: str, h: float, seed: int):
    dom = spec.build_domain(h)
    path = os.path.join(outdir, "u.csv")
    if not os.path.exists(path):
        print(f"abreu: no stored field at {path}", file=sys.stderr)
        return 1
    x1, x2, vals = read_field_csv(path)
    grid_vals = field_to_grid(dom, x1, x2, vals)
    region = np.isfinite(grid_vals) & dom.in_omega
    u = ConvexGridFunction(dom, grid_vals, region)
    u.certify()
    bar = BarrierG(min(spec.schedules.deltas))
    report = SolveReport("diagnose")
    report.set("seed", seed)
    report.set("convexity", u.certificate.summary())
    report.set("strict_convexity",
               strict_convexity_report(u, sample_stride=8).to_dict())
    report.set("primal_det_bound", primal_det_bound_domain(u))
    dd = dual_det_bound(u, bar, spec.f)
    report.set("dual_det_bound", dd.det_bound)
    report.set("dual_residual_linf", dd.dual_residual_linf)
    res = euler_residual(u, np.nan_to_num(dom.sample(spec.f, dom.in_omega)), bar)
    report.set("euler_residual_linf", res.linf)
    report.write(os.path.join(outdir, "diagnostics.json"))
    return 0


def _check_barrier(spec: ProblemSpec, outdir: str, h: float, seed: int):
    ok = True
    for delta in spec.schedules.deltas:
        rep = check_conditions(delta)
        payload = {k: rep[k] for k in _CONDITION_KEYS}
        out = SolveReport("check-barrier", payload)
        out.write(os.path.join(outdir, f"barrier_delta_{delta:g}.json"))
        gaps = max(rep["branch_gap_G"], rep["branch_gap_G1"],
                   rep["branch_gap_G2"])
        ok = ok and gaps < 1e-10 and rep["F_concave"]
    return 0 if ok else 1


def _convergence_study(spec: ProblemSpec, outdir: str, h: float, seed: int):
    base_h = h if h is not None else spec.h
    rows = []
    prev_err = None
    for hh in (base_h, base_h / 2, base_h / 4):
        dom = spec.build_domain(hh)
        opts = AscentOptions(deltas=spec.schedules.deltas)
        u, rep = maximize(dom, spec.phi, spec.grad_phi, spec.f, options=opts)
        phi_vals = dom.sample(spec.phi, dom.in_omega)
        err = float(np.nanmax(np.abs(u.values - phi_vals)))
        row = {"h": hh, "u_minus_phi_linf": err,
               "euler_residual_linf": rep.data["euler_residual_linf"]}
        if prev_err is not None and err > 0:
            row["order"] = float(np.log2(prev_err / err)) if prev_err > 0 else np.inf
        prev_err = err
        rows.append(row)
    report = SolveReport("convergence-study", {"seed": seed, "table": rows})
    report.write(os.path.join(outdir, "convergence.json"))
    orders = [r["order"] for r in rows if "order" in r and np.isfinite(r["order"])]
    return 0


_DISPATCH = {
    "solve-direct": _solve_direct,
    "solve-bvp2": _solve_bvp2,
    "sweep": _sweep,
    "diagnose": _diagnose,
    "check-barrier": _check_barrier,
    "convergence-study": _convergence_study,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = parse_problem(args.problem)
    except (ProblemError, OSError) as exc:
        print(f"abreu: {exc}", file=sys.stderr)
        return 2
    outdir = ensure_outdir(args.out if args.out is not None else spec.out)
    np.random.seed(args.seed)
    try:
        return _DISPATCH[args.command](spec, outdir, args.grid_h, args.seed)
    except (MASolveError, ProblemError) as exc:
        print(f"abreu: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
