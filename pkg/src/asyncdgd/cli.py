"""Command line entry point: ``asyncdgd run | compare | delays``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import (central_solve, envelope_check, fixed_point, fixed_point_quadratic_direct,
                       gap_report, lipschitz_constant, stacked_lower_bound)
from .asynchrony import (Schedule, best_case_mk, delay_metrics, gen_best_case, gen_partial_async,
                         gen_synchronous, gen_total_async, gen_worst_case, verify_partial_async,
                         worst_case_mk)
from .config import ExperimentConfig, build, with_seed
from .engine import run_concurrent, simulate
from .errors import AsyncDGDError, ParameterError
from .operators import contraction_factor
from .problem import QuadraticOracle

WATERMARK = "# stepsize_override=1 (step-size outside the convergence bound)"
BIN_NS = 10_000_000


def _write(path: Path, text: str, watermark: bool):
    if watermark:
        text = WATERMARK + "\n" + text
    path.write_text(text, encoding="utf-8")


def make_schedule(exp, horizon=None) -> Schedule:
    s = exp.config.schedule
    n = exp.graph.n
    K = s.horizon if horizon is None else horizon
    B = n - 1 if s.B < 0 else s.B
    if s.regime == "synchronous":
        return gen_synchronous(n, K - K % n, exp.graph)
    if s.regime == "partial_async":
        return gen_partial_async(n, exp.graph, B, s.D, K, s.seed)
    if s.regime == "total_async":
        return gen_total_async(n, K, s.growth, s.seed, exp.graph)
    if s.regime == "worst_case":
        return gen_worst_case(n, exp.graph, B, s.D, K)
    return gen_best_case(n, exp.graph, B, s.D, K)


def solve_fixed_point(spec):
    p = spec.problem
    if spec.kind == "prox_dgd" and p.is_smooth and all(isinstance(o, QuadraticOracle) for o in p.smooth):
        return fixed_point_quadratic_direct(spec)
    return fixed_point(spec)


def execute(exp):
    """Run the configured engine; returns ``(trace, x_star)``."""
    cfg = exp.config
    fp = solve_fixed_point(exp.spec)
    x0 = fp.x_star.copy() if cfg.output.initial == "fixed_point" else exp.x0
    if cfg.mode == "runtime":
        r = cfg.runtime
        trace = run_concurrent(exp.spec, x0, updates=r.updates or None, duration=r.duration or None,
                               activation_threshold=r.activation_threshold or None,
                               x_star=fp.x_star, stride=cfg.output.stride)
    else:
        trace = simulate(exp.spec, make_schedule(exp), x0, x_star=fp.x_star, stride=cfg.output.stride)
    return trace, fp


def _gap_case(exp):
    p = exp.problem
    if exp.spec.kind == "dgd_atc":
        return "atc_smooth", None
    if p.identical_h:
        return "identical_h", None
    G = lipschitz_constant(p)
    return ("lipschitz_h", G) if G is not None else ("general", None)


def _gap_text(exp, fp):
    head = (f"fixed_point_method={fp.method}\nfixed_point_residual={fp.residual!r}\n"
            f"fixed_point_converged={int(fp.converged)}\n")
    if not fp.converged:
        return head + "note=fixed point not reached; gap bounds not evaluated\n", None
    central = central_solve(exp.problem)
    lb, note = stacked_lower_bound(exp.problem)
    case, G = _gap_case(exp)
    rep = None
    for c in (case, "general"):
        try:
            rep = gap_report(exp.problem, exp.spec.W, exp.spec.alpha, fp.x_star, central.F_opt, lb, c, G)
            break
        except ParameterError:
            continue
    if rep is None:
        return head + f"F_opt={central.F_opt!r}\nnote={note}\n", None
    if lb is None:
        rep.notes.append(note)
    return rep.to_text() + head, rep


def cmd_run(cfg: ExperimentConfig, out: Path, override: bool = False, base: Path | None = None) -> dict:
    exp = build(cfg, override, base)
    out.mkdir(parents=True, exist_ok=True)
    trace, fp = execute(exp)
    wm = exp.override
    _write(out / "trace.csv", trace.to_csv(watermark=wm), False)
    _write(out / "schedule.txt", trace.schedule.to_text(), wm)
    _write(out / "config.ini", cfg.to_text() + f"# resolved alpha = {exp.spec.alpha!r}\n", wm)

    gap_text, rep = _gap_text(exp, fp)
    _write(out / "gap_report.txt", gap_text, wm)

    cf = contraction_factor(exp.spec)
    if cf.valid:
        env = envelope_check(trace, fp.x_star, cf.factor)
        env_text = f"algorithm={exp.spec.kind}\n" + env.to_text()
    else:
        env_text = (f"algorithm={exp.spec.kind}\nrho=1.0\n"
                    "note=no linear envelope: some local loss is not strongly convex or the step-size is out of range\n")
    if trace.failure:
        env_text += f"failure={trace.failure}\n"
    _write(out / "envelope_report.txt", env_text, wm)
    return {"trace": trace, "fixed_point": fp, "gap": rep, "envelope": env_text, "experiment": exp}


def _problem_key(cfg: ExperimentConfig):
    g = cfg.graph
    return (cfg.problem, g.kind, g.n, g.edges, g.seed, g.edge_file)


def _curve(exp, trace, F_opt):
    p = exp.problem
    return np.array([p.consensus_value(s.mean(axis=0)) - F_opt for s in trace.snapshots])


def cmd_compare(cfgs, names, out: Path, override: bool = False, bases=None) -> str:
    if not cfgs:
        raise ParameterError("compare needs at least one config")
    key = _problem_key(cfgs[0])
    for c, nm in zip(cfgs[1:], names[1:]):
        if _problem_key(c) != key:
            raise ParameterError(f"config {nm} does not share the problem instance of {names[0]}")
    modes = {c.mode for c in cfgs}
    if len(modes) > 1:
        raise ParameterError("compare needs all configs in simulator mode or all in runtime mode")
    bases = bases or [None] * len(cfgs)
    curves = []
    F_opt = None
    for c, b in zip(cfgs, bases):
        exp = build(c, override, b)
        if F_opt is None:
            F_opt = central_solve(exp.problem).F_opt
        trace, _ = execute(exp)
        curves.append((trace, _curve(exp, trace, F_opt), exp.override))
    wm = any(w for _, _, w in curves)
    cols = [f"F_gap_{nm}" for nm in names]
    if modes == {"runtime"}:
        header = ["time_s", *cols]
        t_end = max(int(tr.timestamps_ns[-1]) if tr.K else 0 for tr, _, _ in curves)
        edges = np.arange(0, t_end + BIN_NS, BIN_NS)
        table = []
        for tr, cv, _ in curves:
            times = np.array([0 if k == 0 else tr.timestamps_ns[k - 1] for k in tr.metric_k])
            pos = np.searchsorted(times, edges, side="right") - 1
            table.append(cv[np.maximum(pos, 0)])
        rows = [[f"{e / 1e9:.2f}", *(repr(float(t[r])) for t in table)] for r, e in enumerate(edges)]
    else:
        header = ["k", *cols]
        all_k = sorted(set().union(*(tr.metric_k.tolist() for tr, _, _ in curves)))
        rows = []
        for k in all_k:
            row = [str(k)]
            for tr, cv, _ in curves:
                hit = np.flatnonzero(tr.metric_k == k)
                row.append(repr(float(cv[hit[0]])) if hit.size else "")
            rows.append(row)
    if wm:
        header.append("stepsize_override")
        rows = [r + ["1"] for r in rows]
    text = ",".join(header) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(text, encoding="utf-8")
    return text


def cmd_delays(schedule: Schedule, out: Path, bucket_width: int = 10, B=None, D=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    dm = delay_metrics(schedule)
    delays = dm.delays
    hist = dm.histogram(bucket_width)
    lines = ["bucket_start,bucket_end,count"]
    lines += [f"{b * bucket_width},{(b + 1) * bucket_width},{int(c)}" for b, c in enumerate(hist)]
    (out / "delay_histogram.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    rep = verify_partial_async(schedule)
    summary = {
        "K": schedule.K,
        "reads": int(delays.size),
        "max": int(delays.max()) if delays.size else 0,
        "p95": float(np.percentile(delays, 95)) if delays.size else 0.0,
        "mean": float(delays.mean()) if delays.size else 0.0,
        "median": float(np.median(delays)) if delays.size else 0.0,
        "B_min": rep.B_min,
        "D_min": rep.D_min,
        "partial_async_holds": int(rep.holds),
        "epochs": int(dm.k_seq.size - 1),
    }
    (out / "delay_summary.txt").write_text("".join(f"{k}={v}\n" for k, v in summary.items()), encoding="utf-8")
    (out / "epochs.csv").write_text(
        "m,k_m\n" + "".join(f"{m},{k}\n" for m, k in enumerate(dm.k_seq.tolist())), encoding="utf-8")
    Bw = rep.B_min if B is None else B
    Dw = rep.D_min if D is None else D
    k = np.arange(schedule.K + 1)
    rows = ["k,m_k,worst_case,best_case"]
    if Bw is not None:
        worst = worst_case_mk(k, Bw, Dw)
        best = best_case_mk(k, Bw, Dw, schedule.n)
        rows += [f"{kk},{int(m)},{int(w)},{b!r}" for kk, m, w, b in zip(k.tolist(), dm.m_k.tolist(),
                                                                         worst.tolist(), best.tolist())]
    (out / "adaptivity.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return summary


def _parser():
    ap = argparse.ArgumentParser(prog="asyncdgd", description="Asynchronous Prox-DGD / DGD-ATC experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--override-stepsize", action="store_true")
    c = sub.add_parser("compare", help="F(xbar) - F* curves of several configs on one problem")
    c.add_argument("--config", action="append", required=True, help="repeat for each config")
    c.add_argument("--out")
    c.add_argument("--seed", type=int)
    c.add_argument("--override-stepsize", action="store_true")
    d = sub.add_parser("delays", help="delay histogram and epoch analytics of a schedule")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--schedule", help="schedule.txt written by run")
    d.add_argument("--out")
    d.add_argument("--seed", type=int)
    d.add_argument("--bucket-width", type=int, default=10)
    d.add_argument("--override-stepsize", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            cfg = with_seed(ExperimentConfig.load(args.config), args.seed)
            out = Path(args.out or cfg.output.dir)
            res = cmd_run(cfg, out, args.override_stepsize, Path(args.config).parent)
            print(f"wrote {out}/trace.csv ({res['trace'].K} updates)")
            if res["gap"] is not None:
                print(res["gap"].to_text(), end="")
            print(res["envelope"], end="")
        elif args.cmd == "compare":
            cfgs = [with_seed(ExperimentConfig.load(p), args.seed) for p in args.config]
            names = [Path(p).stem for p in args.config]
            out = Path(args.out or cfgs[0].output.dir)
            cmd_compare(cfgs, names, out, args.override_stepsize, [Path(p).parent for p in args.config])
            print(f"wrote {out}/compare.csv")
        else:
            if args.schedule:
                sched = Schedule.load(args.schedule)
                out = Path(args.out or Path(args.schedule).parent)
                B = D = None
            else:
                cfg = with_seed(ExperimentConfig.load(args.config), args.seed)
                exp = build(cfg, args.override_stepsize, Path(args.config).parent)
                out = Path(args.out or cfg.output.dir)
                if cfg.mode == "runtime":
                    sched = execute(exp)[0].schedule
                    B = D = None
                else:
                    sched = make_schedule(exp)
                    B = None if cfg.schedule.B < 0 else cfg.schedule.B
                    D = cfg.schedule.D if B is not None else None
            summary = cmd_delays(sched, out, args.bucket_width, B, D)
            print("".join(f"{k}={v}\n" for k, v in summary.items()), end="")
    except AsyncDGDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
