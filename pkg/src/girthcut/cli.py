"""Command-line front end: solve, simulate, oracle, sweep, calibrate.

Reports and CSV files are deterministic byte-for-byte for identical
invocations (all randomness flows from --seed); wall-clock timings go to
stderr so stdout stays reproducible.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from . import mc_sim, rng
from .numerics import PrecisionContext
from .oracle import compare, exact_small_k
from .recurrence import (
    CalibrationError,
    DerivedBounds,
    StateVector,
    init_round,
    phase_calibration,
    solve,
    step,
    trajectory_row,
    write_trajectory_header,
)
from .schedule import (
    PAPER_DEFAULTS,
    PaperParams,
    Schedule,
    ScheduleFormatError,
    _format_value,
    _parse_value,
    build_paper_schedule,
    load_schedule,
)

SIM_CSV_HEADER = ("seed,n,red_blue_edges,final_cut_size,"
                  "per_edge_fraction,per_vertex_fraction,white_residual")


@dataclass(frozen=True)
class RunReport:
    schedule_summary: str
    precision: int
    p: str
    err_p: float
    r: str
    err_r: float
    b: str
    err_b: float
    w: str
    err_w: float
    bounds: DerivedBounds | None
    wall_time: float

    def render(self) -> str:
        lines = [
            f"schedule: {self.schedule_summary}",
            f"precision: {self.precision} bits",
            f"p_K = {self.p} (err <= {self.err_p:.6e})",
            f"r_K = {self.r} (err <= {self.err_r:.6e})",
            f"b_K = {self.b} (err <= {self.err_b:.6e})",
            f"w_K = {self.w} (err <= {self.err_w:.6e})",
        ]
        if self.bounds is None:
            lines.append("derived bounds: unavailable (p_K not certified positive)")
        else:
            d = self.bounds
            lines += [
                f"certified_per_edge >= {d.per_edge_prob!r}",
                f"cut_per_vertex >= {d.cut_per_vertex!r}",
                f"frac_cover <= {d.frac_cover!r}",
                f"required_girth = {d.required_girth}",
            ]
        return "\n".join(lines) + "\n"


def _schedule_summary(s: Schedule) -> str:
    base = f"K={s.K}, segments={len(s.segments)}"
    if s.params is not None:
        p = s.params
        base += (f", p0={_format_value(p.p0)}, pR={_format_value(p.pR)}, "
                 f"pB={_format_value(p.pB)}, pRB={_format_value(p.pRB)}, "
                 f"K1={p.K1}, K2={p.K2}")
    return base


def _load_schedule_arg(parser: argparse.ArgumentParser, args) -> Schedule:
    if args.paper_defaults:
        return build_paper_schedule(PAPER_DEFAULTS)
    if not args.schedule:
        parser.error("either --schedule PATH or --paper-defaults is required")
    try:
        with open(args.schedule, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as ex:
        parser.error(f"cannot read schedule file {args.schedule!r}: {ex}")
    try:
        return load_schedule(text)
    except ScheduleFormatError as ex:
        parser.error(f"bad schedule file {args.schedule!r}: {ex}")


def _add_schedule_flags(p: argparse.ArgumentParser):
    p.add_argument("--schedule", metavar="PATH", help="schedule file")
    p.add_argument("--paper-defaults", action="store_true",
                   help="use the built-in reference parameterization")


def _report(final: StateVector, bounds, precision: int, summary: str,
            wall: float, digits: int) -> RunReport:
    return RunReport(
        schedule_summary=summary, precision=precision,
        p=final.p.format(digits), err_p=final.p.err,
        r=final.r.format(digits), err_r=final.r.err,
        b=final.b.format(digits), err_b=final.b.err,
        w=final.w.format(digits), err_w=final.w.err,
        bounds=bounds, wall_time=wall,
    )


def cmd_solve(parser, args) -> int:
    s = _load_schedule_arg(parser, args)
    ctx = PrecisionContext(args.precision)
    traj = None
    if args.trajectory:
        traj = open(args.trajectory, "w", encoding="utf-8")
        write_trajectory_header(traj)
    sink = None
    if traj is not None:
        sink = lambda st: traj.write(trajectory_row(st, args.digits))
    t0 = time.perf_counter()
    try:
        final, bounds = solve(s, ctx, sink=sink, every=args.every)
    finally:
        if traj is not None:
            traj.close()
    wall = time.perf_counter() - t0
    rep = _report(final, bounds, args.precision, _schedule_summary(s),
                  wall, args.digits)
    text = rep.render()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    print(f"solved in {wall:.1f}s", file=sys.stderr)
    return 0


def cmd_simulate(parser, args) -> int:
    s = _load_schedule_arg(parser, args)
    if args.n % 2 or args.n < 4:
        parser.error(f"--n must be even and >= 4, got {args.n}")
    if args.samples < 1:
        parser.error("--samples must be positive")
    t0 = time.perf_counter()
    rows, summary = mc_sim.estimate(s, args.n, args.samples, args.seed,
                                    policy=args.policy, mode=args.mode,
                                    workers=args.workers)
    lines = [SIM_CSV_HEADER]
    for r in rows:
        lines.append(f"{r.seed},{r.n},{r.red_blue_edges},{r.final_cut_size},"
                     f"{r.per_edge_fraction!r},{r.per_vertex_fraction!r},"
                     f"{r.white_residual}")
    csv_text = "\n".join(lines) + "\n"

    out = []
    out.append(f"# samples={summary.samples} n={summary.n}")
    out.append(f"# per_edge_fraction: mean={summary.mean_per_edge!r} "
               f"std={summary.std_per_edge!r} ci99={summary.ci99_per_edge!r}"
               + ("" if summary.ci_defined else "  [CI undefined: one sample]"))
    out.append(f"# per_vertex_fraction: mean={summary.mean_per_vertex!r} "
               f"std={summary.std_per_vertex!r} ci99={summary.ci99_per_vertex!r}")
    out.append(f"# color fractions: white={summary.mean_white!r} "
               f"red={summary.mean_red!r} blue={summary.mean_blue!r}")
    if args.girth_report:
        g = mc_sim.gen_cubic(args.n, rng.derive_seed(args.seed, 0))
        hist = mc_sim.count_short_cycles(g, args.girth_report)
        out.append("# short cycles (first sample graph): "
                   + " ".join(f"len{l}={c}" for l, c in sorted(hist.items())))
    summary_text = "\n".join(out) + "\n"

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        sys.stdout.write(summary_text)
    else:
        sys.stdout.write(csv_text)
        sys.stdout.write(summary_text)
    print(f"simulated in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 0


def cmd_oracle(parser, args) -> int:
    s = _load_schedule_arg(parser, args)
    if args.k not in (1, 2):
        parser.error(f"--k must be 1 or 2, got {args.k}")
    if args.k == 2 and s.K < 2:
        parser.error("schedule has a single round; --k 2 needs at least two")
    ctx = PrecisionContext(args.precision)
    st = init_round(s, ctx)
    if args.k == 2:
        st = step(st, s.segment_at(2).rule, ctx)
    ora = exact_small_k(s, args.k)
    cmpres = compare(ora, st)
    print(f"oracle comparison at k={args.k} "
          f"(budget = solver err + 1e-12 per field)")
    print(f"{'field':>6} {'deviation':>14} {'budget':>14}  verdict")
    for name in cmpres.deviations:
        ok = cmpres.flags[name]
        print(f"{name:>6} {cmpres.deviations[name]:>14.6e} "
              f"{cmpres.budgets[name]:>14.6e}  {'PASS' if ok else 'FAIL'}")
    print(f"max deviation: {cmpres.max_deviation:.6e} -> "
          f"{'PASS' if cmpres.all_ok else 'FAIL'}")
    return 0 if cmpres.all_ok else 1


def _sweep_point(task):
    (bits, p0, pR, pB, pRB, K1, K2, theta1, theta2, k_max) = task
    ctx = PrecisionContext(bits)
    if K1 is None:
        cal = phase_calibration(p0, pR, pB, pRB, theta1, theta2, k_max, ctx)
        K1, K2 = cal.K1, cal.K2
    params = PaperParams(p0=p0, pR=pR, pB=pB, pRB=pRB, K1=K1, K2=K2)
    final, bounds = solve(build_paper_schedule(params), ctx)
    return (float(final.p), p0, pR, pB, pRB, K1, K2,
            final.p.format(20), final.p.err, final.r.format(20),
            final.b.format(20), final.w.format(20))


def cmd_sweep(parser, args) -> int:
    vals = {}
    for name in ("p0", "pR", "pRB"):
        raw = getattr(args, name)
        if not raw:
            parser.error(f"--{name} must list at least one value")
        try:
            vals[name] = [_parse_value(x, 0) for x in raw.split(",") if x.strip()]
        except ScheduleFormatError as ex:
            parser.error(f"--{name}: {ex}")
        if not vals[name]:
            parser.error(f"--{name} must list at least one value")
    try:
        pB = _parse_value(args.pB, 0)
    except ScheduleFormatError as ex:
        parser.error(f"--pB: {ex}")
    grid = list(itertools.product(vals["p0"], vals["pR"], vals["pRB"]))
    if len(grid) > args.max_runs:
        parser.error(f"grid has {len(grid)} points, over the --max-runs cap "
                     f"of {args.max_runs}")
    fixed = args.K1 is not None and args.K2 is not None
    if not fixed and (args.K1 is not None or args.K2 is not None):
        parser.error("--K1 and --K2 must be given together")
    tasks = [(args.precision, p0, pR, pB, pRB,
              args.K1 if fixed else None, args.K2 if fixed else None,
              args.theta1, args.theta2, args.k_max)
             for (p0, pR, pRB) in grid]
    t0 = time.perf_counter()
    nw = min(mc_sim.worker_count(args.workers), len(tasks))
    if nw > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    results.sort(key=lambda r: -r[0])
    lines = ["p0,pR,pB,pRB,K1,K2,p_K,err_p,r_K,b_K,w_K"]
    for (_, p0, pR, pB_, pRB, K1, K2, pK, errp, rK, bK, wK) in results:
        lines.append(f"{_format_value(p0)},{_format_value(pR)},"
                     f"{_format_value(pB_)},{_format_value(pRB)},"
                     f"{K1},{K2},{pK},{errp:.6e},{rK},{bK},{wK}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    print(f"swept {len(tasks)} points in {time.perf_counter() - t0:.1f}s",
          file=sys.stderr)
    return 0


def cmd_calibrate(parser, args) -> int:
    if args.paper_defaults:
        p0, pR, pB, pRB = (PAPER_DEFAULTS.p0, PAPER_DEFAULTS.pR,
                           PAPER_DEFAULTS.pB, PAPER_DEFAULTS.pRB)
    else:
        missing = [f for f in ("p0", "pR", "pB", "pRB")
                   if getattr(args, f) is None]
        if missing:
            parser.error("give --paper-defaults or all of --p0 --pR --pB --pRB")
        try:
            p0 = _parse_value(args.p0, 0)
            pR = _parse_value(args.pR, 0)
            pB = _parse_value(args.pB, 0)
            pRB = _parse_value(args.pRB, 0)
        except ScheduleFormatError as ex:
            parser.error(str(ex))
    ctx = PrecisionContext(args.precision)
    t0 = time.perf_counter()
    try:
        cal = phase_calibration(p0, pR, pB, pRB, args.theta1, args.theta2,
                                args.k_max, ctx)
    except CalibrationError as ex:
        print(f"calibration failed: {ex}", file=sys.stderr)
        return 1
    print(f"K1 = {cal.K1}  (unconditional reading: vertex is white with "
          f"exactly one colored neighbor, threshold {cal.theta1:g})")
    if cal.K1_conditional is not None:
        print(f"K1 = {cal.K1_conditional}  (conditional reading: same "
              f"quantity divided by the white probability)")
    else:
        print("K1 (conditional reading): threshold not reached before the "
              "unconditional search ended")
    print(f"K2 = {cal.K2}  (white probability below {cal.theta2:g})")
    print(f"phase-one boundary value: {cal.boundary_value:.6e}")
    print(f"final white probability: {cal.final_white:.6e}")
    print(f"calibrated in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="girthcut",
        description="Certified recurrence solver and Monte-Carlo harness for "
                    "the randomized red/blue/white edge-cut procedure on "
                    "cubic graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the recurrences with tracked error")
    _add_schedule_flags(p)
    p.add_argument("--precision", type=int, default=256, metavar="BITS")
    p.add_argument("--trajectory", metavar="PATH", help="write trajectory CSV")
    p.add_argument("--every", type=int, default=100, metavar="N")
    p.add_argument("--digits", type=int, default=20)
    p.add_argument("--out", metavar="PATH", help="also write the report here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte-Carlo runs on random cubic graphs")
    _add_schedule_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--policy", choices=("greedy", "all-blue"), default="greedy")
    p.add_argument("--mode", choices=("auto", "naive", "event"), default="auto")
    p.add_argument("--girth-report", type=int, metavar="LMAX")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", metavar="PATH", help="write the per-sample CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="compare solver against exact enumeration")
    _add_schedule_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--precision", type=int, default=256, metavar="BITS")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="grid of solves over (p0, pR, pRB)")
    p.add_argument("--p0", metavar="LIST", help="comma-separated values")
    p.add_argument("--pR", metavar="LIST")
    p.add_argument("--pRB", metavar="LIST")
    p.add_argument("--pB", default="1")
    p.add_argument("--K1", type=int)
    p.add_argument("--K2", type=int)
    p.add_argument("--theta1", type=float, default=1e-7)
    p.add_argument("--theta2", type=float, default=1e-7)
    p.add_argument("--k-max", type=int, default=2_000_000)
    p.add_argument("--precision", type=int, default=128, metavar="BITS")
    p.add_argument("--max-runs", type=int, default=64)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="find phase lengths for thresholds")
    p.add_argument("--paper-defaults", action="store_true",
                   help="use the reference probabilities")
    p.add_argument("--p0")
    p.add_argument("--pR")
    p.add_argument("--pB")
    p.add_argument("--pRB")
    p.add_argument("--theta1", type=float, default=1e-7)
    p.add_argument("--theta2", type=float, default=1e-7)
    p.add_argument("--k-max", type=int, default=2_000_000)
    p.add_argument("--precision", type=int, default=256, metavar="BITS")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(parser, args)


if __name__ == "__main__":
    sys.exit(main())
