"""Command line: single runs, variant comparisons, timing benchmarks.

Exit codes: 0 success, 2 unreadable or invalid scenario input, 3 failure
inside the simulation itself.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .plots import trace_plots
from .scenario import ScenarioError, load_scenario
from .sim import (VARIANTS, ScenarioRuntime, bench_cycle, run_batch,
                  run_single)

TRACE_COLUMNS = ("t", "s", "v", "a", "active_limit", "risk_ahead")

TABLE1_COLUMNS = ("scenario", "variant", "collision_rate", "discomfort",
                  "traversal_time", "freeze_rate", "goal_rate", "n_runs")

TABLE2_COLUMNS = ("scenario", "variant", "obstacle_factor", "iterations",
                  "mean_ms", "median_ms", "p99_ms",
                  "mean_ms_no_visibility", "median_ms_no_visibility")


def _g(x) -> str:
    return format(float(x), ".9g")


def write_trace(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([_g(r[0]), _g(r[1]), _g(r[2]), _g(r[3]),
                        "" if r[4] is None else _g(r[4]), _g(r[5])])


def read_trace(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "t": float(rec["t"]), "s": float(rec["s"]),
                "v": float(rec["v"]), "a": float(rec["a"]),
                "active_limit": (float(rec["active_limit"])
                                 if rec["active_limit"] else None),
                "risk_ahead": float(rec["risk_ahead"]),
            })
    return rows


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], str)
                        else format(row[c], ".6g") for c in columns])


def _print_table(columns, rows) -> None:
    cells = [[c for c in columns]]
    for row in rows:
        cells.append([row[c] if isinstance(row[c], str)
                      else format(row[c], ".4g") for c in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    for r in cells:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())


def cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    seed = config.params.seed if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics, trace = run_single(config, args.variant, seed)
    trace_path = out / "trace.csv"
    write_trace(trace_path, trace)
    # plots are rebuilt from the CSV, proving it carries everything needed
    rows = read_trace(trace_path)
    for name, svg in trace_plots(rows, config.params.a_th).items():
        (out / name).write_text(svg)
    _write_csv(out / "metrics.csv",
               ("scenario", "variant", "seed", "collided", "discomfort",
                "traversal_time", "froze", "goal_reached",
                "mean_cycle_time", "p99_cycle_time"),
               [{"scenario": config.name, "variant": args.variant,
                 "seed": float(seed),
                 "collided": str(metrics.collided),
                 "discomfort": metrics.discomfort,
                 "traversal_time": metrics.traversal_time,
                 "froze": str(metrics.froze),
                 "goal_reached": str(metrics.goal_reached),
                 "mean_cycle_time": metrics.mean_cycle_time,
                 "p99_cycle_time": metrics.p99_cycle_time}])
    print(f"{config.name} {args.variant} seed={seed}: "
          f"collided={metrics.collided} froze={metrics.froze} "
          f"goal={metrics.goal_reached} "
          f"traversal={metrics.traversal_time:.2f}s "
          f"discomfort={metrics.discomfort:.4f} "
          f"cycle={metrics.mean_cycle_time:.3f}ms")
    print(f"wrote {trace_path} and plots to {out}/")
    return 0


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table1 = []
    table2 = []
    for path in args.scenario:
        config = load_scenario(path)
        seed = config.params.seed if args.seed is None else args.seed
        runtime = ScenarioRuntime(config)
        for variant in VARIANTS:
            _, agg = run_batch(config, variant, args.runs, seed,
                               runtime=runtime)
            table1.append({
                "scenario": config.name, "variant": variant,
                "collision_rate": agg.collision_rate,
                "discomfort": agg.discomfort,
                "traversal_time": agg.traversal_time,
                "freeze_rate": agg.freeze_rate,
                "goal_rate": agg.goal_rate, "n_runs": agg.n_runs})
            table2.append({
                "scenario": config.name, "variant": variant,
                "obstacle_factor": 1, "iterations": agg.n_runs,
                "mean_ms": agg.mean_cycle_ms, "median_ms": float("nan"),
                "p99_ms": agg.p99_cycle_ms,
                "mean_ms_no_visibility": float("nan"),
                "median_ms_no_visibility": float("nan")})
    _write_csv(out / "table1.csv", TABLE1_COLUMNS, table1)
    _write_csv(out / "table2.csv", TABLE2_COLUMNS, table2)
    _print_table(TABLE1_COLUMNS, table1)
    print(f"wrote {out}/table1.csv and {out}/table2.csv")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in args.scenario:
        config = load_scenario(path)
        for factor in (1, 2, 4):
            res = bench_cycle(config, args.iterations,
                              obstacle_factor=factor)
            rows.append({
                "scenario": config.name, "variant": "proposed",
                "obstacle_factor": factor,
                "iterations": res["iterations"],
                "mean_ms": res["mean_ms"],
                "median_ms": res["median_ms"],
                "p99_ms": res["p99_ms"],
                "mean_ms_no_visibility": res["mean_ms_no_visibility"],
                "median_ms_no_visibility":
                    res["median_ms_no_visibility"]})
    _write_csv(out / "table2.csv", TABLE2_COLUMNS, rows)
    _print_table(TABLE2_COLUMNS, rows)
    print(f"wrote {out}/table2.csv")
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occlusim",
        description="occlusion-aware risk assessment scenario driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one seeded run")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--variant", choices=VARIANTS, default="proposed")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser(
        "compare", help="batch all variants over scenarios")
    p_cmp.add_argument("--scenario", required=True, nargs="+")
    p_cmp.add_argument("--runs", type=_positive_int, default=100)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--out", default="out")
    p_cmp.set_defaults(fn=cmd_compare)

    p_bench = sub.add_parser(
        "bench", help="time the risk-assessment cycle")
    p_bench.add_argument("--scenario", required=True, nargs="+")
    p_bench.add_argument("--iterations", type=int, default=200)
    p_bench.add_argument("--out", default="out")
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and args.iterations < 100:
        parser.error("--iterations must be at least 100")
    try:
        return args.fn(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
