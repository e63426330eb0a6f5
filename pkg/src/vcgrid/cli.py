"""Command-line front end: ``vcgrid run | sweep | analyze``.

Exit codes: 0 success, 2 configuration error, 3 attempt-cap abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analytics
from .config import ConfigError, RunConfig, load_config
from .scheduler import AttemptCapExceeded
from .sim import RunReport, run
from .vcasgd import AlphaPolicy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

RUN_COLUMNS = ["epoch", "wall_clock_s", "avg_metric", "min_metric", "max_metric",
               "reschedules", "lost_updates", "assimilations"]
SWEEP_COLUMNS = ["param", "value", "trial", "seed", "training_time_s", "final_metric",
                 "epochs", "reschedules", "lost_updates", "peak_queue"]
SWEEP_SUMMARY_COLUMNS = ["param", "value", "trials", "mean_training_time_s", "std_training_time_s",
                         "mean_final_metric", "std_final_metric"]
SWEEP_PARAMS = {
    "alpha": ("job", "alpha"),
    "pn": ("cluster", "n_param_servers"),
    "cn": ("cluster", "n_clients"),
    "tn": ("cluster", "max_tasks_per_client"),
}


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get("VCGRID_OUT_DIR") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _simulate(cfg: RunConfig, seed: int) -> RunReport:
    job, cluster = cfg.build(seed)
    return run(job, cluster, train=bool(cfg.get("job", "train")))


def _summary_lines(report: RunReport, cfg: RunConfig, seed: int) -> list[str]:
    cmp = analytics.cost_compare(analytics.CostInput(
        analytics.hours(report.training_time_s),
        cfg.get("cost", "rate_standard"),
        cfg.get("cost", "rate_preemptible"),
    ))
    lines = [
        f"seed = {seed}",
        f"epochs = {len(report.rows)}",
        f"stopped_by = {report.stopped_by}",
        f"training_time_s = {fmt(report.training_time_s)}",
        f"training_time_h = {fmt(analytics.hours(report.training_time_s))}",
        f"final_metric = {fmt(report.final_metric)}",
        f"total_subtask_attempts = {report.total_subtask_attempts}",
        f"completed_pairs = {report.completed_pairs}",
        f"reschedules = {report.reschedules}",
        f"lost_updates = {report.lost_updates}",
        f"discarded_results = {report.discarded_results}",
        f"peak_result_queue = {report.peak_queue}",
        f"cost_usd_standard = {fmt(report.cost_usd_standard)}",
        f"cost_usd_preemptible = {fmt(report.cost_usd_preemptible)}",
        f"saving_fraction = {fmt(cmp.saving_fraction)}",
    ]
    return lines


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out = _out_dir(args.out)
    report = _simulate(cfg, seed)
    _write_csv(out / "run.csv", RUN_COLUMNS,
               ([getattr(r, c) for c in RUN_COLUMNS] for r in report.rows))
    (out / "summary.txt").write_text("\n".join(_summary_lines(report, cfg, seed)) + "\n")
    print(f"{len(report.rows)} epochs, {fmt(analytics.hours(report.training_time_s))} h simulated, "
          f"final metric {fmt(report.final_metric)} -> {out / 'run.csv'}")
    return EXIT_OK


def _parse_sweep_values(param: str, text: str) -> list[tuple[str, object]]:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError("--values: empty list")
    parsed = []
    for item in items:
        try:
            value = AlphaPolicy.parse(item) if param == "alpha" else int(item)
        except ValueError as exc:
            raise ConfigError(f"--values: {item!r}: {exc}") from None
        parsed.append((item, value))
    return parsed


def _sweep_trial(job: tuple[RunConfig, int]) -> RunReport:
    cfg, seed = job
    return _simulate(cfg, seed)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"--param: unknown parameter {args.param!r}")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    section, key = SWEEP_PARAMS[args.param]
    values = _parse_sweep_values(args.param, args.values)
    out = _out_dir(args.out)

    plan = []
    for label, value in values:
        variant = cfg.with_value(section, key, value)
        variant.build(cfg.seed)  # validate before spending time on any trial
        for trial in range(args.trials):
            plan.append((label, trial, variant, cfg.seed + trial))

    work = [(variant, seed) for _, _, variant, seed in plan]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_sweep_trial, work))
    else:
        reports = [_sweep_trial(w) for w in work]

    rows = []
    groups: dict[str, list[RunReport]] = {}
    for (label, trial, _, seed), rep in zip(plan, reports):
        rows.append([args.param, label, trial, seed, rep.training_time_s, rep.final_metric,
                     len(rep.rows), rep.reschedules, rep.lost_updates, rep.peak_queue])
        groups.setdefault(label, []).append(rep)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)

    summary = []
    for label, reps in groups.items():
        times = [r.training_time_s for r in reps]
        metrics = [r.final_metric for r in reps]
        sd = statistics.stdev if len(reps) > 1 else (lambda xs: 0.0)
        summary.append([args.param, label, len(reps), statistics.fmean(times), sd(times),
                        statistics.fmean(metrics), sd(metrics)])
        print(f"{args.param}={label}: time {fmt(statistics.fmean(times) / 3600)} h, "
              f"metric {fmt(statistics.fmean(metrics))}")
    _write_csv(out / "sweep_summary.csv", SWEEP_SUMMARY_COLUMNS, summary)
    return EXIT_OK


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"analyze --model {args.model}: missing required flag(s) {flags}")


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.model == "timeout":
        _require(args, "n_s", "n_c", "n_tc", "p", "t_e", "t_o")
        try:
            est = analytics.expected_times(analytics.TimeoutModelInput(
                args.n_s, args.n_c, args.n_tc, args.p, args.t_e, args.t_o))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        header = ["n", "expected_total_min", "expected_extra_min"]
        row = [est.n, est.expected_total_min, est.expected_extra_min]
        print(f"n = {fmt(est.n)}")
        print(f"total = {fmt(est.expected_total_min)} min")
        print(f"extra = {fmt(est.expected_extra_min)} min")
    elif args.model == "cost":
        _require(args, "hours")
        try:
            cmp = analytics.cost_compare(analytics.CostInput(args.hours, args.rate_standard,
                                                             args.rate_preemptible))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        header = ["cost_standard_usd", "cost_preemptible_usd", "saving_fraction"]
        row = [cmp.cost_standard, cmp.cost_preemptible, cmp.saving_fraction]
        print(f"standard = ${cmp.cost_standard:.2f}")
        print(f"preemptible = ${cmp.cost_preemptible:.2f}")
        print(f"{cmp.cost_standard:.2f} vs {cmp.cost_preemptible:.2f}, "
              f"saving {100 * cmp.saving_fraction:.2f}%")
    else:
        _require(args, "updates")
        try:
            overhead = analytics.store_overhead(args.updates, args.lat_strong, args.lat_eventual)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        header = ["overhead_s", "overhead_min", "overhead_h"]
        row = [overhead, analytics.minutes(overhead), analytics.hours(overhead)]
        print(f"overhead = {fmt(overhead)} s ({fmt(analytics.minutes(overhead))} min, "
              f"{fmt(analytics.hours(overhead))} h)")
    if args.csv:
        _write_csv(Path(args.csv), header, [row])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcgrid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one training job")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory (default: $VCGRID_OUT_DIR or .)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a job over parameter values and seeds")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="alpha, pn, cn or tn")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 0.7,0.95,schedule")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="closed-form timeout, cost or store-latency estimates")
    p.add_argument("--model", required=True, choices=["timeout", "cost", "store"])
    p.add_argument("--n-s", type=float)
    p.add_argument("--n-c", type=int)
    p.add_argument("--n-tc", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--t-e", type=float, help="minutes")
    p.add_argument("--t-o", type=float, help="minutes")
    p.add_argument("--hours", type=float)
    p.add_argument("--rate-standard", type=float, default=analytics.REFERENCE["rate_standard_usd_h"])
    p.add_argument("--rate-preemptible", type=float, default=analytics.REFERENCE["rate_preemptible_usd_h"])
    p.add_argument("--updates", type=int)
    p.add_argument("--lat-strong", type=float, default=analytics.REFERENCE["latency_strong_s"])
    p.add_argument("--lat-eventual", type=float, default=analytics.REFERENCE["latency_eventual_s"])
    p.add_argument("--csv", default=None, help="also write the result row to this CSV file")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AttemptCapExceeded as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
