"""Command-line front end.

`uqgroup run` executes one grouped adaptive-refinement study and writes
r_table.csv, manifest.json and iterations_by_level.csv into --out-dir;
`uqgroup table` pretty-prints a previously written manifest.  Exit codes:
0 when the run stopped on tolerance, 2 when it exhausted the sample budget,
1 on any error (bad flags included).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from .harness import (
    ANALYTIC_PROBLEMS,
    PDE_PROBLEMS,
    RunConfig,
    adaptive_run,
    config_from_dict,
    emit_reports,
    parse_manifest,
    preset_config,
    read_base_curve,
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="uqgroup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one adaptive grouping study")
    run_p.add_argument("--config", type=Path, help="JSON run configuration")
    run_p.add_argument(
        "--problem",
        choices=ANALYTIC_PROBLEMS + PDE_PROBLEMS,
        help="named preset, used when --config is not given",
    )
    run_p.add_argument("--out-dir", type=Path, required=True)
    run_p.add_argument("--strategies", help="comma list drawn from nat,par,sur,its")
    run_p.add_argument("--S", type=int, help="ensemble width")
    run_p.add_argument("--tau", type=float, help="refinement tolerance")
    run_p.add_argument("--n-max", type=int, help="total sample budget")
    run_p.add_argument("--initial-level", type=int)
    run_p.add_argument("--mesh-cells", type=int)
    run_p.add_argument("--tol", type=float, help="linear solver relative tolerance")
    run_p.add_argument("--maxit", type=int, help="linear solver iteration cap")
    run_p.add_argument(
        "--base-curve", type=Path,
        help="CSV of measured perfect-grouping speed-ups, columns S,speedup",
    )
    run_p.add_argument(
        "--dump-residuals", action="store_true",
        help="write per-ensemble lane residual histories next to the run outputs",
    )

    table_p = sub.add_parser("table", help="print the table for an existing run")
    table_p.add_argument("--out-dir", type=Path, required=True)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        import json

        config = config_from_dict(json.loads(args.config.read_text()))
    elif args.problem is not None:
        config = preset_config(args.problem)
    else:
        raise ValueError("give either --config or --problem")

    updates: dict = {}
    if args.S is not None:
        updates["ensemble_size"] = args.S
    if args.strategies is not None:
        updates["strategies"] = tuple(
            s.strip() for s in args.strategies.split(",") if s.strip()
        )
    if args.tau is not None:
        updates["tau"] = args.tau
    if args.n_max is not None:
        updates["n_max"] = args.n_max
    if args.initial_level is not None:
        updates["initial_level"] = args.initial_level
    if args.mesh_cells is not None:
        if config.mesh is None:
            raise ValueError("--mesh-cells applies only to PDE problems")
        updates["mesh"] = dataclasses.replace(config.mesh, mesh_cells=args.mesh_cells)
    if args.tol is not None or args.maxit is not None:
        solver = config.solver
        if args.tol is not None:
            solver = dataclasses.replace(solver, tol=args.tol)
        if args.maxit is not None:
            solver = dataclasses.replace(solver, maxit=args.maxit)
        updates["solver"] = solver
    if args.base_curve is not None:
        updates["base_curve"] = read_base_curve(args.base_curve)
    if args.dump_residuals:
        updates["dump_residuals"] = True
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    sink = None
    if config.dump_residuals:
        def sink(level: int, ensemble: int, history) -> None:
            path = out_dir / f"residuals_level{level}_ens{ensemble}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(
                    ["iteration"] + [f"lane{s}" for s in range(config.ensemble_size)]
                )
                for it, norms in enumerate(history):
                    writer.writerow([it] + [repr(float(v)) for v in norms])

    report = adaptive_run(config, residual_sink=sink)
    emit_reports(report, out_dir)

    print(f"problem={config.problem} S={config.ensemble_size} "
          f"levels={len(report.levels)} samples={report.n_samples_total} "
          f"stop={report.stop_reason}")
    for strat in config.strategies:
        line = f"  R({strat}) = {report.work_ratios[strat]:.4f}"
        if report.predicted_speedups is not None:
            line += f"  predicted speed-up = {report.predicted_speedups[strat]:.3f}"
        print(line)
    for note in report.notes:
        print(f"  note: {note}")
    return 0 if report.stop_reason == "tolerance_met" else 2


def _cmd_table(args: argparse.Namespace) -> int:
    manifest = args.out_dir / "manifest.json"
    reports = parse_manifest(manifest)
    for report in reports:
        cfg = report.config
        strategies = list(cfg["strategies"])
        print(f"problem={cfg['problem']} S={cfg['S']} stop={report.stop_reason} "
              f"samples={report.n_samples_total}")
        if strategies:
            header = "  level  n_samples" + "".join(f"  R({s:>3})" for s in strategies)
            print(header)
            for lv in report.levels:
                by_strat = {p.strategy: p for p in lv.plans}
                n = len(lv.samples)
                cells = "".join(
                    f"  {by_strat[s].work_ratio:6.3f}" if s in by_strat else "       -"
                    for s in strategies
                )
                print(f"  {lv.level:5d}  {n:9d}{cells}")
            total = "".join(f"  {report.work_ratios[s]:6.3f}" for s in strategies)
            print(f"  total           {total}")
            if report.predicted_speedups is not None:
                pred = "".join(
                    f"  {report.predicted_speedups[s]:6.3f}" for s in strategies
                )
                print(f"  speed-up        {pred}")
        print()
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_table(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary, every failure is exit 1
        print(f"uqgroup: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
