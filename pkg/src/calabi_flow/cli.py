"""Command-line front end.

Exit codes: 0 when every executed check passed, 1 on a failed check or a
run ending in breakdown, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .experiments import EXPERIMENTS, ExperimentResult, guard_checks
from .flow import CalabiFlow, FlowStatus
from .formats import SnapshotFormatError, SnapshotHeader, format_value, write_csv, write_snapshot

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file")
    common.add_argument("--output", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--quiet", action="store_true", help="only print the final verdict")
    common.add_argument("--seed", type=int, help="seed for generated corpora (overrides [output] seed)")

    parser = _Parser(prog="calabi-flow", description="Calabi flow on flat complex tori.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    sub.add_parser("run", parents=[common], help="run the flow and write diagnostics")
    sub.add_parser("verify", parents=[common], help="identity and round-trip self-checks")
    sub.add_parser("spectrum", parents=[common], help="linear decay rates against the symbol")
    sub.add_parser("stability", parents=[common], help="convergence to the flat metric")
    sub.add_parser("smoothing", parents=[common], help="smoothing constant under refinement")
    sub.add_parser("contraction", parents=[common], help="Picard ratios along a step ladder")
    sub.add_parser("monitor", parents=[common], help="metric bounds and curvature on a surface")
    return parser


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, flush=True)


def _load(args, required: bool) -> RunConfig:
    if args.config is None:
        if required:
            raise ConfigError(f"'{args.command}' needs --config PATH")
        cfg = RunConfig()
    else:
        cfg = parse_config(args.config)
    if args.output is not None:
        cfg.output_dir = args.output
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    return cfg


def _check_threads() -> None:
    value = os.environ.get("CALABI_THREADS")
    if value is None or value == "":
        return
    try:
        ok = int(value) >= 1
    except ValueError:
        ok = False
    if not ok:
        raise ConfigError(f"CALABI_THREADS must be a positive integer, got {value!r}")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cell(v) -> str:
    if isinstance(v, tuple):
        return " ".join(_cell(x) for x in v)
    if isinstance(v, str):
        return v
    return format_value(v)


def _write_table(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _write_result(out: Path, res: ExperimentResult) -> None:
    if res.table is not None:
        _write_table(out / f"{res.name}_results.csv", *res.table)
    if res.rows:
        write_csv(out / f"{res.name}_diagnostics.csv", res.rows)
    lines = [f"verdict: {'PASS' if res.passed else 'FAIL'}", f"wall_clock: {res.wall_clock!r}"]
    if res.status:
        lines.append(f"status: {res.status}")
    lines += [f"measured.{k}: {v!r}" for k, v in res.measured.items()]
    lines += [f"tolerance.{k}: {v!r}" for k, v in res.tolerances.items()]
    lines += [f"failure: {f}" for f in res.failures]
    (out / f"{res.name}_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _snapshot(out: Path, cfg: RunConfig, state, tag: str) -> None:
    header = SnapshotHeader(cfg.n, cfg.N, cfg.L, state.t, "phi")
    write_snapshot(out / f"phi_{tag}.cgrd", state.phi, header)


def cmd_run(args, cfg: RunConfig) -> int:
    engine = CalabiFlow(cfg.reference(), cfg.controls())
    phi0 = cfg.initial_potential()
    out = _outdir(cfg)

    def progress(state):
        if state.last_report is not None and state.last_report.accepted:
            if cfg.snapshot_every and state.step_index % cfg.snapshot_every == 0:
                _snapshot(out, cfg, state, f"{state.step_index:06d}")
            if state.step_index % 10 == 0:
                d = state.last_diag
                _say(args, f"step {state.step_index:6d}  t={d.t:.6g}  tau={d.tau:.3g}  Ca={d.calabi_energy:.6e}  max|R|={d.max_abs_R:.3e}")

    traj, rows = engine.run(phi0, snapshot_every=0, callback=progress)
    _snapshot(out, cfg, traj[0], "initial")
    final = traj[-1]
    _snapshot(out, cfg, final, "final")
    if rows:
        write_csv(out / "diagnostics.csv", rows)
    ok = final.status is FlowStatus.CONVERGED or (final.status is FlowStatus.RUNNING and final.t >= cfg.t_end)
    print(f"{'PASS' if ok else 'FAIL'} run: status={final.status.value} t={final.t:.6g} steps={final.step_index} -> {out}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args, cfg: RunConfig) -> int:
    from .verify import run_suite

    checks = run_suite(cfg.seed, report=lambda line: _say(args, line))
    res = guard_checks(cfg)
    _say(args, res.summary())
    ok = all(c.passed for c in checks) and res.passed
    if args.output is not None or args.config is not None:
        out = _outdir(cfg)
        rows = [(c.name, c.value, c.tolerance, int(c.passed), c.seconds) for c in checks]
        rows.append(("guard", float(len(res.failures)), 0.0, int(res.passed), res.wall_clock))
        _write_table(out / "verify.csv", ("check", "value", "tolerance", "passed", "seconds"), rows)
    n_fail = sum(not c.passed for c in checks) + (not res.passed)
    print(f"{'PASS' if ok else 'FAIL'} verify: {len(checks) + 1 - n_fail}/{len(checks) + 1} checks passed")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_experiment(args, cfg: RunConfig) -> int:
    res = EXPERIMENTS[args.command](cfg)
    out = _outdir(cfg)
    _write_result(out, res)
    if not args.quiet:
        for k, v in res.measured.items():
            if isinstance(v, float) and not math.isnan(v):
                v = f"{v:.6g}"
            print(f"  {k}: {v}")
    print(res.summary())
    return EXIT_OK if res.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_threads()
        cfg = _load(args, required=args.command != "verify")
    except ConfigError as exc:
        print(f"calabi-flow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args, cfg)
        if args.command == "verify":
            return cmd_verify(args, cfg)
        return cmd_experiment(args, cfg)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"calabi-flow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"calabi-flow: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
