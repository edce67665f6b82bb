"""Command-line entry point: validate, run, compare, replay, serve.

Exit codes: 0 success, 2 configuration error, 3 runtime error. Diagnostics go
to stderr; data files never contain wall-clock time (only the sidecar
run_meta.json does).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import signal
import sys
from pathlib import Path

from .errors import ConfigError, EdgeSchedError, ModelError
from .metrics import run_meta_json
from .scenario import Scenario, load_scenario
from .serve import WireServer, replay_trace
from .sim import RunResult, compare_strategies, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str) -> int:
    print(f"edgesched: error: {message}", file=sys.stderr)
    return code


def parse_seeds(spec: str) -> list[int]:
    """Parse '3', '1,2,5' or '1..5' into a seed list."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        lo_i, hi_i = int(lo), int(hi)
        if hi_i < lo_i:
            raise ValueError(f"empty seed range {spec!r}")
        return list(range(lo_i, hi_i + 1))
    return [int(part) for part in spec.split(",") if part.strip()]


def strategy_label(args) -> str:
    if args.strategy == "dynamic":
        return f"dynamic-{args.variant}" if args.variant else "dynamic"
    return args.strategy


def _prepare_outdir(out: str, force: bool, expected: list[str]) -> Path:
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    clashes = [name for name in expected if (outdir / name).exists()]
    if clashes and not force:
        raise ConfigError(
            [ModelError(f"refusing to overwrite {clashes} in {outdir} (use --force)")]
        )
    return outdir


def _write(outdir: Path, name: str, text: str):
    (outdir / name).write_text(text, encoding="utf-8")


def _write_run_outputs(outdir: Path, scenario: Scenario, result: RunResult):
    report = result.report
    _write(outdir, "summary.csv", report.summary_csv())
    _write(outdir, "latency.csv", report.latency_csv())
    for device in report.edge_ids + report.robot_ids:
        for metric in ("cpu", "mem", "thp"):
            _write(
                outdir,
                f"ts_{device}_{metric}.csv",
                report.timeseries_csv(device, metric),
            )
    _write(outdir, "events.ndjson", "\n".join(result.event_lines) + "\n")
    _write(outdir, "actions.ndjson", "\n".join(result.action_lines) + "\n")
    _write(outdir, "assignments.ndjson", "\n".join(result.assignment_lines) + "\n")
    _write(outdir, "trace.ndjson", "\n".join(result.trace_lines) + "\n")
    _write(
        outdir,
        "run_meta.json",
        run_meta_json(
            scenario.name,
            report.strategy,
            report.seed,
            _dt.datetime.now().isoformat(timespec="seconds"),
        ),
    )


def cmd_validate(args) -> int:
    scenario = load_scenario(args.config)
    print(
        f"ok: {scenario.name}: {len(scenario.graph)} tasks "
        f"(depth {scenario.graph.depth()}), {len(scenario.edges)} edges, "
        f"{len(scenario.robots)} robots"
    )
    return EXIT_OK


def _run_expected_files(scenario: Scenario) -> list[str]:
    names = ["summary.csv", "latency.csv", "events.ndjson", "actions.ndjson",
             "assignments.ndjson", "trace.ndjson", "run_meta.json"]
    for device in sorted(scenario.edges) + sorted(scenario.robots):
        for metric in ("cpu", "mem", "thp"):
            names.append(f"ts_{device}_{metric}.csv")
    return names


def cmd_run(args) -> int:
    scenario = load_scenario(args.config)
    outdir = _prepare_outdir(args.out, args.force, _run_expected_files(scenario))
    seed = args.seed if args.seed is not None else scenario.seed
    result = run_scenario(
        scenario,
        strategy=strategy_label(args),
        seed=seed,
        force_reassign=args.force_reassign,
        unload_completed=not args.no_unload,
    )
    _write_run_outputs(outdir, scenario, result)
    for line in result.diagnostics:
        print(f"warning: {line}", file=sys.stderr)
    report = result.report
    print(
        f"{scenario.name} strategy={report.strategy} seed={seed}: "
        f"mean task latency {report.mean_task_latency_ms() / 1000.0:.2f}s, "
        f"{report.handoffs} handoffs -> {outdir}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = load_scenario(args.config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if len(strategies) < 2:
        raise ConfigError([ModelError("compare needs at least two strategies")])
    seeds = parse_seeds(args.seeds)
    outdir = _prepare_outdir(args.out, args.force, ["compare.csv", "compare.txt"])
    comparison, _ = compare_strategies(scenario, strategies, seeds)
    _write(outdir, "compare.csv", comparison.to_csv())
    _write(outdir, "compare.txt", comparison.to_text())
    print(comparison.to_text(), end="")
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = load_scenario(args.config)
    trace_path = Path(args.trace)
    if not trace_path.is_file():
        raise ConfigError([ModelError(f"trace file not found: {trace_path}")])
    outdir = _prepare_outdir(
        args.out, args.force, ["actions.ndjson", "assignments.ndjson"]
    )
    replay = replay_trace(
        scenario,
        trace_path.read_text(encoding="utf-8").splitlines(),
        strategy=strategy_label(args),
    )
    _write(outdir, "actions.ndjson", "\n".join(replay.action_lines()) + "\n")
    _write(outdir, "assignments.ndjson", "\n".join(replay.assignment_lines()) + "\n")
    if replay.malformed:
        print(f"warning: {replay.malformed} malformed lines skipped", file=sys.stderr)
    print(f"replayed {trace_path} -> {outdir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    scenario = load_scenario(args.config)
    host, _, port = args.listen.rpartition(":")
    try:
        server = WireServer(
            scenario, host=host or "127.0.0.1", port=int(port),
            strategy=strategy_label(args),
        )
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot listen on {args.listen}: {exc}")
    print(f"listening on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    signal.signal(signal.SIGINT, lambda *_: server.stop())
    signal.signal(signal.SIGTERM, lambda *_: server.stop())
    server.serve_forever()
    if args.out:
        outdir = _prepare_outdir(args.out, args.force, ["actions.ndjson"])
        _write(outdir, "actions.ndjson", "\n".join(server.replay.action_lines()) + "\n")
    for line in server.replay.diagnostics:
        print(f"diagnostic: {line}", file=sys.stderr)
    print(
        f"served {len(server.replay.action_lines())} actions, "
        f"{server.replay.malformed} malformed lines",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesched",
        description="Utility-aware task offloading orchestrator and simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_strategy=True):
        p.add_argument("--config", required=True, help="scenario file or builtin name")
        if with_strategy:
            p.add_argument(
                "--strategy",
                choices=["local", "static", "dynamic"],
                default="dynamic",
            )
            p.add_argument(
                "--variant",
                choices=["cpu", "mem", "net", "all"],
                default=None,
                help="weight variant for the dynamic strategy",
            )

    p_validate = sub.add_parser("validate", help="check a scenario config")
    add_common(p_validate, with_strategy=False)
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="simulate one scenario run")
    add_common(p_run)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--force", action="store_true")
    p_run.add_argument(
        "--force-reassign",
        action="store_true",
        help="ablation: restart every task every round instead of diffing",
    )
    p_run.add_argument(
        "--no-unload",
        action="store_true",
        help="ablation: leave completed tasks occupying their edges",
    )
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several strategies over seeds")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument(
        "--strategies",
        required=True,
        help="comma list: local,static,dynamic-all,dynamic-cpu,...",
    )
    p_cmp.add_argument("--seeds", default="1..5", help="e.g. 7 or 1,2,3 or 1..5")
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--force", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_replay = sub.add_parser("replay", help="replay a recorded telemetry trace")
    add_common(p_replay)
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--out", required=True)
    p_replay.add_argument("--force", action="store_true")
    p_replay.set_defaults(func=cmd_replay)

    p_serve = sub.add_parser("serve", help="run the live wire-protocol gateway")
    add_common(p_serve)
    p_serve.add_argument("--listen", default="127.0.0.1:7070")
    p_serve.add_argument("--out", default=None)
    p_serve.add_argument("--force", action="store_true")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"edgesched: config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except EdgeSchedError as exc:
        return _fail(EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
