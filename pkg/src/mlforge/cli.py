"""Command-line front door: run, generate, simulate, report, probe-check.

Exit codes: 0 success, 2 usage, 3 backend, 4 sandbox, 5 exhaustion.
Credentials come from environment variables only; everything else is a flag,
so a run is fully described by its command line plus the task file.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import complexity
from .backend import (
    Backend,
    BackendState,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    Session,
    TranscriptStore,
)
from .errors import (
    BackendError,
    EvaluationProtocolError,
    GenerationExhaustedError,
    MlforgeError,
    PlanRejectedError,
    ResponseParseError,
    SandboxError,
    SyntheticDataExhaustedError,
)
from .generation import (
    AttemptLogger,
    GenerationLimits,
    MODULE_KINDS,
    ModuleBrief,
    generate_module,
)
from .harness import (
    build_unit_tests,
    devise_plan,
    generate_synthetic_data,
    load_protocol,
    make_contextual_evaluator,
)
from .harness.evaluator import load_workspace_files
from .prompts import load_template
from .proxies import PROBE_SCHEMA_VERSION, probe_request_payload, run_probe
from .search import RunLimits, rank_against_samples, run_pipeline
from .search.driver import RunOptions, config_digest
from .search.ledger import CostLedger
from .searchspace import generate_search_space
from .task import (
    MetricSpec,
    OptimizationHistory,
    load_task_file,
    sample_solution,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3
EXIT_SANDBOX = 4
EXIT_EXHAUSTED = 5

_EXHAUSTION_ERRORS = (GenerationExhaustedError, PlanRejectedError,
                      SyntheticDataExhaustedError)


def _build_backend(args) -> Backend:
    backend: Backend
    if args.backend == "http":
        backend = HttpBackend()
    elif args.backend == "replay":
        if not args.transcript:
            raise argparse.ArgumentTypeError("--transcript is required for replay")
        backend = ReplayBackend(TranscriptStore(args.transcript))
    elif args.backend == "scripted":
        if not args.script:
            raise argparse.ArgumentTypeError("--script is required for scripted")
        payload = json.loads(Path(args.script).read_text(encoding="utf-8"))
        backend = ScriptedBackend(payload.get("responses", []),
                                  default=payload.get("default"))
    else:
        raise argparse.ArgumentTypeError(f"unknown backend {args.backend!r}")
    if getattr(args, "record", None):
        backend = RecordingBackend(backend, TranscriptStore(args.record))
    return backend


def _limits_from_args(args) -> RunLimits:
    return RunLimits(
        max_evaluations=args.limit_evaluations,
        max_cost=args.limit_cost,
        max_wall_clock=args.limit_wall_clock,
    )


def _write_error(out_dir: Path, exc: Exception) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "error.json").write_text(json.dumps({
        "error": type(exc).__name__,
        "message": str(exc),
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    task = load_task_file(args.task)
    if not Path(task.workspace).is_dir():
        print(f"workspace directory does not exist: {task.workspace}", file=sys.stderr)
        return EXIT_USAGE
    backend = _build_backend(args)
    limits = _limits_from_args(args)
    options = RunOptions(
        synthetic_versions=args.synthetic_versions,
        use_reflection=not args.no_reflection,
        probe_command=tuple(args.probe_cmd.split()) if args.probe_cmd else None,
    )
    out_dir = Path(args.out)
    try:
        result = run_pipeline(task, backend, args.strategy, limits, args.seed,
                              out_dir, options)
    except MlforgeError as exc:
        _write_error(out_dir, exc)
        raise
    best = result.report["best"]
    if best is None:
        print("no evaluated solution (empty history)")
    else:
        print(f"best score: {best['score']:.2f} "
              f"({task.metric.name}, {task.metric.direction})")
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    """Repeated program generation under a fixed total attempt budget."""
    task = load_task_file(args.task)
    backend = _build_backend(args)
    state = BackendState(kind=args.backend)
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workdir_root = out_dir / "sandbox"

    def new_session() -> Session:
        return Session(backend, state)

    space = generate_search_space(new_session(), task)
    classification = space.classification
    protocol = load_protocol(classification.modality)
    plan = devise_plan(new_session(), task, protocol)
    suite = build_unit_tests(plan, protocol, classification)
    synthetic = generate_synthetic_data(
        new_session(), plan, suite, args.synthetic_versions,
        workdir_root=workdir_root / "synthetic", base_seed=args.seed,
    )
    datasets = [p.data for p in synthetic]
    workspace_files = load_workspace_files(task.workspace)
    evaluators = {
        kind: make_contextual_evaluator(
            kind, suite, datasets,
            raw_files=workspace_files if kind == "data-preparation" else None,
            workdir_root=workdir_root / kind,
            classification=classification,
        )
        for kind in MODULE_KINDS
    }
    plan_summary = plan.summary()
    logger = AttemptLogger(out_dir / "attempts.jsonl")

    budget = args.attempt_budget
    for _ in range(args.repetitions):
        attempts_used = 0
        while attempts_used < budget:
            solution = sample_solution(space, rng)
            program_attempts = 0
            completed = True
            for kind in MODULE_KINDS:
                remaining = budget - attempts_used - program_attempts
                if remaining <= 0:
                    completed = False
                    break
                candidate = space.candidate(kind, solution.choice(kind))
                brief = ModuleBrief(
                    kind=kind, candidate=candidate, task_text=task.text,
                    plan_summary=plan_summary,
                    contract_text=load_template(f"contract_{kind.replace('-', '_')}"),
                )
                limits = GenerationLimits(
                    max_attempts=min(args.module_cap, remaining),
                    reset_period=min(args.reset_period,
                                     min(args.module_cap, remaining)),
                )
                try:
                    artifact = generate_module(
                        brief, new_session(), evaluators[kind], limits,
                        use_reflection=not args.no_reflection, logger=logger,
                    )
                    program_attempts += artifact.attempts
                except GenerationExhaustedError as exc:
                    program_attempts += len(exc.attempts)
                    completed = False
                    break
            attempts_used += program_attempts

    # The report is recomputed from the persisted attempt log, not from the
    # in-memory tallies above.
    report = attempts_report_from_log(out_dir / "attempts.jsonl", budget,
                                      args.repetitions)
    report["config_digest"] = config_digest(
        task, "generate", args.seed,
        RunLimits(max_evaluations=args.attempt_budget),
    )
    report["seed"] = args.seed
    (out_dir / "attempts_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"attempts per valid program: {report['display']}")
    return EXIT_OK


def attempts_report_from_log(log_path: Path, cap: int, repetitions: int) -> dict:
    """Mean and std of attempts per valid program, from persisted logs only.

    A program completes when its three module kinds pass in order; attempt
    indices in the log are per-module chains, so programs are reconstructed
    by walking the records in write order.
    """
    successes: list[int] = []
    program_attempts = 0
    kinds_done: list[str] = []
    with log_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            program_attempts += 1
            if record["passed"]:
                kinds_done.append(record["kind"])
                if tuple(kinds_done) == MODULE_KINDS:
                    successes.append(program_attempts)
                    program_attempts = 0
                    kinds_done = []
    if successes:
        mean = sum(successes) / len(successes)
        std = math.sqrt(sum((s - mean) ** 2 for s in successes) / len(successes))
        display = f"{mean:.2f} ± {std:.2f}"
    else:
        mean = std = None
        display = "-"
    return {
        "schema_version": 1,
        "successes": len(successes),
        "mean_attempts": mean,
        "std_attempts": std,
        "cap": cap,
        "repetitions": repetitions,
        "display": display,
    }


def cmd_simulate(args) -> int:
    lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
    rng = np.random.default_rng(args.seed)
    report = complexity.scaling_report(
        args.epsilon, lengths, args.module_size,
        trials=args.trials, rng=rng if args.trials else None,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest_line = (f"# epsilon={args.epsilon} module_size={args.module_size} "
                   f"seed={args.seed} trials={args.trials}\n")
    table = complexity.render_scaling_table(report)
    (out_dir / "scaling_table.tsv").write_text(digest_line + table, encoding="utf-8")
    plot_lines = [digest_line.rstrip("\n"), "# length monolithic modular"]
    for row in report.rows:
        plot_lines.append(f"{row.length} {row.monolithic!r} {row.modular!r}")
    (out_dir / "scaling_plot.dat").write_text("\n".join(plot_lines) + "\n",
                                              encoding="utf-8")
    print(table, end="")
    print(f"monolithic log-slope: {report.monolithic_log_slope:.4f} "
          f"(expected {report.expected_log_slope():.4f})")
    print(f"modular slope: {report.modular_slope:.4f} "
          f"(expected {report.expected_modular_slope():.4f})")
    return EXIT_OK


def cmd_report(args) -> int:
    history_dir = Path(args.history)
    history_path = history_dir / "history.jsonl"
    if not history_path.exists():
        print(f"no history at {history_path}", file=sys.stderr)
        return EXIT_USAGE
    history, meta = OptimizationHistory.load_with_meta(history_path)
    report: dict = {"schema_version": 1, "empty": len(history) == 0}
    if meta:
        report["config_digest"] = meta.get("config_digest")
        report["seed"] = meta.get("seed")
    metric = MetricSpec(name=args.metric_name, direction=args.metric_direction)

    samples = None
    if args.samples:
        samples_history = OptimizationHistory.load(args.samples)
        samples = samples_history.records
    if len(history) > 0:
        max_budget = (meta or {}).get("max_budget") \
            or max(r.budget for r in history.records)
        ledger = CostLedger()
        for record in history.records:
            ledger.charge(record.budget, max_budget)
        for cap in (25.0, 100.0):
            prefix = ledger.prefix_within(cap)
            best = None
            for record in history.records[:prefix]:
                if record.status != "evaluated":
                    continue
                if best is None or metric.better(record.score, best.score):
                    best = record
            entry = {"records_within": prefix,
                     "best_score": None if best is None else best.score}
            if best is not None and samples is not None:
                entry["rank"] = rank_against_samples(best.score, samples, metric)
            report[f"cost_{int(cap)}"] = entry
    gate_log = history_dir / "gate_log.jsonl"
    if gate_log.exists():
        from .harness import FalsePositiveBook

        fp = FalsePositiveBook.load(gate_log).report()
        report["fp"] = {"verified": fp.verified, "fp_before": fp.fp_before,
                        "fp_after": fp.fp_after}
    out_path = Path(args.out) if args.out else history_dir / "rank_report.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
    print(json.dumps(report, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_probe_check(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    request = probe_request_payload(
        ["params"], args.seed,
        model_ref={"kind": "zoo", "name": "linear8x3"},
        data_ref={"kind": "none"},
    )
    report = run_probe(tuple(args.probe_cmd.split()), {}, request,
                       out_dir / "probe_check", wall_time=60.0)
    doc = report.result_document
    ok = (
        doc is not None
        and doc.get("schema_version") == PROBE_SCHEMA_VERSION
        and isinstance(doc.get("scores"), dict)
        and "params" in doc["scores"]
    )
    (out_dir / "probe_check.json").write_text(json.dumps({
        "ok": ok,
        "result": doc,
        "stderr": report.stderr[-2000:],
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if not ok:
        print("probe check failed", file=sys.stderr)
        return EXIT_SANDBOX
    print(f"probe ok: params={doc['scores']['params']}")
    return EXIT_OK


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("http", "replay", "scripted"),
                        required=True)
    parser.add_argument("--transcript", help="transcript file for replay")
    parser.add_argument("--script", help="scripted responses JSON file")
    parser.add_argument("--record", help="record exchanges into this transcript")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full task-to-program pipeline")
    p_run.add_argument("--task", required=True)
    _add_backend_args(p_run)
    p_run.add_argument("--strategy", choices=("random", "bohb"), default="random")
    p_run.add_argument("--limit-evaluations", type=int)
    p_run.add_argument("--limit-cost", type=float)
    p_run.add_argument("--limit-wall-clock", type=float)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--synthetic-versions", type=int, default=3)
    p_run.add_argument("--no-reflection", action="store_true")
    p_run.add_argument("--probe-cmd", help="probe command for proxy scoring")
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("generate", help="repeated generation experiment")
    p_gen.add_argument("--task", required=True)
    _add_backend_args(p_gen)
    p_gen.add_argument("--attempt-budget", type=int, default=100)
    p_gen.add_argument("--module-cap", type=int, default=100)
    p_gen.add_argument("--reset-period", type=int, default=10)
    p_gen.add_argument("--repetitions", type=int, default=1)
    p_gen.add_argument("--synthetic-versions", type=int, default=3)
    p_gen.add_argument("--no-reflection", action="store_true")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_generate)

    p_sim = sub.add_parser("simulate", help="generation-complexity scaling table")
    p_sim.add_argument("--epsilon", type=float, default=0.9)
    p_sim.add_argument("--lengths", default="5,10,15,20")
    p_sim.add_argument("--module-size", type=int, default=2)
    p_sim.add_argument("--trials", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="rank and FP reports from persisted logs")
    p_rep.add_argument("--history", required=True, help="run output directory")
    p_rep.add_argument("--samples", help="history file of sampled configurations")
    p_rep.add_argument("--metric-name", default="score")
    p_rep.add_argument("--metric-direction", choices=("maximize", "minimize"),
                       default="maximize")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=cmd_report)

    p_probe = sub.add_parser("probe-check", help="round-trip the probe interface")
    p_probe.add_argument("--probe-cmd", required=True)
    p_probe.add_argument("--seed", type=int, default=0)
    p_probe.add_argument("--out", required=True)
    p_probe.set_defaults(func=cmd_probe_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except _EXHAUSTION_ERRORS as exc:
        print(f"exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except ResponseParseError as exc:
        print(f"backend response unusable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SandboxError as exc:
        print(f"sandbox error: {exc}", file=sys.stderr)
        return EXIT_SANDBOX
    except EvaluationProtocolError as exc:
        print(f"evaluation protocol error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
