"""Pipeline orchestration: strategy loop, evaluation, history, and reports.

Record-status convention: successful full-budget runs are ``evaluated`` and
carry their score; successful partial-budget runs are ``pruned`` (their score
feeds the fidelity scheduler through ``BohbState.observe`` but never
best-selection); crashed runs are ``failed``. Every run that consumed budget
charges ``budget / max_budget`` to the ledger, failures included.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..backend import Backend, BackendState, Session
from ..errors import EvaluationProtocolError, GenerationExhaustedError
from ..generation import (
    AttemptLogger,
    GenerationLimits,
    MODULE_KINDS,
    ModuleArtifact,
    ModuleBrief,
    generate_module,
)
from ..harness import (
    FalsePositiveBook,
    ProgramAssembly,
    assemble_program,
    build_unit_tests,
    devise_plan,
    generate_synthetic_data,
    integration_gate,
    load_protocol,
    make_contextual_evaluator,
    materialize_assembly,
)
from ..harness.assembly import run_assembly
from ..harness.evaluator import load_workspace_files
from ..prompts import load_template
from ..searchspace import generate_search_space
from ..task import (
    MetricSpec,
    OptimizationHistory,
    OptimizationRecord,
    SearchSpace,
    Solution,
    TaskDescription,
    sample_solution,
)
from ..proxies import average_relative_rank, collect_proxy_scores, filter_search_space
from .bohb import BohbState, bohb_next
from .ledger import Budget, CostLedger

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunLimits:
    """Stopping rule for the search loop; exactly one limit must be set."""

    max_evaluations: int | None = None
    max_cost: float | None = None
    max_wall_clock: float | None = None

    def __post_init__(self):
        set_count = sum(
            limit is not None
            for limit in (self.max_evaluations, self.max_cost, self.max_wall_clock)
        )
        if set_count != 1:
            raise ValueError("exactly one resource limit must be set")

    def reached(self, evaluations: int, ledger: CostLedger, started: float) -> bool:
        if self.max_evaluations is not None:
            return evaluations >= self.max_evaluations
        if self.max_cost is not None:
            return ledger.total >= self.max_cost
        return time.monotonic() - started >= self.max_wall_clock


@dataclass(frozen=True)
class EvaluationRequest:
    solution: Solution
    budget: Budget
    assembly: ProgramAssembly  # must have passed the integration gate


@dataclass
class PipelineContext:
    """Everything an evaluation run needs besides the request itself."""

    workspace_files: Mapping[str, bytes]
    metric: MetricSpec
    max_budget: float
    budget_unit: str
    workdir_root: Path
    seed: int = 0
    wall_time: float = 120.0
    memory_limit_mb: int | None = 2048
    _counter: int = 0

    def next_workdir(self, prefix: str) -> Path:
        self._counter += 1
        path = self.workdir_root / f"{prefix}_{self._counter:04d}"
        path.mkdir(parents=True, exist_ok=True)
        return path


def evaluate_solution(request: EvaluationRequest,
                      ctx: PipelineContext) -> tuple[OptimizationRecord, float | None]:
    """Run the assembled program at the requested budget.

    Returns the history record plus the raw score (also for pruned runs,
    which withhold it from the record by contract). Crashes yield a failed
    record; a clean run without a score in the result document is a protocol
    error and aborts.
    """
    report = run_assembly(
        request.assembly,
        workdir=ctx.next_workdir("eval"),
        workspace_files=ctx.workspace_files,
        metric=ctx.metric,
        budget=request.budget.value,
        max_budget=ctx.max_budget,
        hyperparameters=dict(request.solution.hyperparameters),
        seed=ctx.seed,
        wall_time=ctx.wall_time,
        memory_limit_mb=ctx.memory_limit_mb,
    )
    if report.status != "ok":
        record = OptimizationRecord(
            solution=request.solution, budget=request.budget.value,
            wall_time=report.duration, status="failed",
        )
        return record, None
    doc = report.result_document
    if doc is None or "score" not in doc:
        raise EvaluationProtocolError(
            "program ran but emitted no result document with a score"
        )
    score = float(doc["score"])
    full = request.budget.value >= ctx.max_budget
    record = OptimizationRecord(
        solution=request.solution,
        budget=request.budget.value,
        wall_time=report.duration,
        status="evaluated" if full else "pruned",
        score=score if full else None,
    )
    return record, score


def random_search_next(space: SearchSpace, rng: np.random.Generator,
                       max_budget: float = 1.0,
                       budget_unit: str = "evaluation-cost") -> tuple[Solution, Budget]:
    """Random search proposes i.i.d. solutions, always at full budget."""
    return sample_solution(space, rng), Budget(max_budget, budget_unit)


def run_search(space: SearchSpace, metric: MetricSpec, strategy: str,
               evaluate_fn: Callable[[Solution, Budget],
                                     tuple[OptimizationRecord, float | None]],
               limits: RunLimits, rng: np.random.Generator,
               max_budget: float, budget_unit: str,
               history: OptimizationHistory | None = None,
               ledger: CostLedger | None = None,
               bohb_state: BohbState | None = None,
               ) -> tuple[OptimizationHistory, CostLedger]:
    """Generic strategy loop shared by the full pipeline and benchmarks."""
    if strategy not in ("random", "bohb"):
        raise ValueError(f"unknown strategy: {strategy!r}")
    history = history if history is not None else OptimizationHistory()
    ledger = ledger if ledger is not None else CostLedger()
    if strategy == "bohb" and bohb_state is None:
        bohb_state = BohbState(space, metric, max_budget=max_budget,
                               budget_unit=budget_unit, rng=rng)
    started = time.monotonic()
    evaluations = 0
    while not limits.reached(evaluations, ledger, started):
        if strategy == "random":
            solution, budget = random_search_next(space, rng, max_budget, budget_unit)
        else:
            solution, budget = bohb_next(space, history, bohb_state)
        record, raw_score = evaluate_fn(solution, budget)
        history.append(record)
        ledger.charge(budget.value, max_budget)
        if bohb_state is not None:
            bohb_state.observe(solution, budget.value, raw_score)
        evaluations += 1
    return history, ledger


def rank_against_samples(best_score: float,
                         samples: Sequence[OptimizationRecord],
                         metric: MetricSpec) -> int:
    """1-based rank of a score among evaluated sample records.

    Direction-aware; the searched score sits above sample ties (only strictly
    better samples outrank it), and sample-internal ties keep the earliest
    record first, which cannot change the returned rank.
    """
    for record in samples:
        if record.status != "evaluated":
            raise ValueError("rank_against_samples requires evaluated records")
    better = sum(1 for r in samples if metric.better(r.score, best_score))
    return 1 + better


@dataclass
class RunOptions:
    """Knobs of a full pipeline run (defaults mirror the documented protocol)."""

    synthetic_versions: int = 3
    generation_limits: GenerationLimits = field(default_factory=GenerationLimits)
    use_reflection: bool = True
    plan_rounds: int = 4
    wall_time: float = 120.0
    memory_limit_mb: int | None = 2048
    mu: float = 0.5
    probe_command: tuple[str, ...] | None = None
    probe_memory_limit_mb: int | None = None  # probes are trusted executables
    bohb_eta: int = 3
    bohb_s_max: int = 2
    deep_max_budget: float = 30.0
    tabular_max_budget: float = 1.0


@dataclass
class PipelineResult:
    history: OptimizationHistory
    ledger: CostLedger
    best: OptimizationRecord | None
    best_assembly: ProgramAssembly | None
    report: dict
    fp_book: FalsePositiveBook
    space: SearchSpace


def config_digest(task: TaskDescription, strategy: str, seed: int,
                  limits: RunLimits) -> str:
    canonical = json.dumps({
        "task_text": task.text,
        "metric": {"name": task.metric.name, "direction": task.metric.direction},
        "strategy": strategy,
        "seed": seed,
        "limits": {
            "max_evaluations": limits.max_evaluations,
            "max_cost": limits.max_cost,
            "max_wall_clock": limits.max_wall_clock,
        },
    }, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_pipeline(task: TaskDescription, backend: Backend, strategy: str,
                 limits: RunLimits, seed: int, out_dir: str | Path,
                 options: RunOptions | None = None,
                 backend_state: BackendState | None = None) -> PipelineResult:
    """The full orchestration: search-space generation, plan and synthetic
    data, modeling-module generation for every candidate, optional proxy
    filtering for deep-learning tasks, then the strategy loop with per-module
    caching, gated assembly, evaluation, and best-program selection."""
    options = options or RunOptions()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workdir_root = out_dir / "sandbox"
    attempts_dir = out_dir / "attempts"
    state = backend_state or BackendState(kind="run", model="default")
    rng = np.random.default_rng(seed)

    def new_session() -> Session:
        return Session(backend, state)

    # Search space, data-contract plan, unit-test suite, synthetic data.
    space = generate_search_space(new_session(), task)
    classification = space.classification
    protocol = load_protocol(classification.modality)
    plan = devise_plan(new_session(), task, protocol, max_rounds=options.plan_rounds)
    suite = build_unit_tests(plan, protocol, classification)
    synthetic_programs = generate_synthetic_data(
        new_session(), plan, suite, options.synthetic_versions,
        workdir_root=workdir_root / "synthetic", base_seed=seed,
        wall_time=options.wall_time, memory_limit_mb=options.memory_limit_mb,
    )
    datasets = [p.data for p in synthetic_programs]
    workspace_files = load_workspace_files(task.workspace)

    evaluators = {
        kind: make_contextual_evaluator(
            kind, suite, datasets,
            raw_files=workspace_files if kind == "data-preparation" else None,
            workdir_root=workdir_root / kind,
            classification=classification,
            wall_time=options.wall_time,
            memory_limit_mb=options.memory_limit_mb,
        )
        for kind in MODULE_KINDS
    }

    plan_summary = plan.summary()
    cache: dict[tuple[str, str], ModuleArtifact | None] = {}
    attempt_totals: dict[str, int] = {}

    def ensure_artifact(kind: str, candidate_id: str) -> ModuleArtifact | None:
        key = (kind, candidate_id)
        if key in cache:
            return cache[key]
        candidate = space.candidate(kind, candidate_id)
        brief = ModuleBrief(
            kind=kind, candidate=candidate, task_text=task.text,
            plan_summary=plan_summary,
            contract_text=load_template(f"contract_{kind.replace('-', '_')}"),
        )
        logger = AttemptLogger(attempts_dir / f"{kind}_{candidate_id}.jsonl")
        try:
            artifact = generate_module(
                brief, new_session(), evaluators[kind], options.generation_limits,
                use_reflection=options.use_reflection, logger=logger,
            )
        except GenerationExhaustedError as exc:
            cache[key] = None
            attempt_totals[f"{kind}:{candidate_id}"] = len(exc.attempts)
            return None
        cache[key] = artifact
        attempt_totals[f"{kind}:{candidate_id}"] = artifact.attempts
        return artifact

    # Modeling modules for every candidate, up front.
    modeling_candidates = list(space.stage("modeling").candidates)
    verified_modeling = [
        cand.id for cand in modeling_candidates
        if ensure_artifact("modeling", cand.id) is not None
    ]
    if not verified_modeling:
        raise GenerationExhaustedError("modeling", ())

    # Deep-learning tasks: proxy scores gate the modeling candidates.
    filter_decision = None
    if classification.is_deep_learning() and options.probe_command:
        artifacts = {cid: cache[("modeling", cid)] for cid in verified_modeling}
        matrix = collect_proxy_scores(
            artifacts, datasets[0] if datasets else b"",
            probe_command=options.probe_command,
            workdir_root=workdir_root / "probes", seed=seed,
            wall_time=options.wall_time,
            memory_limit_mb=options.probe_memory_limit_mb,
        )
        ranks = average_relative_rank(matrix)
        filter_decision, space = filter_search_space(space, ranks, options.mu)
        verified_modeling = [
            cid for cid in verified_modeling if cid not in filter_decision.removed
        ]

    if classification.is_deep_learning():
        max_budget, budget_unit = options.deep_max_budget, "epochs"
    else:
        max_budget, budget_unit = options.tabular_max_budget, "evaluation-cost"

    # Solutions may only choose verified modeling candidates.
    space = _restrict_modeling(space, verified_modeling)

    ctx = PipelineContext(
        workspace_files=workspace_files,
        metric=task.metric,
        max_budget=max_budget,
        budget_unit=budget_unit,
        workdir_root=workdir_root / "runs",
        seed=seed,
        wall_time=options.wall_time,
        memory_limit_mb=options.memory_limit_mb,
    )
    fp_book = FalsePositiveBook()
    gate_cache: dict[str, ProgramAssembly | None] = {}

    def gated_assembly(solution: Solution) -> ProgramAssembly | None:
        artifacts = []
        for kind in MODULE_KINDS:
            artifact = ensure_artifact(kind, solution.choice(kind))
            if artifact is None:
                return None
            artifacts.append(artifact)
        assembly = assemble_program(artifacts)
        key = assembly.pathway_key()
        if key in gate_cache:
            return gate_cache[key]
        outcome = integration_gate(
            assembly, workdir=ctx.next_workdir("gate"),
            workspace_files=workspace_files, metric=task.metric,
            budget=max_budget, max_budget=max_budget, seed=seed,
            wall_time=options.wall_time, memory_limit_mb=options.memory_limit_mb,
        )
        fp_book.record(key, outcome.valid, None, outcome.reason)
        gate_cache[key] = assembly if outcome.valid else None
        return gate_cache[key]

    assemblies: dict[str, ProgramAssembly] = {}

    def evaluate_fn(solution: Solution, budget: Budget):
        assembly = gated_assembly(solution)
        if assembly is None:
            record = OptimizationRecord(
                solution=solution, budget=budget.value, wall_time=0.0,
                status="failed",
            )
            return record, None
        assemblies[solution.key()] = assembly
        return evaluate_solution(EvaluationRequest(solution, budget, assembly), ctx)

    history, ledger = run_search(
        space, task.metric, strategy, evaluate_fn, limits, rng,
        max_budget, budget_unit,
    )

    best = history.best(task.metric)
    best_assembly = assemblies.get(best.solution.key()) if best else None
    run_meta = {
        "config_digest": config_digest(task, strategy, seed, limits),
        "seed": seed,
        "max_budget": max_budget,
        "budget_unit": budget_unit,
    }
    history.save(out_dir / "history.jsonl", meta=run_meta)
    fp_book.save(out_dir / "gate_log.jsonl", meta=run_meta)
    if best_assembly is not None:
        materialize_assembly(best_assembly, out_dir / "best")

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_digest": config_digest(task, strategy, seed, limits),
        "seed": seed,
        "strategy": strategy,
        "metric": {"name": task.metric.name, "direction": task.metric.direction},
        "best": None if best is None else {
            "solution": best.solution.as_dict(),
            "score": best.score,
            "budget": best.budget,
        },
        "evaluations": len(history),
        "ledger_total": ledger.total,
        "attempts": dict(sorted(attempt_totals.items())),
        "fp": {
            "verified": fp_book.report().verified,
            "fp_before": fp_book.report().fp_before,
            "fp_after": fp_book.report().fp_after,
        },
        "filter": None if filter_decision is None else {
            "kept": list(filter_decision.kept),
            "removed": list(filter_decision.removed),
            "mu": filter_decision.mu,
        },
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return PipelineResult(
        history=history, ledger=ledger, best=best, best_assembly=best_assembly,
        report=report, fp_book=fp_book, space=space,
    )


def _restrict_modeling(space: SearchSpace, keep_ids: Sequence[str]) -> SearchSpace:
    from ..task import ModuleStage

    stages = tuple(
        stage if stage.kind != "modeling" else ModuleStage(
            kind=stage.kind,
            candidates=tuple(c for c in stage.candidates if c.id in keep_ids),
        )
        for stage in space.stages
    )
    return SearchSpace(stages=stages, hyperparameters=space.hyperparameters,
                       classification=space.classification)
