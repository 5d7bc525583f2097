"""Iterated, test-gated module generation with self-reflection and resets.

One module chain is strictly sequential: generate, evaluate, feed the test
output and a reflection back into the next instruction, until the module's
evaluator passes or the attempt cap is hit. After every ``reset_period``
consecutive failures the conversation memory is cleared (the task, plan, and
choice specification are restated in the fresh initial instruction).
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from . import prompts
from .backend import Session, reset_memory
from .errors import GenerationExhaustedError
from .task import CandidateMethod, Solution

DATA_PREPARATION = "data-preparation"
MODELING = "modeling"
POST_PROCESSING = "post-processing"
MODULE_KINDS = (DATA_PREPARATION, MODELING, POST_PROCESSING)

ATTEMPT_LOG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvaluationFeedback:
    passed: bool
    diagnostics: str = ""
    phase: str = "execution"  # syntax | contract | execution

    def __post_init__(self):
        if self.phase not in ("syntax", "contract", "execution"):
            raise ValueError(f"unknown feedback phase: {self.phase!r}")


@dataclass(frozen=True)
class GenerationAttempt:
    index: int  # 1-based, contiguous across the whole chain
    instruction: str
    output: str
    feedback: EvaluationFeedback


@dataclass(frozen=True)
class ModuleArtifact:
    kind: str
    candidate_id: str
    code: str
    attempts: int
    verified: bool


@dataclass(frozen=True)
class GenerationLimits:
    max_attempts: int = 100
    reset_period: int = 10

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not (1 <= self.reset_period <= self.max_attempts):
            raise ValueError("reset_period must lie in [1, max_attempts]")


class ContextualEvaluator(Protocol):
    def evaluate(self, code: str) -> EvaluationFeedback:
        """Binary verdict plus diagnostics for one candidate module."""


@dataclass(frozen=True)
class ModuleBrief:
    """Everything the instruction builder needs for one module chain."""

    kind: str
    candidate: CandidateMethod
    task_text: str
    plan_summary: str
    contract_text: str


def initial_instruction(brief: ModuleBrief) -> str:
    return prompts.render(
        "module_initial",
        common=prompts.load_template("common_instruction"),
        task_text=brief.task_text,
        kind=brief.kind,
        candidate_id=brief.candidate.id,
        candidate_description=brief.candidate.description,
        plan_summary=brief.plan_summary,
        contract_text=brief.contract_text,
    )


def construct_instruction(brief: ModuleBrief, history: Sequence[GenerationAttempt],
                          reflection: str = "") -> str:
    """First attempt uses the initial instruction; retries use the five-block
    format: choice specification, previous code, test feedback, reflection,
    modification instruction. Only retained (post-reset) memory is referenced."""
    if not history:
        return initial_instruction(brief)
    last = history[-1]
    return prompts.render(
        "module_retry",
        kind=brief.kind,
        candidate_id=brief.candidate.id,
        candidate_description=brief.candidate.description,
        previous_code=last.output,
        feedback=last.feedback.diagnostics or "(no diagnostics)",
        reflection=reflection or "(none)",
    )


def reflect(session: Session, feedback: EvaluationFeedback) -> str:
    """Ask the backend to reflect on failing test feedback."""
    if feedback.passed:
        raise ValueError("reflection requires failing feedback")
    return session.ask(prompts.render(
        "reflection", feedback=feedback.diagnostics or "(no diagnostics)"
    ))


class AttemptLogger:
    """Append-only structured log of every attempt of one module chain."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def log(self, kind: str, candidate_id: str, attempt: GenerationAttempt) -> None:
        record = {
            "v": ATTEMPT_LOG_SCHEMA_VERSION,
            "kind": kind,
            "candidate_id": candidate_id,
            "index": attempt.index,
            "instruction": attempt.instruction,
            "output": attempt.output,
            "passed": attempt.feedback.passed,
            "phase": attempt.feedback.phase,
            "diagnostics": attempt.feedback.diagnostics,
            "timestamp": time.time(),
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def generate_module(brief: ModuleBrief, session: Session,
                    evaluator: ContextualEvaluator, limits: GenerationLimits,
                    use_reflection: bool = True,
                    logger: AttemptLogger | None = None) -> ModuleArtifact:
    """Run one generation chain until its evaluator passes.

    ``attempts`` on the returned artifact counts generation calls only;
    reflection exchanges do not count. Raises GenerationExhaustedError with
    the full attempt record once the cap is hit.
    """
    all_attempts: list[GenerationAttempt] = []
    memory: list[GenerationAttempt] = []  # cleared on reset
    consecutive_failures = 0
    while len(all_attempts) < limits.max_attempts:
        reflection = ""
        if memory and use_reflection:
            reflection = reflect(session, memory[-1].feedback)
        instruction = construct_instruction(brief, memory, reflection)
        output = session.ask(instruction)
        code = prompts.extract_code_block(output)
        if code is None:
            feedback = EvaluationFeedback(
                passed=False, diagnostics="response contains no fenced code block",
                phase="syntax",
            )
        else:
            feedback = evaluator.evaluate(code)
        attempt = GenerationAttempt(
            index=len(all_attempts) + 1,
            instruction=instruction,
            output=output,
            feedback=feedback,
        )
        all_attempts.append(attempt)
        memory.append(attempt)
        if logger is not None:
            logger.log(brief.kind, brief.candidate.id, attempt)
        if feedback.passed:
            return ModuleArtifact(
                kind=brief.kind,
                candidate_id=brief.candidate.id,
                code=code,
                attempts=len(all_attempts),
                verified=True,
            )
        consecutive_failures += 1
        if consecutive_failures % limits.reset_period == 0:
            reset_memory(session)
            memory.clear()
    raise GenerationExhaustedError(brief.kind, tuple(all_attempts))


def run_contextual_modular_generation(
    briefs: Sequence[ModuleBrief],
    session_factory: Callable[[], Session],
    evaluators: dict[str, ContextualEvaluator],
    limits: GenerationLimits,
    use_reflection: bool = True,
    logger_factory: Callable[[str, str], AttemptLogger | None] | None = None,
) -> list[ModuleArtifact]:
    """Generate every module strictly in order, each with its own session.

    The first exhausted module aborts the run; the raised error carries the
    artifacts completed so far.
    """
    artifacts: list[ModuleArtifact] = []
    for brief in briefs:
        if brief.kind not in evaluators:
            raise KeyError(f"no evaluator for module kind '{brief.kind}'")
        logger = None
        if logger_factory is not None:
            logger = logger_factory(brief.kind, brief.candidate.id)
        try:
            artifact = generate_module(
                brief, session_factory(), evaluators[brief.kind], limits,
                use_reflection=use_reflection, logger=logger,
            )
        except GenerationExhaustedError as exc:
            raise GenerationExhaustedError(
                exc.kind, exc.attempts, partial=tuple(artifacts)
            ) from exc
        artifacts.append(artifact)
    return artifacts
