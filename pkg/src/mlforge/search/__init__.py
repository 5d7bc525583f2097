"""Search strategies, cost accounting, evaluation, and pipeline orchestration."""
from __future__ import annotations

from .ledger import Budget, CostLedger
from .bohb import BohbState, bohb_next
from .driver import (
    EvaluationRequest,
    PipelineContext,
    PipelineResult,
    RunLimits,
    evaluate_solution,
    random_search_next,
    rank_against_samples,
    run_pipeline,
    run_search,
)

__all__ = [
    "Budget",
    "CostLedger",
    "BohbState",
    "bohb_next",
    "random_search_next",
    "EvaluationRequest",
    "PipelineContext",
    "PipelineResult",
    "RunLimits",
    "evaluate_solution",
    "rank_against_samples",
    "run_search",
    "run_pipeline",
]
