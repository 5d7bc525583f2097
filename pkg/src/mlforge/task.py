"""Task, search-space, solution, and history types shared by the whole pipeline.

Everything here is an immutable value object except :class:`OptimizationHistory`,
whose appends are serialized behind a lock so concurrent readers always see a
consistent prefix.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

MODALITIES = ("tabular", "cv", "nlp")
CATEGORIES = (
    "binary classification",
    "multi-class classification",
    "multi-label classification",
    "single-output regression",
    "multi-output regression",
    "sequence-to-sequence",
    "other",
)
CLASSIFICATION_CATEGORIES = CATEGORIES[:3]
OUTPUT_FORMATS = ("integer labels", "probability labels", "n/a")

STAGE_KINDS = ("data-preparation", "modeling", "post-processing")

HISTORY_SCHEMA_VERSION = 1

_MINIMIZE_TOKENS = ("error", "mae", "mse", "rmse", "loss", "deviation", "perplexity")


def infer_direction(metric_name: str) -> str:
    """Default optimization direction from the metric name.

    Error-like names minimize, everything else (accuracy, f1, auc, ...)
    maximizes. Callers can always override via explicit configuration.
    """
    lowered = metric_name.lower()
    if any(token in lowered for token in _MINIMIZE_TOKENS):
        return MINIMIZE
    return MAXIMIZE


@dataclass(frozen=True)
class MetricSpec:
    """Name plus direction of the score every evaluation reports."""

    name: str
    direction: str

    def __post_init__(self):
        if self.direction not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"unknown metric direction: {self.direction!r}")

    def better(self, a: float, b: float) -> bool:
        """True when score ``a`` beats score ``b`` under this metric."""
        return a > b if self.direction == MAXIMIZE else a < b

    def worst(self) -> float:
        return -math.inf if self.direction == MAXIMIZE else math.inf


@dataclass(frozen=True)
class TaskDescription:
    """The textual task plus the minimal structured metadata a run needs."""

    text: str
    workspace: str
    metric: MetricSpec
    modality_hint: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("task text must be non-empty")
        if self.modality_hint is not None and self.modality_hint not in MODALITIES:
            raise ValueError(f"unknown modality hint: {self.modality_hint!r}")


@dataclass(frozen=True)
class TaskClassification:
    """Modality, category, and output format the backend assigned to a task."""

    modality: str
    category: str
    output_format: str = "n/a"

    def is_classification(self) -> bool:
        return self.category in CLASSIFICATION_CATEGORIES

    def is_deep_learning(self) -> bool:
        return self.modality in ("cv", "nlp")


@dataclass(frozen=True)
class HyperparameterSpec:
    """One tunable dimension: numeric range or categorical choices.

    Instances are deliberately permissive; :func:`validate_search_space`
    reports invariant violations instead of the constructor raising, so a
    malformed backend suggestion can be inspected rather than lost.
    """

    name: str
    kind: str  # integer | real | categorical
    scale: str = "linear"  # linear | log
    low: float | None = None
    high: float | None = None
    choices: tuple[str, ...] | None = None


@dataclass(frozen=True)
class CandidateMethod:
    """One concrete method suggestion for one pipeline stage."""

    id: str
    stage: str
    description: str = ""


@dataclass(frozen=True)
class ModuleStage:
    kind: str
    candidates: tuple[CandidateMethod, ...]


@dataclass(frozen=True)
class SearchSpace:
    """Per-stage candidate methods plus the hyperparameter block."""

    stages: tuple[ModuleStage, ...]
    hyperparameters: tuple[HyperparameterSpec, ...]
    classification: TaskClassification

    def stage(self, kind: str) -> ModuleStage:
        for stage in self.stages:
            if stage.kind == kind:
                return stage
        raise KeyError(kind)

    def candidate(self, stage_kind: str, candidate_id: str) -> CandidateMethod:
        for cand in self.stage(stage_kind).candidates:
            if cand.id == candidate_id:
                return cand
        raise KeyError((stage_kind, candidate_id))


def default_finetune_space() -> tuple[HyperparameterSpec, ...]:
    """The fixed fine-tuning hyperparameter block for deep-learning tasks."""
    return (
        HyperparameterSpec("batch_size", "integer", "log", 2, 64),
        HyperparameterSpec("learning_rate", "real", "log", 1e-5, 1e-1),
        HyperparameterSpec("weight_decay", "real", "log", 1e-4, 1e-1),
        HyperparameterSpec("momentum", "real", "linear", 0.01, 0.99),
        HyperparameterSpec("optimizer", "categorical", choices=("sgd", "adam", "adamw")),
        HyperparameterSpec("scheduler", "categorical", choices=("plateau", "cosine")),
    )


def _validate_hyperparameter(spec: HyperparameterSpec) -> list[str]:
    where = f"hyperparameter '{spec.name}'"
    out: list[str] = []
    if not spec.name:
        out.append("hyperparameter with empty name")
        where = "hyperparameter ''"
    if spec.kind not in ("integer", "real", "categorical"):
        out.append(f"{where}: unknown kind {spec.kind!r}")
        return out
    if spec.kind == "categorical":
        if not spec.choices:
            out.append(f"{where}: categorical without choices")
        if spec.low is not None or spec.high is not None:
            out.append(f"{where}: categorical must not carry a numeric range")
        return out
    if spec.low is None or spec.high is None:
        out.append(f"{where}: numeric spec requires low and high bounds")
        return out
    if not (spec.low < spec.high):
        out.append(f"{where}: lower bound must be strictly below upper bound")
    if spec.scale not in ("linear", "log"):
        out.append(f"{where}: unknown scale {spec.scale!r}")
    elif spec.scale == "log" and spec.low <= 0:
        out.append(f"{where}: log scale requires strictly positive bounds")
    return out


def validate_search_space(space: SearchSpace) -> list[str]:
    """Return every invariant violation; empty list means the space is valid.

    Total function: never raises on malformed content, only reports.
    """
    violations: list[str] = []
    if not space.stages:
        violations.append("search space has no stages")
    seen_kinds: set[str] = set()
    seen_ids: set[str] = set()
    for stage in space.stages:
        if stage.kind in seen_kinds:
            violations.append(f"stage kind '{stage.kind}' appears more than once")
        seen_kinds.add(stage.kind)
        if not stage.candidates:
            violations.append(f"stage '{stage.kind}' has no candidates")
        for cand in stage.candidates:
            if cand.id in seen_ids:
                violations.append(f"candidate id '{cand.id}' is not unique")
            seen_ids.add(cand.id)
            if cand.stage != stage.kind:
                violations.append(
                    f"candidate '{cand.id}' carries stage '{cand.stage}' "
                    f"but sits in stage '{stage.kind}'"
                )
    seen_names: set[str] = set()
    for spec in space.hyperparameters:
        if spec.name in seen_names:
            violations.append(f"hyperparameter '{spec.name}' is not unique")
        seen_names.add(spec.name)
        violations.extend(_validate_hyperparameter(spec))

    cls = space.classification
    if cls.modality not in MODALITIES:
        violations.append(f"classification: unknown modality {cls.modality!r}")
    if cls.category not in CATEGORIES:
        violations.append(f"classification: unknown category {cls.category!r}")
    if cls.output_format not in OUTPUT_FORMATS:
        violations.append(f"classification: unknown output format {cls.output_format!r}")
    if cls.output_format != "n/a" and not cls.is_classification():
        violations.append(
            "classification: output format set on a non-classification category"
        )
    if cls.is_classification() and cls.output_format == "n/a":
        violations.append("classification: classification category requires an output format")

    if cls.is_deep_learning() and space.hyperparameters != default_finetune_space():
        violations.append(
            "deep-learning space must carry exactly the default fine-tuning hyperparameters"
        )
    return violations


@dataclass(frozen=True)
class Solution:
    """One candidate choice per stage plus a full hyperparameter assignment."""

    choices: tuple[tuple[str, str], ...]  # (stage kind, candidate id), stage order
    hyperparameters: tuple[tuple[str, float | int | str], ...]

    def choice(self, stage_kind: str) -> str:
        for kind, cid in self.choices:
            if kind == stage_kind:
                return cid
        raise KeyError(stage_kind)

    def hyperparameter(self, name: str):
        for key, value in self.hyperparameters:
            if key == name:
                return value
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "choices": dict(self.choices),
            "hyperparameters": dict(self.hyperparameters),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "Solution":
        return cls(
            choices=tuple((k, v) for k, v in payload["choices"].items()),
            hyperparameters=tuple((k, v) for k, v in payload["hyperparameters"].items()),
        )

    def key(self) -> str:
        """Canonical string identity, stable under field ordering."""
        return json.dumps(
            {"choices": sorted(self.choices), "hyperparameters": sorted(self.hyperparameters)},
            sort_keys=True,
        )


def sample_hyperparameter(spec: HyperparameterSpec, rng: np.random.Generator):
    if spec.kind == "categorical":
        return spec.choices[int(rng.integers(len(spec.choices)))]
    if spec.scale == "log":
        value = math.exp(rng.uniform(math.log(spec.low), math.log(spec.high)))
    else:
        value = rng.uniform(spec.low, spec.high)
    if spec.kind == "integer":
        return int(min(max(round(value), math.ceil(spec.low)), math.floor(spec.high)))
    return float(value)


def sample_solution(space: SearchSpace, rng: np.random.Generator) -> Solution:
    """Draw one solution: uniform over candidates, uniform-in-scale over ranges."""
    choices = tuple(
        (stage.kind, stage.candidates[int(rng.integers(len(stage.candidates)))].id)
        for stage in space.stages
    )
    hypers = tuple(
        (spec.name, sample_hyperparameter(spec, rng)) for spec in space.hyperparameters
    )
    return Solution(choices=choices, hyperparameters=hypers)


def solution_violations(solution: Solution, space: SearchSpace) -> list[str]:
    """Check a solution against its space (one choice per stage, values in range)."""
    out: list[str] = []
    chosen = dict(solution.choices)
    for stage in space.stages:
        cid = chosen.pop(stage.kind, None)
        if cid is None:
            out.append(f"no choice for stage '{stage.kind}'")
        elif cid not in {c.id for c in stage.candidates}:
            out.append(f"choice '{cid}' is not a candidate of stage '{stage.kind}'")
    for kind in chosen:
        out.append(f"choice for unknown stage '{kind}'")
    assigned = dict(solution.hyperparameters)
    for spec in space.hyperparameters:
        if spec.name not in assigned:
            out.append(f"missing hyperparameter '{spec.name}'")
            continue
        value = assigned.pop(spec.name)
        if spec.kind == "categorical":
            if value not in spec.choices:
                out.append(f"hyperparameter '{spec.name}': {value!r} not in choices")
        else:
            if not (spec.low <= value <= spec.high):
                out.append(f"hyperparameter '{spec.name}': {value!r} outside range")
            if spec.kind == "integer" and not float(value).is_integer():
                out.append(f"hyperparameter '{spec.name}': {value!r} is not an integer")
    for name in assigned:
        out.append(f"assignment for unknown hyperparameter '{name}'")
    return out


@dataclass(frozen=True)
class CandidateNetwork:
    """Verified candidate ids per stage; one pick per stage is a program."""

    stages: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("candidate network requires at least one stage")


def count_pathways(network: CandidateNetwork) -> int:
    """Number of assemblable programs: product of verified counts per stage."""
    total = 1
    for _, candidate_ids in network.stages:
        total *= len(candidate_ids)
    return total


@dataclass(frozen=True)
class OptimizationRecord:
    """One evaluated (or pruned, or failed) solution in the history."""

    solution: Solution
    budget: float
    wall_time: float
    status: str  # evaluated | pruned | failed
    score: float | None = None

    def __post_init__(self):
        if self.status not in ("evaluated", "pruned", "failed"):
            raise ValueError(f"unknown record status: {self.status!r}")
        if (self.score is not None) != (self.status == "evaluated"):
            raise ValueError("record score must be present iff status is 'evaluated'")

    def as_dict(self) -> dict:
        return {
            "v": HISTORY_SCHEMA_VERSION,
            "solution": self.solution.as_dict(),
            "score": self.score,
            "budget": self.budget,
            "wall_time": self.wall_time,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "OptimizationRecord":
        return cls(
            solution=Solution.from_dict(payload["solution"]),
            budget=payload["budget"],
            wall_time=payload["wall_time"],
            status=payload["status"],
            score=payload["score"],
        )


class OptimizationHistory:
    """Append-only record sequence with a single serialized writer."""

    def __init__(self, records: Iterable[OptimizationRecord] = ()):
        self._records: list[OptimizationRecord] = list(records)
        self._lock = threading.Lock()

    def append(self, record: OptimizationRecord) -> None:
        with self._lock:
            self._records.append(record)

    @property
    def records(self) -> tuple[OptimizationRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, OptimizationHistory) and self.records == other.records

    def best(self, metric: MetricSpec) -> OptimizationRecord | None:
        """History optimum under the metric direction; earliest record wins ties."""
        best: OptimizationRecord | None = None
        for record in self.records:
            if record.status != "evaluated":
                continue
            if best is None or metric.better(record.score, best.score):
                best = record
        return best

    def save(self, path: str | Path, meta: Mapping | None = None) -> None:
        """Write line-delimited records; optional header line carries run metadata."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            if meta is not None:
                header = {"v": HISTORY_SCHEMA_VERSION, "kind": "header", **dict(meta)}
                fh.write(json.dumps(header, sort_keys=True) + "\n")
            for record in self.records:
                fh.write(json.dumps(record.as_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OptimizationHistory":
        history, _ = cls.load_with_meta(path)
        return history

    @classmethod
    def load_with_meta(cls, path: str | Path) -> tuple["OptimizationHistory", dict | None]:
        records: list[OptimizationRecord] = []
        meta: dict | None = None
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    payload = json.loads(line)
                    if payload.get("kind") == "header":
                        meta = payload
                        continue
                    records.append(OptimizationRecord.from_dict(payload))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"corrupt history line {lineno}: {exc}") from exc
        return cls(records), meta


def load_task_file(path: str | Path) -> TaskDescription:
    """Read a task description document (YAML or JSON, same key layout)."""
    path = Path(path)
    payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(payload, Mapping):
        raise ValueError(f"task file {path} does not hold a mapping")
    try:
        metric_block = payload["metric"]
        name = metric_block["name"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"task file {path} is missing metric.name") from exc
    direction = metric_block.get("direction") or infer_direction(name)
    workspace = payload.get("workspace", ".")
    if not Path(workspace).is_absolute():
        workspace = str((path.parent / workspace).resolve())
    return TaskDescription(
        text=payload.get("text", ""),
        workspace=workspace,
        metric=MetricSpec(name=name, direction=direction),
        modality_hint=payload.get("modality_hint"),
    )
