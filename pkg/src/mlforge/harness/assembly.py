"""Mechanical program assembly and the post-assembly execution gate."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import AssemblyError
from ..generation import MODULE_KINDS, ModuleArtifact
from ..task import MetricSpec
from .sandbox import SandboxReport, SandboxRequest, make_input_files, \
    python_command, run_sandbox

MODULE_FILENAMES = {
    "data-preparation": "data_preparation.py",
    "modeling": "modeling.py",
    "post-processing": "post_processing.py",
}
PREWRITTEN_FILES = ("trainer.py", "evaluation.py")
STAGE_MARKERS = tuple(f"::stage::{kind}::done" for kind in MODULE_KINDS)

GATE_LOG_SCHEMA_VERSION = 1


def _runner_text(name: str) -> str:
    return resources.files("mlforge.harness.runners").joinpath(name).read_text(
        encoding="utf-8"
    )


@dataclass(frozen=True)
class ProgramAssembly:
    """Verified artifacts wired to the pre-written harness; no backend calls."""

    artifacts: tuple[ModuleArtifact, ...]  # stage order
    prewritten: tuple[tuple[str, str], ...]
    entry_script: str

    def pathway(self) -> tuple[tuple[str, str], ...]:
        return tuple((a.kind, a.candidate_id) for a in self.artifacts)

    def pathway_key(self) -> str:
        return "+".join(f"{kind}:{cid}" for kind, cid in self.pathway())

    def files(self) -> dict[str, str]:
        out = {MODULE_FILENAMES[a.kind]: a.code for a in self.artifacts}
        out.update(dict(self.prewritten))
        out["main.py"] = self.entry_script
        return out


def assemble_program(artifacts: Sequence[ModuleArtifact],
                     prewritten: Mapping[str, str] | None = None) -> ProgramAssembly:
    """Wire one verified artifact per stage into an executable program."""
    by_kind: dict[str, ModuleArtifact] = {}
    for artifact in artifacts:
        if not artifact.verified:
            raise AssemblyError(
                f"artifact '{artifact.candidate_id}' ({artifact.kind}) is not verified"
            )
        if artifact.kind in by_kind:
            raise AssemblyError(f"duplicate artifact for stage '{artifact.kind}'")
        by_kind[artifact.kind] = artifact
    missing = [kind for kind in MODULE_KINDS if kind not in by_kind]
    if missing:
        raise AssemblyError(f"missing artifacts for stages: {missing}")
    prewritten_files = dict(prewritten) if prewritten is not None else {
        name: _runner_text(name) for name in PREWRITTEN_FILES
    }
    return ProgramAssembly(
        artifacts=tuple(by_kind[kind] for kind in MODULE_KINDS),
        prewritten=tuple(sorted(prewritten_files.items())),
        entry_script=_runner_text("entry_main.py"),
    )


def materialize_assembly(assembly: ProgramAssembly, outdir: str | Path) -> Path:
    """Write the assembled program to disk; returns the entry script path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, content in sorted(assembly.files().items()):
        (outdir / name).write_text(content, encoding="utf-8")
    return outdir / "main.py"


@dataclass(frozen=True)
class GateOutcome:
    classification: str  # valid | false-positive
    reason: str
    score: float | None
    report: SandboxReport

    @property
    def valid(self) -> bool:
        return self.classification == "valid"


def run_assembly(assembly: ProgramAssembly, *, workdir: str | Path,
                 workspace_files: Mapping[str, bytes], metric: MetricSpec,
                 budget: float, max_budget: float,
                 hyperparameters: Mapping | None = None,
                 seed: int = 0, wall_time: float = 120.0,
                 memory_limit_mb: int | None = 2048,
                 early_stopping: Mapping | None = None) -> SandboxReport:
    """Execute an assembled program in the sandbox at the given budget."""
    run_config = {
        "workspace": "workspace",
        "budget": budget,
        "max_budget": max_budget,
        "hyperparameters": dict(hyperparameters or {}),
        "metric": {"name": metric.name, "direction": metric.direction},
        "seed": seed,
        "val_fraction": 0.25,
        "early_stopping": dict(early_stopping or {"patience": 3, "min_delta": 0.0}),
    }
    files: dict[str, bytes | str] = dict(assembly.files())
    for rel, content in workspace_files.items():
        files[f"workspace/{rel}"] = content
    files["run_config.json"] = json.dumps(run_config, sort_keys=True)
    return run_sandbox(SandboxRequest(
        command=python_command("main.py"),
        workdir=str(workdir),
        input_files=make_input_files(files),
        wall_time_limit=wall_time,
        memory_limit_mb=memory_limit_mb,
    ))


def integration_gate(assembly: ProgramAssembly, *, workdir: str | Path,
                     workspace_files: Mapping[str, bytes], metric: MetricSpec,
                     budget: float = 1.0, max_budget: float = 1.0,
                     hyperparameters: Mapping | None = None,
                     seed: int = 0, wall_time: float = 120.0,
                     memory_limit_mb: int | None = 2048) -> GateOutcome:
    """End-to-end execution check on small fixture data.

    Valid means: the program ran to completion without interpreter errors,
    produced a score, and every stage marker appeared (so all three stages
    actually executed). Anything else, including a timeout, is classified a
    false positive of the unit tests.
    """
    report = run_assembly(
        assembly, workdir=workdir, workspace_files=workspace_files, metric=metric,
        budget=budget, max_budget=max_budget, hyperparameters=hyperparameters,
        seed=seed, wall_time=wall_time, memory_limit_mb=memory_limit_mb,
    )
    if report.status == "timed-out":
        return GateOutcome("false-positive", "execution timed out", None, report)
    if report.status != "ok":
        reason = (report.stderr or report.stdout)[-2000:] or "nonzero exit"
        return GateOutcome("false-positive", reason, None, report)
    doc = report.result_document
    if doc is None or "score" not in doc:
        return GateOutcome("false-positive", "no result document with a score",
                           None, report)
    missing = [m for m in STAGE_MARKERS if m not in report.stdout]
    if missing:
        return GateOutcome("false-positive", f"missing stage markers: {missing}",
                           None, report)
    return GateOutcome("valid", "", float(doc["score"]), report)


@dataclass(frozen=True)
class FpReport:
    """False-positive rates over the unit-test-verified corpus."""

    verified: int
    fp_before: float
    fp_after: float

    def __post_init__(self):
        if self.fp_after > self.fp_before + 1e-12:
            raise ValueError("fp_after cannot exceed fp_before")


class FalsePositiveBook:
    """Serialized accumulator of gate outcomes for FP-rate reporting.

    Both rates share the verified-program denominator: before counts every
    verified program known to be invalid (caught by the gate or labeled so),
    after counts only the invalid ones the gate still let through.
    """

    def __init__(self):
        self._rows: list[dict] = []
        self._lock = threading.Lock()

    def record(self, pathway_key: str, gate_valid: bool,
               ground_truth_valid: bool | None = None, reason: str = "") -> None:
        with self._lock:
            self._rows.append({
                "v": GATE_LOG_SCHEMA_VERSION,
                "pathway": pathway_key,
                "gate_valid": bool(gate_valid),
                "ground_truth_valid": ground_truth_valid,
                "reason": reason,
            })

    @property
    def rows(self) -> tuple[dict, ...]:
        with self._lock:
            return tuple(dict(r) for r in self._rows)

    def report(self) -> FpReport:
        rows = self.rows
        verified = len(rows)
        if verified == 0:
            return FpReport(0, 0.0, 0.0)
        invalid_before = sum(
            1 for r in rows
            if (not r["gate_valid"]) or r["ground_truth_valid"] is False
        )
        invalid_after = sum(
            1 for r in rows if r["gate_valid"] and r["ground_truth_valid"] is False
        )
        return FpReport(verified, invalid_before / verified, invalid_after / verified)

    def save(self, path: str | Path, meta: Mapping | None = None) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            if meta is not None:
                header = {"v": GATE_LOG_SCHEMA_VERSION, "kind": "header",
                          **dict(meta)}
                fh.write(json.dumps(header, sort_keys=True) + "\n")
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FalsePositiveBook":
        book = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row.get("kind") == "header":
                    continue
                book._rows.append(row)
        return book
