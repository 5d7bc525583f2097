"""Contextual evaluators: sandboxed module verification against the suite."""
from __future__ import annotations

import json
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

from importlib import resources

from ..generation import EvaluationFeedback
from ..task import TaskClassification
from .checks import UnitTestSuite
from .sandbox import SandboxReport, SandboxRequest, make_input_files, \
    python_command, run_sandbox


def load_workspace_files(workspace: str | Path) -> dict[str, bytes]:
    """Snapshot a task workspace as relative-path -> bytes (for sandbox staging)."""
    root = Path(workspace)
    files: dict[str, bytes] = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            files[str(path.relative_to(root))] = path.read_bytes()
    return files


def prediction_mode_for(classification: TaskClassification | None) -> str:
    if classification is None or classification.output_format != "probability labels":
        return "identity"
    if classification.category == "multi-label classification":
        return "as-float"
    return "one-hot"


def feedback_from_report(report: SandboxReport) -> EvaluationFeedback:
    """Translate a sandbox report into generation feedback."""
    doc = report.result_document
    if doc is not None:
        if doc.get("passed"):
            return EvaluationFeedback(passed=True, diagnostics="", phase="execution")
        return EvaluationFeedback(
            passed=False,
            diagnostics=doc.get("diagnostics", "") or "module failed its checks",
            phase=doc.get("phase", "execution"),
        )
    if report.status == "timed-out":
        return EvaluationFeedback(
            passed=False, diagnostics="module run timed out", phase="execution"
        )
    return EvaluationFeedback(
        passed=False,
        diagnostics=(report.stderr or report.stdout)[-2000:] or "module run crashed",
        phase="execution",
    )


class ModuleEvaluator:
    """Runs a candidate module in the sandbox against each dataset until one
    passes; carries the first failure's diagnostics otherwise."""

    def __init__(self, kind: str, suite: UnitTestSuite, *,
                 datasets: Sequence[bytes] = (),
                 raw_files: Mapping[str, bytes] | None = None,
                 workdir_root: str | Path,
                 prediction_mode: str = "identity",
                 hyperparameters: Mapping | None = None,
                 wall_time: float = 120.0,
                 memory_limit_mb: int | None = 2048):
        self.kind = kind
        self.suite = suite
        self.datasets = list(datasets)
        self.raw_files = dict(raw_files or {})
        self.workdir_root = Path(workdir_root)
        self.workdir_root.mkdir(parents=True, exist_ok=True)
        self.prediction_mode = prediction_mode
        self.hyperparameters = dict(hyperparameters or {})
        self.wall_time = wall_time
        self.memory_limit_mb = memory_limit_mb
        self.evaluations = 0
        self.sandbox_runs = 0

    def _runner_source(self) -> str:
        return resources.files("mlforge.harness.runners").joinpath(
            "module_runner.py"
        ).read_text(encoding="utf-8")

    def _run_once(self, code: str, dataset: bytes | None) -> SandboxReport:
        config: dict = {
            "mode": self.kind,
            "module_file": "module.py",
            "suite": self.suite.to_payload(self.kind),
            "hyperparameters": self.hyperparameters,
            "prediction_mode": self.prediction_mode,
        }
        files: dict[str, bytes | str] = {
            "module.py": code,
            "runner.py": self._runner_source(),
        }
        if self.kind == "data-preparation":
            config["workspace"] = "workspace"
            for rel, content in self.raw_files.items():
                files[f"workspace/{rel}"] = content
        else:
            config["data_file"] = "data.npz"
            files["data.npz"] = dataset or b""
        files["runner_config.json"] = json.dumps(config, sort_keys=True)
        workdir = tempfile.mkdtemp(prefix=f"eval_{self.kind}_", dir=self.workdir_root)
        self.sandbox_runs += 1
        return run_sandbox(SandboxRequest(
            command=python_command("runner.py"),
            workdir=workdir,
            input_files=make_input_files(files),
            wall_time_limit=self.wall_time,
            memory_limit_mb=self.memory_limit_mb,
        ))

    def evaluate(self, code: str) -> EvaluationFeedback:
        self.evaluations += 1
        if self.kind == "data-preparation":
            return feedback_from_report(self._run_once(code, None))
        first_failure: EvaluationFeedback | None = None
        for dataset in self.datasets:
            feedback = feedback_from_report(self._run_once(code, dataset))
            if feedback.passed:
                return feedback
            if first_failure is None:
                first_failure = feedback
        return first_failure or EvaluationFeedback(
            passed=False, diagnostics="no synthetic datasets available",
            phase="execution",
        )


def make_contextual_evaluator(kind: str, suite: UnitTestSuite,
                              synthetic: Sequence[bytes], *,
                              raw_files: Mapping[str, bytes] | None = None,
                              workdir_root: str | Path,
                              classification: TaskClassification | None = None,
                              hyperparameters: Mapping | None = None,
                              wall_time: float = 120.0,
                              memory_limit_mb: int | None = 2048) -> ModuleEvaluator:
    """Build the kind-specific evaluator.

    Kinds that consume task data need at least one verified synthetic
    dataset; data preparation is instead exercised on raw files mirroring the
    task's file layout.
    """
    if kind == "data-preparation":
        if not raw_files:
            raise ValueError("data-preparation evaluation requires raw files")
    elif not synthetic:
        raise ValueError(f"evaluation of '{kind}' requires synthetic datasets")
    return ModuleEvaluator(
        kind, suite,
        datasets=synthetic,
        raw_files=raw_files,
        workdir_root=workdir_root,
        prediction_mode=prediction_mode_for(classification),
        hyperparameters=hyperparameters,
        wall_time=wall_time,
        memory_limit_mb=memory_limit_mb,
    )
