"""Backend-generated synthetic-data programs, verified before use."""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

from .. import prompts
from ..backend import Session
from ..errors import SyntheticDataExhaustedError
from .checks import UnitTestSuite
from .plan import DataContractPlan
from .sandbox import SandboxRequest, make_input_files, python_command, run_sandbox

import json


@dataclass(frozen=True)
class SyntheticDataProgram:
    """One verified generator program plus the dataset it produced."""

    code: str
    seed: int
    digest: str
    data: bytes  # npz payload produced under the program's seed


def _runner_source() -> str:
    from importlib import resources

    return resources.files("mlforge.harness.runners").joinpath(
        "module_runner.py"
    ).read_text(encoding="utf-8")


def verify_synthetic_program(code: str, suite: UnitTestSuite, seed: int,
                             workdir: str | Path, wall_time: float = 120.0,
                             memory_limit_mb: int | None = 2048):
    """Run one candidate generator in the sandbox; returns (report, npz bytes)."""
    config = {
        "mode": "synthetic",
        "module_file": "module.py",
        "suite": suite.to_payload("synthetic"),
        "seed": seed,
        "output_data_file": "data.npz",
    }
    request = SandboxRequest(
        command=python_command("runner.py"),
        workdir=str(workdir),
        input_files=make_input_files({
            "module.py": code,
            "runner.py": _runner_source(),
            "runner_config.json": json.dumps(config, sort_keys=True),
        }),
        wall_time_limit=wall_time,
        memory_limit_mb=memory_limit_mb,
    )
    report = run_sandbox(request)
    data = b""
    data_path = Path(workdir) / "data.npz"
    if data_path.exists():
        data = data_path.read_bytes()
    return report, data


def generate_synthetic_data(session: Session, plan: DataContractPlan,
                            suite: UnitTestSuite, n: int, *,
                            workdir_root: str | Path,
                            base_seed: int = 0,
                            max_attempts_per_program: int = 10,
                            wall_time: float = 120.0,
                            memory_limit_mb: int | None = 2048
                            ) -> list[SyntheticDataProgram]:
    """Produce exactly ``n`` verified synthetic-data programs.

    Each program must pass the suite's synthetic-data validity test inside
    the sandbox before it is accepted; failures are fed back to the backend
    and retried up to the per-program cap.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    workdir_root = Path(workdir_root)
    workdir_root.mkdir(parents=True, exist_ok=True)
    programs: list[SyntheticDataProgram] = []
    prompt = prompts.render(
        "synthetic_data",
        common=prompts.load_template("common_instruction"),
        plan_summary=plan.summary(),
    )
    for index in range(n):
        seed = base_seed + index
        instruction = prompt
        last_diagnostics = ""
        for attempt in range(max_attempts_per_program):
            response = session.ask(instruction)
            code = prompts.extract_code_block(response)
            if code is None:
                last_diagnostics = "response contains no fenced code block"
            else:
                workdir = tempfile.mkdtemp(prefix=f"synthetic_{index}_", dir=workdir_root)
                report, data = verify_synthetic_program(
                    code, suite, seed, workdir, wall_time, memory_limit_mb
                )
                doc = report.result_document
                if doc is not None and doc.get("passed"):
                    programs.append(SyntheticDataProgram(
                        code=code, seed=seed, digest=doc.get("digest", ""), data=data,
                    ))
                    break
                if doc is not None:
                    last_diagnostics = doc.get("diagnostics", "synthetic validity test failed")
                elif report.status == "timed-out":
                    last_diagnostics = "synthetic program timed out"
                else:
                    last_diagnostics = report.stderr[-2000:] or "synthetic program crashed"
            instruction = prompts.render("synthetic_retry", feedback=last_diagnostics)
        else:
            raise SyntheticDataExhaustedError(
                f"no valid synthetic-data program #{index} within "
                f"{max_attempts_per_program} attempts: {last_diagnostics}"
            )
    return programs
