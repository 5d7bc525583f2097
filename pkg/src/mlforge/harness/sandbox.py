"""Process-isolated execution of generated code with resource limits.

Each run gets a private working directory, a scrubbed environment, optional
address-space and CPU limits, and (by default) a socket guard that blocks
network access. The executed command is expected to write a JSON result
document into its working directory; the report carries it back if present.
"""
from __future__ import annotations

import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import SandboxError

RESULT_FILE = "result.json"


@dataclass(frozen=True)
class SandboxRequest:
    command: tuple[str, ...]
    workdir: str
    input_files: tuple[tuple[str, bytes], ...] = ()
    wall_time_limit: float = 120.0
    memory_limit_mb: int | None = 2048
    result_file: str = RESULT_FILE
    allow_network: bool = False


@dataclass(frozen=True)
class SandboxReport:
    status: str  # ok | error | timed-out
    exit_code: int | None
    stdout: str
    stderr: str
    duration: float
    result_document: dict | None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def make_input_files(files: Mapping[str, str | bytes]) -> tuple[tuple[str, bytes], ...]:
    out = []
    for rel, content in sorted(files.items()):
        if isinstance(content, str):
            content = content.encode("utf-8")
        out.append((rel, content))
    return tuple(out)


def _write_inputs(workdir: Path, files: Sequence[tuple[str, bytes]]) -> None:
    for rel, content in files:
        rel_path = Path(rel)
        if rel_path.is_absolute() or ".." in rel_path.parts:
            raise SandboxError(f"input file escapes the working directory: {rel}")
        target = workdir / rel_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)


def _limit_preexec(memory_limit_mb: int | None, cpu_seconds: int):
    import resource as res

    def apply_limits():
        os.setsid()
        if memory_limit_mb is not None:
            limit = memory_limit_mb * 1024 * 1024
            res.setrlimit(res.RLIMIT_AS, (limit, limit))
        res.setrlimit(res.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 5))

    return apply_limits


def run_sandbox(request: SandboxRequest) -> SandboxReport:
    """Execute the request; infrastructure problems raise SandboxError,
    failures of the executed code come back in the report."""
    workdir = Path(request.workdir)
    try:
        workdir.mkdir(parents=True, exist_ok=True)
        _write_inputs(workdir, request.input_files)
        if not request.allow_network:
            guard = resources.files("mlforge.harness.runners").joinpath(
                "sitecustomize.py"
            ).read_text(encoding="utf-8")
            (workdir / "sitecustomize.py").write_text(guard, encoding="utf-8")
    except OSError as exc:
        raise SandboxError(f"cannot stage sandbox directory {workdir}: {exc}") from exc

    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "PYTHONPATH": str(workdir),
        "PYTHONDONTWRITEBYTECODE": "1",
        "HOME": str(workdir),
        "TMPDIR": str(workdir),
        "LANG": "C.UTF-8",
        # Single-threaded numeric kernels: reproducible timings, and spinning
        # worker threads cannot eat the CPU rlimit.
        "OPENBLAS_NUM_THREADS": "1",
        "OMP_NUM_THREADS": "1",
        "MKL_NUM_THREADS": "1",
        "NUMEXPR_NUM_THREADS": "1",
    }
    cpu_seconds = max(1, int(request.wall_time_limit))
    started = time.monotonic()
    try:
        proc = subprocess.run(
            list(request.command),
            cwd=str(workdir),
            env=env,
            capture_output=True,
            text=True,
            timeout=request.wall_time_limit,
            preexec_fn=_limit_preexec(request.memory_limit_mb, cpu_seconds),
        )
        duration = time.monotonic() - started
        status = "ok" if proc.returncode == 0 else "error"
        exit_code: int | None = proc.returncode
        stdout, stderr = proc.stdout, proc.stderr
    except subprocess.TimeoutExpired as exc:
        duration = time.monotonic() - started
        status = "timed-out"
        exit_code = None
        stdout = (exc.stdout or b"").decode("utf-8", "replace") \
            if isinstance(exc.stdout, bytes) else (exc.stdout or "")
        stderr = (exc.stderr or b"").decode("utf-8", "replace") \
            if isinstance(exc.stderr, bytes) else (exc.stderr or "")
    except OSError as exc:
        raise SandboxError(f"failed to launch sandboxed command: {exc}") from exc

    result_document = None
    result_path = workdir / request.result_file
    if result_path.exists():
        try:
            result_document = json.loads(result_path.read_text(encoding="utf-8"))
        except ValueError:
            result_document = None
    return SandboxReport(
        status=status,
        exit_code=exit_code,
        stdout=stdout,
        stderr=stderr,
        duration=duration,
        result_document=result_document,
    )


def python_command(*args: str) -> tuple[str, ...]:
    """Command tuple running the current interpreter inside the sandbox."""
    return (sys.executable, "-B", *args)
