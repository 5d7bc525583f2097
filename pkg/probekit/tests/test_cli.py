"""The probe executable: request/result document round trips."""
from __future__ import annotations

import json
import math
import subprocess
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from probekit.cli import main, run_request

TORCH_MODEL_MODULE = textwrap.dedent("""
    import torch
    from torch import nn

    def build_model(config):
        torch.manual_seed(7)
        return nn.Sequential(nn.Linear(4, 8), nn.ReLU(), nn.Linear(8, 2))
""").strip()


def write_request(tmp_path: Path, payload: dict) -> Path:
    path = tmp_path / "probe_request.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestRunRequest:
    def test_zoo_params(self):
        result = run_request({
            "schema_version": 1,
            "model": {"kind": "zoo", "name": "linear8x3"},
            "data": {"kind": "none"},
            "proxies": ["params"],
            "seed": 0,
        })
        assert result["schema_version"] == 1
        assert result["scores"]["params"] == 27.0
        assert result["param_count"] == 27
        assert result["errors"] == {}

    def test_zoo_full_battery(self):
        result = run_request({
            "schema_version": 1,
            "model": {"kind": "zoo", "name": "mlp4x5x2"},
            "data": {"kind": "none"},
            "proxies": ["flops", "params", "naswot", "synflow"],
            "seed": 3,
        })
        assert result["errors"] == {}
        assert set(result["scores"]) == {"flops", "params", "naswot", "synflow"}
        assert all(math.isfinite(v) for v in result["scores"].values())

    def test_unknown_proxy_gets_error_entry(self):
        result = run_request({
            "schema_version": 1,
            "model": {"kind": "zoo", "name": "linear8x3"},
            "data": {"kind": "none"},
            "proxies": ["params", "mystery"],
            "seed": 0,
        })
        assert result["scores"]["params"] == 27.0
        assert "mystery" in result["errors"]

    def test_every_requested_proxy_answered(self):
        result = run_request({
            "schema_version": 1,
            "model": {"kind": "zoo", "name": "linear8x3"},
            "data": {"kind": "none"},
            "proxies": ["flops", "params", "naswot", "synflow"],
            "seed": 1,
        })
        answered = set(result["scores"]) | set(result["errors"])
        assert answered == {"flops", "params", "naswot", "synflow"}
        # linear8x3 has no rectifier, so the overlap score reports an error
        assert "naswot" in result["errors"]


class TestCommand:
    def run_cli(self, request_path: Path, tmp_path: Path) -> dict:
        result_path = tmp_path / "probe_result.json"
        assert main([str(request_path), str(result_path)]) == 0
        return json.loads(result_path.read_text(encoding="utf-8"))

    def test_file_model_with_npz_data(self, tmp_path):
        (tmp_path / "model.py").write_text(TORCH_MODEL_MODULE, encoding="utf-8")
        rng = np.random.default_rng(5)
        np.savez(tmp_path / "data.npz", input_0=rng.normal(size=(6, 4)),
                 output_0=rng.integers(0, 2, size=6))
        request = write_request(tmp_path, {
            "schema_version": 1,
            "model": {"kind": "file", "path": str(tmp_path / "model.py")},
            "data": {"kind": "file", "path": str(tmp_path / "data.npz")},
            "proxies": ["flops", "params", "naswot", "synflow"],
            "seed": 0,
        })
        result = self.run_cli(request, tmp_path)
        assert result["errors"] == {}
        assert result["scores"]["params"] == 4 * 8 + 8 + 8 * 2 + 2
        assert result["scores"]["flops"] == 6 * (4 * 8 + 8 * 2)
        assert all(math.isfinite(v) for v in result["scores"].values())

    def test_broken_model_file_errors_every_proxy(self, tmp_path):
        (tmp_path / "model.py").write_text("raise RuntimeError('nope')",
                                           encoding="utf-8")
        request = write_request(tmp_path, {
            "schema_version": 1,
            "model": {"kind": "file", "path": str(tmp_path / "model.py")},
            "data": {"kind": "none"},
            "proxies": ["params", "synflow"],
            "seed": 0,
        })
        result = self.run_cli(request, tmp_path)
        assert set(result["errors"]) == {"params", "synflow"}
        assert result["scores"] == {}

    def test_usage_error(self):
        assert main([]) == 2

    def test_module_invocation(self, tmp_path):
        request = write_request(tmp_path, {
            "schema_version": 1,
            "model": {"kind": "zoo", "name": "linear8x3"},
            "data": {"kind": "none"},
            "proxies": ["params"],
            "seed": 0,
        })
        result_path = tmp_path / "out.json"
        proc = subprocess.run(
            [sys.executable, "-m", "probekit.cli", str(request), str(result_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(result_path.read_text())["scores"]["params"] == 27.0


class TestOrchestratorIntegration:
    def test_probe_check_through_orchestrator_cli(self, tmp_path):
        pytest.importorskip("mlforge")
        out = tmp_path / "check"
        proc = subprocess.run(
            [sys.executable, "-m", "mlforge.cli", "probe-check",
             "--probe-cmd", f"{sys.executable} -m probekit.cli",
             "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr + proc.stdout
        doc = json.loads((out / "probe_check.json").read_text())
        assert doc["ok"] is True
        assert doc["result"]["scores"]["params"] == 27.0
