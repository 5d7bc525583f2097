"""CLI subcommands: exit codes, reports, replay reproducibility."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from mlforge.backend import CallableBackend, RecordingBackend, TranscriptStore
from mlforge.cli import main
from mlforge.search import RunLimits, run_pipeline
from mlforge.search.driver import RunOptions
from mlforge.task import (
    OptimizationHistory,
    OptimizationRecord,
    Solution,
    load_task_file,
)

from conftest import (
    DP_ALL_CODE,
    LSQ_MODEL_CODE,
    PLAN_PAYLOAD,
    POST_IDENTITY_CODE,
    SPACE_PAYLOAD,
    SYNTHETIC_CODE,
    code_response,
    route_fixture_request,
    sentinel_json,
    write_regression_workspace,
    write_task_file,
)

FAKE_PROBE = Path(__file__).parent / "fake_probe.py"


@pytest.fixture
def task_file(tmp_path):
    workspace = write_regression_workspace(tmp_path / "workspace")
    return write_task_file(tmp_path / "task.yaml", workspace)


class TestUsage:
    def test_missing_task_file(self, tmp_path):
        code = main(["run", "--task", str(tmp_path / "nope.yaml"),
                     "--backend", "scripted", "--script", "also-missing.json",
                     "--limit-evaluations", "1", "--out", str(tmp_path / "o")])
        assert code == 2

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_replay_requires_transcript(self, task_file, tmp_path):
        code = main(["run", "--task", str(task_file), "--backend", "replay",
                     "--limit-evaluations", "1", "--out", str(tmp_path / "o")])
        assert code == 2


class TestSimulate:
    def test_writes_table_and_plot(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--out", str(out), "--trials", "2000",
                     "--seed", "3"]) == 0
        table = (out / "scaling_table.tsv").read_text()
        assert table.startswith("# epsilon=0.9")
        lines = table.splitlines()
        assert lines[1].split("\t")[:4] == ["length", "monolithic", "modular",
                                            "ratio"]
        row5 = lines[2].split("\t")
        assert row5[1] == "1.69" and row5[2] == "3.70"
        assert (out / "scaling_plot.dat").exists()

    def test_certain_generation_trivial(self, tmp_path):
        out = tmp_path / "sim1"
        assert main(["simulate", "--epsilon", "1.0", "--out", str(out)]) == 0
        rows = (out / "scaling_table.tsv").read_text().splitlines()[2:]
        assert all(r.split("\t")[1] == "1.00" for r in rows)

    def test_invalid_grid_is_usage_error(self, tmp_path):
        assert main(["simulate", "--lengths", "10,5",
                     "--out", str(tmp_path / "x")]) == 2


class TestGenerate:
    def make_script(self, tmp_path, schedule_responses, default=None):
        payload = {"responses": schedule_responses}
        if default is not None:
            payload["default"] = default
        script = tmp_path / "script.json"
        script.write_text(json.dumps(payload), encoding="utf-8")
        return script

    def test_constant_four_attempt_schedule(self, task_file, tmp_path):
        setup = [sentinel_json(SPACE_PAYLOAD), sentinel_json(PLAN_PAYLOAD),
                 code_response(SYNTHETIC_CODE)]
        per_program = ["no code block here",  # dp attempt 1 fails (syntax)
                       code_response(DP_ALL_CODE),
                       code_response(LSQ_MODEL_CODE),
                       code_response(POST_IDENTITY_CODE)]
        script = self.make_script(tmp_path, setup + per_program * 25)
        out = tmp_path / "gen"
        code = main(["generate", "--task", str(task_file),
                     "--backend", "scripted", "--script", str(script),
                     "--attempt-budget", "100", "--synthetic-versions", "1",
                     "--no-reflection", "--seed", "5", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "attempts_report.json").read_text())
        assert report["successes"] == 25
        assert report["mean_attempts"] == pytest.approx(4.0)
        assert report["std_attempts"] == pytest.approx(0.0)
        assert report["display"] == "4.00 ± 0.00"

    def test_never_passing_mock_yields_dash(self, task_file, tmp_path):
        setup = [sentinel_json(SPACE_PAYLOAD), sentinel_json(PLAN_PAYLOAD),
                 code_response(SYNTHETIC_CODE)]
        script = self.make_script(tmp_path, setup, default="nothing useful")
        out = tmp_path / "gen0"
        code = main(["generate", "--task", str(task_file),
                     "--backend", "scripted", "--script", str(script),
                     "--attempt-budget", "100", "--synthetic-versions", "1",
                     "--no-reflection", "--seed", "5", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "attempts_report.json").read_text())
        assert report["successes"] == 0
        assert report["display"] == "-"
        assert report["mean_attempts"] is None


class TestRunAndReport:
    def record_transcript(self, task_file, tmp_path) -> Path:
        transcript = tmp_path / "transcript.jsonl"
        task = load_task_file(task_file)
        backend = RecordingBackend(CallableBackend(route_fixture_request),
                                   TranscriptStore(transcript))
        run_pipeline(task, backend, "random", RunLimits(max_evaluations=6), 7,
                     tmp_path / "recording",
                     RunOptions(synthetic_versions=2, use_reflection=False))
        return transcript

    def test_replay_run_reproduces_reports_byte_identically(self, task_file,
                                                            tmp_path):
        transcript = self.record_transcript(task_file, tmp_path)
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(["run", "--task", str(task_file),
                         "--backend", "replay", "--transcript", str(transcript),
                         "--strategy", "random", "--limit-evaluations", "6",
                         "--seed", "7", "--synthetic-versions", "2",
                         "--no-reflection", "--out", str(out)])
            assert code == 0
            outputs.append(out)
        report_a = (outputs[0] / "report.json").read_bytes()
        report_b = (outputs[1] / "report.json").read_bytes()
        assert report_a == report_b
        best_a = sorted((outputs[0] / "best").iterdir())
        best_b = sorted((outputs[1] / "best").iterdir())
        assert [p.name for p in best_a] == [p.name for p in best_b]
        for pa, pb in zip(best_a, best_b):
            assert pa.read_bytes() == pb.read_bytes()
        report = json.loads(report_a)
        assert report["best"]["solution"]["choices"] == {
            "data-preparation": "dp-all",
            "modeling": "least-squares",
            "post-processing": "identity-decode",
        }

    def test_report_command_ranks_and_fp(self, task_file, tmp_path):
        transcript = self.record_transcript(task_file, tmp_path)
        out = tmp_path / "run"
        assert main(["run", "--task", str(task_file),
                     "--backend", "replay", "--transcript", str(transcript),
                     "--strategy", "random", "--limit-evaluations", "6",
                     "--seed", "7", "--synthetic-versions", "2",
                     "--no-reflection", "--out", str(out)]) == 0
        # 200 planted samples, all worse than the search best
        best = json.loads((out / "report.json").read_text())["best"]["score"]
        sol = Solution(choices=(("modeling", "m"),), hyperparameters=())
        samples = OptimizationHistory([
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", best + 1.0 + i)
            for i in range(200)
        ])
        samples_path = tmp_path / "samples.jsonl"
        samples.save(samples_path)
        assert main(["report", "--history", str(out),
                     "--samples", str(samples_path),
                     "--metric-name", "mae", "--metric-direction", "minimize",
                     ]) == 0
        report = json.loads((out / "rank_report.json").read_text())
        assert report["cost_25"]["rank"] == 1
        assert report["cost_100"]["rank"] == 1
        assert report["fp"]["verified"] >= 1
        assert report["fp"]["fp_after"] <= report["fp"]["fp_before"]

    def test_report_handles_empty_history(self, tmp_path):
        out = tmp_path / "empty"
        out.mkdir()
        OptimizationHistory().save(out / "history.jsonl")
        assert main(["report", "--history", str(out)]) == 0
        report = json.loads((out / "rank_report.json").read_text())
        assert report["empty"] is True

    def test_report_corrupt_history_names_line(self, tmp_path, capsys):
        out = tmp_path / "corrupt"
        out.mkdir()
        (out / "history.jsonl").write_text("garbage\n", encoding="utf-8")
        code = main(["report", "--history", str(out)])
        assert code == 2
        assert "line 1" in capsys.readouterr().err


class TestProbeCheck:
    def test_fake_probe_round_trip(self, tmp_path):
        out = tmp_path / "probe"
        code = main(["probe-check",
                     "--probe-cmd", f"{sys.executable} {FAKE_PROBE}",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "probe_check.json").read_text())
        assert doc["ok"] is True
        assert doc["result"]["scores"]["params"] == 27

    def test_broken_probe_is_sandbox_error(self, tmp_path):
        out = tmp_path / "probe_bad"
        code = main(["probe-check",
                     "--probe-cmd", f"{sys.executable} -c exit(1)",
                     "--out", str(out)])
        assert code == 4


class TestZeroEvaluationLimit:
    def test_generation_only_run_reports_empty_history(self, task_file, tmp_path):
        # Limit of zero evaluations: the pipeline still generates the search
        # space, plan, synthetic data, and modeling modules, then reports an
        # empty history gracefully.
        transcript = tmp_path / "transcript.jsonl"
        task = load_task_file(task_file)
        backend = RecordingBackend(CallableBackend(route_fixture_request),
                                   TranscriptStore(transcript))
        run_pipeline(task, backend, "random", RunLimits(max_evaluations=0), 7,
                     tmp_path / "rec0",
                     RunOptions(synthetic_versions=1, use_reflection=False))
        out = tmp_path / "zero"
        code = main(["run", "--task", str(task_file),
                     "--backend", "replay", "--transcript", str(transcript),
                     "--strategy", "random", "--limit-evaluations", "0",
                     "--seed", "7", "--synthetic-versions", "1",
                     "--no-reflection", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["best"] is None
        assert report["evaluations"] == 0
        history = OptimizationHistory.load(out / "history.jsonl")
        assert len(history) == 0
        # modeling modules were still generated up front
        assert any(key.startswith("modeling:") for key in report["attempts"])
