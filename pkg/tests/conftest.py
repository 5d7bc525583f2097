"""Shared fixtures: a toy tabular regression world driven by scripted backends."""
from __future__ import annotations

import json
import textwrap
from pathlib import Path

import numpy as np
import pytest

from mlforge.backend import CallableBackend
from mlforge.prompts import SENTINEL_BEGIN, SENTINEL_END
from mlforge.task import MetricSpec, TaskDescription


def sentinel_json(payload: dict) -> str:
    return f"{SENTINEL_BEGIN}\n{json.dumps(payload)}\n{SENTINEL_END}"


def code_response(code: str) -> str:
    return f"Here is the module:\n```python\n{textwrap.dedent(code).strip()}\n```\n"


SPACE_PAYLOAD = {
    "classification": {
        "modality": "tabular",
        "category": "single-output regression",
        "output_format": "n/a",
    },
    "stages": [
        {"kind": "data-preparation", "suggestions": [
            {"id": "dp-first", "description": "use only the first raw feature"},
            {"id": "dp-all", "description": "use every raw feature column"},
        ]},
        {"kind": "modeling", "suggestions": [
            {"id": "mean-predictor", "description": "predict the training mean"},
            {"id": "least-squares", "description": "ordinary least squares with bias"},
        ]},
        {"kind": "post-processing", "suggestions": [
            {"id": "identity-decode", "description": "pass predictions through"},
        ]},
    ],
    "hyperparameters": [
        {"name": "ridge", "kind": "real", "scale": "linear", "range": [0.0, 1.0]},
    ],
}

PLAN_PAYLOAD = {
    "domain": "tabular",
    "inputs": [{"name": "features", "rank": 2, "dims": [], "dtype": "float"}],
    "outputs": [{"name": "target", "rank": 1, "dims": [], "dtype": "float"}],
    "isomorphic_groups": [],
}

SYNTHETIC_CODE = """
    import numpy as np

    def generate(seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(20, 4))
        y = rng.normal(size=20)
        return {"inputs": [X], "outputs": [y]}
"""

DP_FIRST_CODE = """
    import os
    import numpy as np

    def prepare_data(workspace):
        raw = np.loadtxt(os.path.join(workspace, "data.csv"),
                         delimiter=",", skiprows=1)
        return {"inputs": [raw[:, :1]], "outputs": [raw[:, -1]]}
"""

DP_ALL_CODE = """
    import os
    import numpy as np

    def prepare_data(workspace):
        raw = np.loadtxt(os.path.join(workspace, "data.csv"),
                         delimiter=",", skiprows=1)
        return {"inputs": [raw[:, :-1]], "outputs": [raw[:, -1]]}
"""

MEAN_MODEL_CODE = """
    import numpy as np

    class MeanModel:
        def __init__(self):
            self.mean = 0.0

        def fit(self, inputs, outputs):
            self.mean = float(np.mean(outputs[0]))

        def predict(self, inputs):
            return [np.full(len(inputs[0]), self.mean)]

    def build_model(config):
        return MeanModel()
"""

LSQ_MODEL_CODE = """
    import numpy as np

    class LeastSquares:
        def __init__(self):
            self.weights = None

        def fit(self, inputs, outputs):
            X = np.asarray(inputs[0], dtype=float)
            ones = np.ones((len(X), 1))
            A = np.hstack([X, ones])
            self.weights, *_ = np.linalg.lstsq(A, np.asarray(outputs[0]), rcond=None)

        def predict(self, inputs):
            X = np.asarray(inputs[0], dtype=float)
            ones = np.ones((len(X), 1))
            return [np.hstack([X, ones]) @ self.weights]

    def build_model(config):
        return LeastSquares()
"""

POST_IDENTITY_CODE = """
    import numpy as np

    def postprocess(predictions):
        return [np.asarray(predictions[0], dtype=float).ravel()]
"""

MODULE_CODES = {
    "dp-first": DP_FIRST_CODE,
    "dp-all": DP_ALL_CODE,
    "mean-predictor": MEAN_MODEL_CODE,
    "least-squares": LSQ_MODEL_CODE,
    "identity-decode": POST_IDENTITY_CODE,
}


def route_fixture_request(messages) -> str:
    """Content-aware scripted responses for the toy regression world."""
    text = messages[-1].content
    if "configuring an automated machine learning run" in text:
        return sentinel_json(SPACE_PAYLOAD)
    if "data contract every module" in text:
        return sentinel_json(PLAN_PAYLOAD)
    if "produces synthetic data" in text or "synthetic-data program failed" in text:
        return code_response(SYNTHETIC_CODE)
    for candidate_id, code in MODULE_CODES.items():
        if f"id: {candidate_id}" in text:
            return code_response(code)
    if "reflect on what went wrong" in text:
        return "The code likely violated the data contract; fix the shapes."
    raise AssertionError(f"fixture backend got an unexpected request:\n{text[:400]}")


@pytest.fixture
def fixture_backend():
    return CallableBackend(route_fixture_request)


def write_regression_workspace(root: Path, rows: int = 120, seed: int = 5) -> Path:
    """CSV raw data where all four features matter, so dp-all + least-squares
    is the planted-best pathway."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, 4))
    y = 2.0 * X[:, 0] - 1.5 * X[:, 1] + 0.5 * X[:, 2] + 3.0 * X[:, 3]
    y = y + 0.05 * rng.normal(size=rows)
    root.mkdir(parents=True, exist_ok=True)
    header = "f0,f1,f2,f3,target"
    table = np.column_stack([X, y])
    lines = [header] + [",".join(f"{v:.6f}" for v in row) for row in table]
    (root / "data.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root


@pytest.fixture
def regression_task(tmp_path) -> TaskDescription:
    workspace = write_regression_workspace(tmp_path / "workspace")
    return TaskDescription(
        text="Predict the target column from the four feature columns in data.csv. "
             "Report mean absolute error.",
        workspace=str(workspace),
        metric=MetricSpec(name="mae", direction="minimize"),
        modality_hint="tabular",
    )


def write_task_file(path: Path, workspace: Path) -> Path:
    path.write_text(
        "text: |\n"
        "  Predict the target column from the four feature columns in data.csv.\n"
        "  Report mean absolute error.\n"
        f"workspace: {workspace}\n"
        "metric:\n"
        "  name: mae\n"
        "  direction: minimize\n"
        "modality_hint: tabular\n",
        encoding="utf-8",
    )
    return path
