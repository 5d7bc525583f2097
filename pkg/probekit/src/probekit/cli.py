"""Probe executable: request document in, result document out.

Usage: probekit-probe <request.json> <result.json>
       python -m probekit.cli <request.json> <result.json>

The request names a model (a file defining ``build_model(config)`` or a zoo
entry), a data reference, the proxies to score, and a seed. The result
carries one finite score or one error entry per requested proxy, plus the
model's parameter count and the probe duration. Schema version 1, shared
with the orchestrator's proxy module.
"""
from __future__ import annotations

import importlib.util
import json
import math
import sys
import time

import numpy as np
import torch

from . import proxies, zoo

SCHEMA_VERSION = 1


def _load_model_file(path: str):
    spec = importlib.util.spec_from_file_location("probed_model", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    model = module.build_model({"hyperparameters": {}})
    if not isinstance(model, torch.nn.Module):
        raise TypeError("build_model did not return a torch module")
    return model


def _resolve_batch(data_ref: dict, input_shape, seed: int) -> torch.Tensor:
    kind = data_ref.get("kind", "none")
    if kind == "file":
        archive = np.load(data_ref.get("path", "data.npz"))
        input_keys = sorted(k for k in archive.files if k.startswith("input_"))
        if not input_keys:
            raise ValueError("data archive holds no input arrays")
        return torch.as_tensor(np.asarray(archive[input_keys[0]],
                                          dtype=np.float32))
    if kind == "shape":
        return torch.ones(tuple(int(d) for d in data_ref["shape"]))
    if input_shape is None:
        raise ValueError("data kind 'none' requires a zoo model")
    generator = torch.Generator().manual_seed(seed)
    return torch.randn((4, *input_shape), generator=generator)


def run_request(request: dict) -> dict:
    started = time.monotonic()
    requested = list(request.get("proxies", []))
    seed = int(request.get("seed", 0))
    torch.manual_seed(seed)
    scores: dict[str, float] = {}
    errors: dict[str, str] = {}
    param_count = 0

    model_ref = request.get("model", {})
    model = None
    input_shape = None
    try:
        if model_ref.get("kind") == "zoo":
            model, input_shape = zoo.build(model_ref["name"])
        else:
            model = _load_model_file(model_ref.get("path", "model.py"))
    except BaseException as exc:  # construction failure: per-proxy error entries
        for proxy in requested:
            errors[proxy] = f"model construction failed: {exc}"

    batch = None
    if model is not None:
        param_count = proxies.probe_params(model)
        needs_data = any(p != "params" for p in requested)
        if needs_data:
            try:
                batch = _resolve_batch(request.get("data", {}), input_shape, seed)
            except BaseException as exc:
                for proxy in requested:
                    if proxy != "params":
                        errors[proxy] = f"no usable data batch: {exc}"

    for proxy in requested:
        if proxy in errors:
            continue
        try:
            if proxy == "params":
                scores[proxy] = float(param_count)
            elif batch is None:
                raise ValueError("no data batch available")
            elif proxy == "flops":
                scores[proxy] = proxies.probe_flops(model, batch)
            elif proxy == "naswot":
                scores[proxy] = proxies.probe_naswot(model, batch)
            elif proxy == "synflow":
                scores[proxy] = proxies.probe_synflow(model, tuple(batch.shape[1:]))
            else:
                raise ValueError(f"unknown proxy '{proxy}'")
            if not math.isfinite(scores[proxy]):
                errors[proxy] = f"non-finite score {scores.pop(proxy)}"
        except BaseException as exc:
            errors[proxy] = str(exc)

    return {
        "schema_version": SCHEMA_VERSION,
        "scores": scores,
        "errors": errors,
        "param_count": param_count,
        "duration": time.monotonic() - started,
    }


def main(argv: list[str] | None = None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 2:
        print("usage: probekit-probe <request.json> <result.json>",
              file=sys.stderr)
        return 2
    request_path, result_path = argv
    try:
        with open(request_path, "r", encoding="utf-8") as fh:
            request = json.load(fh)
    except (OSError, ValueError) as exc:
        print(f"unreadable request document: {exc}", file=sys.stderr)
        return 2
    result = run_request(request)
    with open(result_path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
