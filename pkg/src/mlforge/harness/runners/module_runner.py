"""Sandbox-side test stub: runs one generated module against its checks.

Reads runner_config.json from the working directory, executes the module's
entry point for the configured mode, interprets the serialized check list,
and writes result.json with one pass/fail entry per check. The process exits
0 whenever the protocol completes; failures live in the result document.
"""
import hashlib
import importlib.util
import json
import sys
import traceback

import numpy as np

RESULT_FILE = "result.json"


def write_result(passed, phase, checks=None, diagnostics="", extra=None):
    payload = {
        "schema_version": 1,
        "passed": bool(passed),
        "phase": phase,
        "checks": checks or [],
        "diagnostics": diagnostics,
    }
    if extra:
        payload.update(extra)
    with open(RESULT_FILE, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    sys.exit(0)


def load_module(path):
    spec = importlib.util.spec_from_file_location("generated_module", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def as_array_list(values):
    if values is None:
        return []
    if isinstance(values, (list, tuple)):
        return [np.asarray(v) for v in values]
    return [np.asarray(values)]


def load_npz(path):
    data = np.load(path)
    inputs, outputs = [], []
    for key in sorted(data.files):
        if key.startswith("input_"):
            inputs.append(data[key])
        elif key.startswith("output_"):
            outputs.append(data[key])
    return inputs, outputs


def arrays_digest(arrays):
    digest = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(str(arr.dtype).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()


def dtype_matches(arr, expected):
    if expected == "float":
        return np.issubdtype(arr.dtype, np.floating)
    if expected == "integer":
        return np.issubdtype(arr.dtype, np.integer) or np.issubdtype(arr.dtype, np.bool_)
    return False


def run_check(check, arrays, module, entry_point):
    op = check["op"]
    if op == "entry-point":
        name = check.get("expected") or entry_point
        ok = callable(getattr(module, name, None))
        return ok, "" if ok else "module does not define callable '%s'" % name
    if op == "iso-equal":
        sizes = []
        for array_key, dim in check.get("members", []):
            arr = arrays.get(array_key)
            if arr is None:
                return False, "array '%s' not produced" % array_key
            if dim >= arr.ndim:
                return False, "array '%s' has no dimension %d" % (array_key, dim)
            sizes.append(arr.shape[dim])
        ok = len(set(sizes)) <= 1
        return ok, "" if ok else "isomorphic dimensions disagree: %s" % sizes
    arr = arrays.get(check.get("array"))
    if arr is None:
        return False, "array '%s' not produced" % check.get("array")
    if op == "rank":
        ok = arr.ndim == check["expected"]
        return ok, "" if ok else "rank %d, expected %d" % (arr.ndim, check["expected"])
    if op == "dim-size":
        dim = check["dim"]
        if dim >= arr.ndim:
            return False, "no dimension %d (rank %d)" % (dim, arr.ndim)
        ok = arr.shape[dim] == check["expected"]
        return ok, "" if ok else "dimension %d has size %d, expected %d" % (
            dim, arr.shape[dim], check["expected"])
    if op == "dim-range":
        dim = check["dim"]
        if dim >= arr.ndim:
            return False, "no dimension %d (rank %d)" % (dim, arr.ndim)
        ok = check["low"] <= arr.shape[dim] <= check["high"]
        return ok, "" if ok else "dimension %d size %d outside [%s, %s]" % (
            dim, arr.shape[dim], check["low"], check["high"])
    if op == "dtype":
        ok = dtype_matches(arr, check["expected"])
        return ok, "" if ok else "dtype %s, expected %s" % (arr.dtype, check["expected"])
    if op == "value-range":
        if arr.size == 0:
            return False, "array is empty"
        finite = np.isfinite(arr.astype(float)).all()
        ok = bool(finite and (arr >= check["low"]).all() and (arr <= check["high"]).all())
        return ok, "" if ok else "values outside [%s, %s] (min %s, max %s)" % (
            check["low"], check["high"], arr.min(), arr.max())
    return False, "unknown check op '%s'" % op


def make_predictions(outputs, prediction_mode):
    """Synthetic model-format predictions for exercising post-processing."""
    preds = []
    for arr in outputs:
        if prediction_mode == "one-hot":
            flat = arr.astype(int)
            classes = int(flat.max()) + 1 if flat.size else 1
            eye = np.eye(classes, dtype=float)
            preds.append(eye[flat])
        elif prediction_mode == "as-float":
            preds.append(arr.astype(float))
        else:
            preds.append(arr)
    return preds


def main():
    with open("runner_config.json", "r", encoding="utf-8") as fh:
        config = json.load(fh)
    suite = config["suite"]
    entry_point = suite["entry_point"]
    mode = config["mode"]

    try:
        module = load_module(config["module_file"])
    except BaseException:
        write_result(False, "syntax", diagnostics=traceback.format_exc())

    if not callable(getattr(module, entry_point, None)):
        checks = [{"name": "%s.entry" % mode, "passed": False,
                   "diagnostics": "missing entry point '%s'" % entry_point}]
        write_result(False, "contract", checks=checks,
                     diagnostics="module does not define '%s'" % entry_point)

    arrays = {}
    extra = {}
    try:
        if mode == "synthetic":
            data = module.generate(config["seed"])
            for i, arr in enumerate(as_array_list(data.get("inputs"))):
                arrays["input_%d" % i] = arr
            for i, arr in enumerate(as_array_list(data.get("outputs"))):
                arrays["output_%d" % i] = arr
            np.savez(config.get("output_data_file", "data.npz"), **arrays)
            extra["digest"] = arrays_digest(arrays)
        elif mode == "data-preparation":
            data = module.prepare_data(config["workspace"])
            for i, arr in enumerate(as_array_list(data.get("inputs"))):
                arrays["input_%d" % i] = arr
            for i, arr in enumerate(as_array_list(data.get("outputs"))):
                arrays["output_%d" % i] = arr
        elif mode == "modeling":
            inputs, outputs = load_npz(config["data_file"])
            model = module.build_model(
                {"hyperparameters": config.get("hyperparameters", {})})
            model.fit(inputs, outputs)
            predictions = as_array_list(model.predict(inputs))
            for i, arr in enumerate(inputs):
                arrays["input_%d" % i] = arr
            for i, arr in enumerate(predictions):
                arrays["prediction_%d" % i] = arr
        elif mode == "post-processing":
            inputs, outputs = load_npz(config["data_file"])
            predictions = make_predictions(outputs, config.get("prediction_mode",
                                                               "identity"))
            decoded = as_array_list(module.postprocess(predictions))
            for i, arr in enumerate(decoded):
                arrays["decoded_%d" % i] = arr
        else:
            write_result(False, "execution", diagnostics="unknown mode '%s'" % mode)
    except BaseException:
        write_result(False, "execution", diagnostics=traceback.format_exc())

    results = []
    all_passed = True
    for check in suite["checks"]:
        ok, diag = run_check(check, arrays, module, entry_point)
        results.append({"name": check["name"], "passed": bool(ok),
                        "diagnostics": diag})
        all_passed = all_passed and ok
    failures = "; ".join("%s: %s" % (r["name"], r["diagnostics"])
                         for r in results if not r["passed"])
    write_result(all_passed, "contract" if not all_passed else "execution",
                 checks=results, diagnostics=failures, extra=extra)


if __name__ == "__main__":
    main()
