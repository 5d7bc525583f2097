"""Entry script of an assembled program.

Wires data preparation -> modeling -> pre-written training and evaluation ->
post-processing, prints one marker per stage, and writes result.json with the
final score. Purely mechanical: no text-generation calls happen here.
"""
import json

import numpy as np

import data_preparation
import evaluation
import modeling
import post_processing
import trainer

MARKERS = []


def marker(stage):
    line = "::stage::%s::done" % stage
    MARKERS.append(line)
    print(line, flush=True)


def main():
    with open("run_config.json", "r", encoding="utf-8") as fh:
        config = json.load(fh)

    data = data_preparation.prepare_data(config["workspace"])
    inputs = [np.asarray(a) for a in data["inputs"]]
    outputs = [np.asarray(a) for a in data["outputs"]]
    marker("data-preparation")

    n = len(outputs[0])
    rng = np.random.default_rng(config.get("seed", 0))
    order = rng.permutation(n)
    val_count = max(1, int(n * config.get("val_fraction", 0.25)))
    train_idx, val_idx = order[:-val_count], order[-val_count:]
    train_inputs = [a[train_idx] for a in inputs]
    val_inputs = [a[val_idx] for a in inputs]
    train_outputs = [a[train_idx] for a in outputs]
    val_outputs = [a[val_idx] for a in outputs]

    model = modeling.build_model({"hyperparameters": config.get("hyperparameters", {})})
    epochs_run = trainer.fit(model, train_inputs, train_outputs,
                             val_inputs, val_outputs, config)
    marker("modeling")

    predictions = model.predict(val_inputs)
    if not isinstance(predictions, (list, tuple)):
        predictions = [predictions]
    decoded = post_processing.postprocess([np.asarray(p) for p in predictions])
    if not isinstance(decoded, (list, tuple)):
        decoded = [decoded]
    marker("post-processing")

    final = evaluation.score(config["metric"]["name"], decoded, val_outputs)
    with open("result.json", "w", encoding="utf-8") as fh:
        json.dump({
            "schema_version": 1,
            "score": final,
            "markers": MARKERS,
            "epochs_run": epochs_run,
        }, fh, sort_keys=True)


if __name__ == "__main__":
    main()
