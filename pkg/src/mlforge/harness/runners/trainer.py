"""Pre-written training loop shared by every assembled program.

Budget semantics: models exposing ``fit_epoch`` are trained for
``round(budget)`` epochs (epoch-fidelity tasks); at full budget the loop
early-stops on the validation metric with patience 3 and minimum delta 0.0.
Models exposing only ``fit`` are trained once on the leading
``budget / max_budget`` fraction of the training samples.
"""
import math

import numpy as np

import evaluation
import post_processing


def _subsample(arrays, count):
    return [arr[:count] for arr in arrays]


def _val_score(model, val_inputs, val_outputs, metric_name):
    predictions = model.predict(val_inputs)
    if not isinstance(predictions, (list, tuple)):
        predictions = [predictions]
    decoded = post_processing.postprocess([np.asarray(p) for p in predictions])
    if not isinstance(decoded, (list, tuple)):
        decoded = [decoded]
    return evaluation.score(metric_name, decoded, val_outputs)


def fit(model, train_inputs, train_outputs, val_inputs, val_outputs, config):
    """Train under the configured budget; returns epochs actually run."""
    budget = float(config["budget"])
    max_budget = float(config["max_budget"])
    metric = config["metric"]
    if hasattr(model, "fit_epoch"):
        epochs = max(1, int(round(budget)))
        full_budget = budget >= max_budget
        stopping = config.get("early_stopping", {"patience": 3, "min_delta": 0.0})
        patience = int(stopping.get("patience", 3))
        min_delta = float(stopping.get("min_delta", 0.0))
        maximize = metric["direction"] == "maximize"
        best = None
        stale = 0
        for epoch in range(epochs):
            model.fit_epoch(train_inputs, train_outputs)
            if not full_budget:
                continue
            current = _val_score(model, val_inputs, val_outputs, metric["name"])
            improved = best is None or (
                current > best + min_delta if maximize else current < best - min_delta
            )
            if improved:
                best = current
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    return epoch + 1
        return epochs
    count = len(train_outputs[0])
    fraction = budget / max_budget if max_budget > 0 else 1.0
    used = max(1, int(math.ceil(fraction * count)))
    model.fit(_subsample(train_inputs, used), _subsample(train_outputs, used))
    return 1
