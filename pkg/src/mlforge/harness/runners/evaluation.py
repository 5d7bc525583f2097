"""Pre-written evaluation procedure: one consistent scorer for every program."""
import numpy as np


def score(metric_name, decoded_outputs, true_outputs):
    """Score decoded predictions against true outputs in metric units."""
    y_pred = np.asarray(decoded_outputs[0], dtype=float).ravel()
    y_true = np.asarray(true_outputs[0], dtype=float).ravel()
    if y_pred.shape != y_true.shape:
        raise ValueError(
            "prediction/target shape mismatch: %s vs %s" % (y_pred.shape, y_true.shape)
        )
    name = metric_name.lower()
    if name in ("accuracy", "top1-accuracy"):
        return float(np.mean(y_pred == y_true))
    if name == "mae":
        return float(np.mean(np.abs(y_pred - y_true)))
    if name == "mse":
        return float(np.mean((y_pred - y_true) ** 2))
    if name == "rmse":
        return float(np.sqrt(np.mean((y_pred - y_true) ** 2)))
    raise ValueError("unknown metric '%s'" % metric_name)
