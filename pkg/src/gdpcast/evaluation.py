"""Forecast accuracy metrics and model comparison tables."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if len(a) == 0:
        raise ValueError("metrics need at least one observation")
    if len(a) != len(p):
        raise ValueError(f"length mismatch: {len(a)} actual vs {len(p)} predicted")
    return a, p


def mse(actual: Sequence[float], predicted: Sequence[float]) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def mae(actual: Sequence[float], predicted: Sequence[float]) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def mape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent."""
    a, p = _pair(actual, predicted)
    if np.any(a == 0):
        raise ValueError("MAPE is undefined when an actual value is 0")
    return float(100.0 * np.mean(np.abs(a - p) / np.abs(a)))


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    mape: float
    n: int


def metrics(actual, predicted) -> MetricsReport:
    a, p = _pair(actual, predicted)
    return MetricsReport(mse(a, p), mae(a, p), mape(a, p), len(a))


@dataclass(frozen=True)
class ComparisonReport:
    actual: tuple[float, ...]
    predictions: dict[str, tuple[float, ...]]
    metrics: dict[str, MetricsReport]

    def to_dict(self) -> dict:
        return {"actual": list(self.actual),
                "predictions": {k: list(v) for k, v in self.predictions.items()},
                "metrics": {k: asdict(v) for k, v in self.metrics.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        """Metric rows by model columns; MSE/MAE rounded, MAPE as a percentage."""
        names = list(self.metrics)
        rows = [("MAPE", [f"{self.metrics[m].mape:.2f}%" for m in names]),
                ("MAE", [f"{self.metrics[m].mae:.0f}" for m in names]),
                ("MSE", [f"{self.metrics[m].mse:.0f}" for m in names])]
        width0 = max(len("Performance metrics"), *(len(r[0]) for r in rows))
        widths = [max(len(n), *(len(r[1][j]) for r in rows)) for j, n in enumerate(names)]
        lines = ["  ".join([f"{'Performance metrics':<{width0}}"]
                           + [f"{n:>{w}}" for n, w in zip(names, widths)])]
        for label, cells in rows:
            lines.append("  ".join([f"{label:<{width0}}"] + [f"{c:>{w}}" for c, w in zip(cells, widths)]))
        return "\n".join(lines)


def compare(actual: Sequence[float], predictions: Mapping[str, Sequence[float]]) -> ComparisonReport:
    """Score every model on the same actuals; models are ordered by name."""
    a = np.asarray(actual, dtype=float).reshape(-1)
    if not predictions:
        raise ValueError("no predictions to compare")
    preds, reports = {}, {}
    for name in sorted(predictions):
        p = np.asarray(predictions[name], dtype=float).reshape(-1)
        if len(p) != len(a):
            raise ValueError(f"model {name!r}: {len(p)} predictions for {len(a)} actual values")
        preds[name] = tuple(float(v) for v in p)
        reports[name] = metrics(a, p)
    return ComparisonReport(tuple(float(v) for v in a), preds, reports)
