"""End-to-end runs that tie the modules together and write result files."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, sarima
from .evaluation import ComparisonReport, compare
from .lstm import LstmConfig, forecast_recursive
from .series import TimeSeries, describe, load_csv, make_windows, split_holdout
from .tuning import LstmSearchSpace, final_fit, run_lstm_search, write_ledger_csv
from .unitroot import adf_test

log = logging.getLogger(__name__)

CV_NOTE = ("LSTM cross-validation uses expanding-window (rolling-origin) folds: "
           "each validation block follows its training data in time.")


@dataclass
class RunConfig:
    data: str | None = None
    out: str | None = None
    holdout: int = 4
    lookback: int = 4
    seed: int = 42
    scale: bool = False
    workers: int = 1
    format: str = "json"
    folds: int = 3
    learning_rate: float = 1e-3
    activation: str = "relu"
    adf_spec: str = "constant"
    max_lag: int | None = None
    sarima_ranges: dict = field(default_factory=lambda: {k: list(v) if isinstance(v, tuple) else v
                                                         for k, v in sarima.DEFAULT_RANGES.items()})
    lstm_space: dict = field(default_factory=lambda: {k: list(v) for k, v in
                                                      asdict(LstmSearchSpace()).items()})

    def __post_init__(self):
        if self.holdout < 1 or self.lookback < 1 or self.workers < 1:
            raise ValueError("holdout, lookback and workers must be >= 1")
        if self.format not in ("json", "csv"):
            raise ValueError(f"format must be json or csv, got {self.format!r}")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def base_lstm(self) -> LstmConfig:
        return LstmConfig(lookback=self.lookback, learning_rate=self.learning_rate,
                          seed=self.seed, activation=self.activation, standardize=self.scale)

    def space(self) -> LstmSearchSpace:
        return LstmSearchSpace.from_dict(self.lstm_space)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@contextmanager
def atomic_dir(out: str | Path):
    """Yield a scratch directory that replaces ``out`` only if the block succeeds."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def describe_text(stats) -> str:
    labels = [("Mean", stats.mean), ("Standard Error", stats.standard_error),
              ("Median", stats.median), ("Standard Deviation", stats.std_dev),
              ("Kurtosis", stats.excess_kurtosis), ("Skewness", stats.skewness),
              ("Range", stats.range), ("Minimum", stats.min), ("Maximum", stats.max)]
    lines = [f"{'Statistics':<20}{'Value':>20}"]
    lines += [f"{name:<20}{value:>20.10g}" for name, value in labels]
    lines.append(f"{'Count':<20}{stats.n:>20d}")
    return "\n".join(lines)


def write_search_table(table, path: Path) -> None:
    rows = [(f.order.p, f.order.d, f.order.q, f.order.P, f.order.D, f.order.Q, f.order.s,
             f.k, repr(f.loglik), repr(f.aic), f.converged) for f in table]
    _write_rows(path, ["p", "d", "q", "P", "D", "Q", "s", "k", "loglik", "aic", "converged"], rows)


def run_describe(cfg: RunConfig, out: Path | None = None):
    series = load_csv(cfg.data)
    stats = describe(series)
    if out is not None:
        if cfg.format == "json":
            write_json(out / "describe.json", stats.as_dict())
        else:
            _write_rows(out / "describe.csv", ["statistic", "value"],
                        [(k, repr(v)) for k, v in stats.as_dict().items()])
        (out / "describe.txt").write_text(describe_text(stats) + "\n")
    return stats


def run_adf(cfg: RunConfig, out: Path | None = None):
    series = load_csv(cfg.data)
    result = adf_test(series.values, spec=cfg.adf_spec, max_lag=cfg.max_lag)
    if out is not None:
        write_json(out / "adf.json", result.as_dict())
    return result


def run_sarima(cfg: RunConfig, train: TimeSeries, h: int, out: Path | None = None):
    best, table = sarima.aic_search(train, cfg.sarima_ranges, workers=cfg.workers)
    fc = sarima.forecast(best, train, h)
    if out is not None:
        write_search_table(table, out / "sarima_search.csv")
        write_json(out / "sarima_best.json", {**best.as_dict(), "forecast": fc.tolist()})
    return best, table, fc


def run_lstm(cfg: RunConfig, train: TimeSeries, h: int, out: Path | None = None):
    windows = make_windows(train.values, cfg.lookback)
    best, ledger = run_lstm_search(cfg.space(), windows, cfg.seed, cfg.base_lstm(),
                                   folds=cfg.folds, workers=cfg.workers)
    model, history = final_fit(best, windows, cfg.seed)
    fc = forecast_recursive(model, train.values, h)
    if out is not None:
        write_ledger_csv(ledger, out / "lstm_trials.csv")
        history.to_csv(out / "lstm_history.csv")
        (out / "lstm_model.json").write_text(model.to_json() + "\n")
        write_json(out / "lstm_best.json", {"config": asdict(model.config), "forecast": fc.tolist(),
                                             "cv_scheme": CV_NOTE})
    return model, history, ledger, fc


def plot_rows(series: TimeSeries, n_train: int, lookback: int, lstm_fitted, lstm_fc, sarima_fc):
    rows = []
    for i, (period, actual) in enumerate(zip(series.periods, series.values)):
        if i < n_train:
            fitted = "" if i < lookback else repr(float(lstm_fitted[i - lookback]))
            rows.append((str(period), repr(float(actual)), fitted, "", "train"))
        else:
            j = i - n_train
            rows.append((str(period), repr(float(actual)), repr(float(lstm_fc[j])),
                         repr(float(sarima_fc[j])), "test"))
    return rows


def manifest(cfg: RunConfig) -> dict:
    mtime = os.stat(cfg.data).st_mtime
    return {"tool_version": __version__, "seed": cfg.seed,
            "input_sha256": sha256_file(cfg.data),
            "run_config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
            "timestamps": {"input_modified": dt.datetime.fromtimestamp(mtime, dt.timezone.utc).isoformat()}}


def run_compare(cfg: RunConfig, out: Path) -> ComparisonReport:
    """Holdout comparison of the AIC-selected SARIMA and the grid-searched LSTM.

    ``out`` must be an existing, writable directory. Wall-clock timings go to
    timing.json so that report.* and manifest.json are reproducible.
    """
    started = time.time()
    with stage("load"):
        series = load_csv(cfg.data)
        train, test = split_holdout(series, cfg.holdout)
    with stage("sarima"):
        _, _, sarima_fc = run_sarima(cfg, train, cfg.holdout, out)
    with stage("lstm"):
        model, history, _, lstm_fc = run_lstm(cfg, train, cfg.holdout, out)
    with stage("compare"):
        report = compare(test.values, {"LSTM": lstm_fc, "SARIMA": sarima_fc})
        if cfg.format == "json":
            (out / "report.json").write_text(report.to_json() + "\n")
        else:
            names = list(report.metrics)
            _write_rows(out / "report.csv", ["metric", *names],
                        [(m, *(repr(getattr(report.metrics[n], m)) for n in names))
                         for m in ("mape", "mae", "mse")])
        (out / "report.txt").write_text(report.to_text() + "\n\n" + CV_NOTE + "\n")
        windows = make_windows(train.values, cfg.lookback)
        fitted = model.predict(np.stack([w.inputs for w in windows]))
        _write_rows(out / "forecast_plot.csv",
                    ["period", "actual", "lstm_fitted_or_forecast", "sarima_forecast", "split"],
                    plot_rows(series, len(train), cfg.lookback, fitted, lstm_fc, sarima_fc))
        history.to_csv(out / "training_curves.csv")
        write_json(out / "manifest.json", manifest(cfg))
        write_json(out / "timing.json", {"started": started, "finished": time.time()})
    return report
