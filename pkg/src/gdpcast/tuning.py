"""Grid search over LSTM hyperparameters with rolling-origin cross-validation."""
from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import mse
from .lstm import LstmConfig, TrainingDivergedError, train
from .series import SupervisedWindow, windows_to_arrays

log = logging.getLogger(__name__)

AXES = ("epochs", "recurrent_dropout", "units", "batch_size", "l2_lambda")


@dataclass(frozen=True)
class LstmSearchSpace:
    epochs: tuple[int, ...] = (250, 500, 1000)
    recurrent_dropout: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    units: tuple[int, ...] = (250, 500, 1000)
    batch_size: tuple[int, ...] = (1, 4, 8)
    l2_lambda: tuple[float, ...] = (0.01, 0.02, 0.03)

    def __post_init__(self):
        for name in AXES:
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"search axis {name!r} is empty")
            object.__setattr__(self, name, values)

    def __len__(self) -> int:
        return math.prod(len(getattr(self, a)) for a in AXES)

    def combos(self) -> list[tuple]:
        return list(itertools.product(*(getattr(self, a) for a in AXES)))

    def configs(self, base: LstmConfig | None = None) -> list[LstmConfig]:
        base = base or LstmConfig()
        return [replace(base, **dict(zip(AXES, combo))) for combo in self.combos()]

    @classmethod
    def from_dict(cls, d: dict) -> "LstmSearchSpace":
        unknown = set(d) - set(AXES)
        if unknown:
            raise ValueError(f"unknown search axes: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[range, range], ...]

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def cv_splits(n_windows: int, k: int = 3) -> FoldPlan:
    """Expanding-window folds over ``n_windows`` time-ordered samples.

    The indices are cut into k+1 near-equal consecutive blocks (earlier
    blocks take the remainder); fold i trains on blocks 1..i and validates
    on block i+1.
    """
    if k < 1:
        raise ValueError("need at least one fold")
    if n_windows < 2 * (k + 1):
        raise ValueError(f"{n_windows} windows are too few for {k} folds (need {2 * (k + 1)})")
    base, extra = divmod(n_windows, k + 1)
    bounds = [0]
    for b in range(k + 1):
        bounds.append(bounds[-1] + base + (1 if b < extra else 0))
    return FoldPlan(tuple((range(0, bounds[i]), range(bounds[i], bounds[i + 1]))
                          for i in range(1, k + 1)))


def derive_seed(base_seed: int, *key) -> int:
    """Stable 32-bit seed from the base seed and an identifying key."""
    text = repr((int(base_seed),) + tuple(key)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:4], "little")


def config_key(cfg: LstmConfig) -> tuple:
    return tuple(getattr(cfg, a) for a in AXES)


@dataclass
class TrialResult:
    config: LstmConfig
    fold_mse: list[float]
    mean_mse: float
    seconds: float
    seed: int
    status: str = "ok"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _run_trial(args) -> TrialResult:
    cfg, X, y, plan = args
    t0 = time.perf_counter()
    scores = []
    try:
        for tr, va in plan:
            model, _ = train(cfg, (X[tr.start:tr.stop], y[tr.start:tr.stop]))
            pred = model.predict(X[va.start:va.stop])
            score = mse(y[va.start:va.stop], pred)
            if not math.isfinite(score):
                raise TrainingDivergedError("non-finite validation MSE")
            scores.append(score)
    except (TrainingDivergedError, FloatingPointError) as exc:
        return TrialResult(cfg, scores, math.nan, time.perf_counter() - t0, cfg.seed, "failed", str(exc))
    return TrialResult(cfg, scores, float(np.mean(scores)), time.perf_counter() - t0, cfg.seed)


def selection_key(trial: TrialResult):
    cfg = trial.config
    return (trial.mean_mse, cfg.units, cfg.epochs, config_key(cfg))


def run_lstm_search(space: LstmSearchSpace, windows: Sequence[SupervisedWindow], base_seed: int = 42,
                    base: LstmConfig | None = None, folds: int = 3, workers: int = 1
                    ) -> tuple[LstmConfig, list[TrialResult]]:
    """Score every configuration in ``space`` by mean validation MSE.

    Each trial's seed depends only on ``base_seed`` and the configuration's
    hyperparameters, so results do not depend on enumeration order or on
    how trials are spread over workers.
    """
    X, y = windows_to_arrays(windows)
    plan = cv_splits(len(y), folds)
    configs = [replace(c, seed=derive_seed(base_seed, "trial", *config_key(c)))
               for c in space.configs(base)]
    jobs = [(c, X, y, plan) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ledger = list(pool.map(_run_trial, jobs))
    else:
        ledger = []
        for i, job in enumerate(jobs, start=1):
            ledger.append(_run_trial(job))
            log.info("trial %d/%d %s -> %s", i, len(jobs), config_key(job[0]), ledger[-1].mean_mse)
    good = [t for t in ledger if t.ok]
    if not good:
        raise RuntimeError("every LSTM trial failed")
    return min(good, key=selection_key).config, ledger


def final_fit(best: LstmConfig, windows: Sequence[SupervisedWindow], base_seed: int = 42):
    """Retrain ``best`` on all training windows with a seed derived from ``base_seed``."""
    cfg = replace(best, seed=derive_seed(base_seed, "final"))
    return train(cfg, windows)


def write_ledger_csv(ledger: Sequence[TrialResult], path: str | Path) -> None:
    n_folds = max((len(t.fold_mse) for t in ledger), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*AXES, "seed", *(f"fold{i}_mse" for i in range(1, n_folds + 1)),
                    "mean_mse", "status", "seconds"])
        for t in ledger:
            folds = [repr(v) for v in t.fold_mse] + [""] * (n_folds - len(t.fold_mse))
            w.writerow([*config_key(t.config), t.seed, *folds, repr(t.mean_mse), t.status,
                        f"{t.seconds:.3f}"])
