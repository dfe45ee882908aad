"""Quarterly time-series container, CSV ingestion and basic transforms."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_PERIOD_RE = re.compile(r"^(\d{4})-Q([1-4])$")


class SeriesError(ValueError):
    """Invalid or inconsistent series data."""


@dataclass(frozen=True, order=True)
class Quarter:
    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise SeriesError(f"quarter index must be 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = _PERIOD_RE.match(text.strip())
        if m is None:
            raise SeriesError(f"bad period label {text!r}, expected YYYY-Qn")
        return cls(int(m.group(1)), int(m.group(2)))

    def next(self) -> "Quarter":
        if self.quarter == 4:
            return Quarter(self.year + 1, 1)
        return Quarter(self.year, self.quarter + 1)

    def shift(self, k: int) -> "Quarter":
        idx = self.year * 4 + (self.quarter - 1) + k
        return Quarter(idx // 4, idx % 4 + 1)

    def __str__(self) -> str:
        return f"{self.year}-Q{self.quarter}"


@dataclass(frozen=True)
class TimeSeries:
    """Consecutive quarterly observations.

    ``values`` is stored as a read-only float64 array.
    """

    periods: tuple[Quarter, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "periods", tuple(self.periods))
        if values.ndim != 1 or len(values) != len(self.periods):
            raise SeriesError("periods and values must be 1-d sequences of equal length")
        if len(values) < 2:
            raise SeriesError(f"series needs at least 2 observations, got {len(values)}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise SeriesError(f"non-finite value at {self.periods[bad]}")
        for prev, cur in zip(self.periods, self.periods[1:]):
            if cur != prev.next():
                if cur <= prev:
                    raise SeriesError(f"duplicate or out-of-order period {cur} after {prev}")
                raise SeriesError(f"gap at {prev.next()} (between {prev} and {cur})")

    @classmethod
    def from_values(cls, values: Sequence[float], start: Quarter | str = "2000-Q1") -> "TimeSeries":
        if isinstance(start, str):
            start = Quarter.parse(start)
        return cls(tuple(start.shift(i) for i in range(len(values))), np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    def slice(self, start: int | None = None, stop: int | None = None) -> "TimeSeries":
        return TimeSeries(self.periods[start:stop], self.values[start:stop])


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    standard_error: float
    median: float
    std_dev: float
    excess_kurtosis: float
    skewness: float
    range: float
    min: float
    max: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SupervisedWindow:
    inputs: np.ndarray
    target: float
    target_index: int


def load_csv(path: str | Path) -> TimeSeries:
    """Read a ``period,value`` CSV into a :class:`TimeSeries`.

    Errors carry the file name and, for malformed rows, the line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    periods: list[Quarter] = []
    values: list[float] = []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["period", "value"]:
            raise SeriesError(f"{path}:1: header must be 'period,value', got {header!r}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SeriesError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                q = Quarter.parse(row[0])
                v = float(row[1])
            except ValueError as exc:
                raise SeriesError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(v):
                raise SeriesError(f"{path}:{lineno}: non-finite value {row[1]!r}")
            periods.append(q)
            values.append(v)
    try:
        return TimeSeries(tuple(periods), np.array(values))
    except SeriesError as exc:
        raise SeriesError(f"{path}: {exc}") from None


def describe(series: TimeSeries | Sequence[float]) -> DescriptiveStats:
    """Summary statistics using spreadsheet (bias-corrected) conventions.

    Skewness and excess kurtosis are the adjusted sample estimators, which
    need at least four observations and a non-zero standard deviation.
    """
    x = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    n = len(x)
    if n < 4:
        raise SeriesError(f"describe needs at least 4 observations, got {n}")
    mean = float(np.mean(x))
    s = float(np.std(x, ddof=1))
    if s == 0.0:
        raise SeriesError("zero standard deviation: skewness and kurtosis are undefined")
    z = (x - mean) / s
    skew = n / ((n - 1) * (n - 2)) * float(np.sum(z**3))
    kurt = (n * (n + 1) / ((n - 1) * (n - 2) * (n - 3)) * float(np.sum(z**4))
            - 3 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    lo, hi = float(np.min(x)), float(np.max(x))
    return DescriptiveStats(
        n=n,
        mean=mean,
        standard_error=s / math.sqrt(n),
        median=float(np.median(x)),
        std_dev=s,
        excess_kurtosis=kurt,
        skewness=skew,
        range=hi - lo,
        min=lo,
        max=hi,
    )


def differencing_polynomial(d: int, D: int, s: int) -> np.ndarray:
    """Coefficients of (1-B)^d (1-B^s)^D in ascending powers of B."""
    if d < 0 or D < 0 or s < 1:
        raise ValueError("orders must be non-negative and s >= 1")
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(s + 1)
    seasonal[0], seasonal[s] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def difference(values: Sequence[float], d: int = 1, D: int = 0, s: int = 4) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if len(x) <= d + D * s:
        raise SeriesError(f"series of length {len(x)} too short for d={d}, D={D}, s={s}")
    for _ in range(d):
        x = x[1:] - x[:-1]
    for _ in range(D):
        x = x[s:] - x[:-s]
    return x


def integrate_forecasts(history: Sequence[float], diffs: Sequence[float],
                        d: int = 1, D: int = 0, s: int = 4) -> np.ndarray:
    """Undo :func:`difference` for values that continue ``history``.

    Each new level is y_t = w_t + sum_j c_j y_{t-j}, where 1 - sum_j c_j B^j
    is the differencing polynomial.
    """
    poly = differencing_polynomial(d, D, s)
    order = len(poly) - 1
    hist = [float(v) for v in history]
    if len(hist) < order:
        raise SeriesError(f"need {order} history values to integrate, got {len(hist)}")
    out = []
    buf = hist[len(hist) - order:] if order else []
    for w in diffs:
        y = float(w)
        for j in range(1, order + 1):
            y -= poly[j] * buf[-j]
        out.append(y)
        buf.append(y)
    return np.array(out)


def split_holdout(series: TimeSeries, h: int) -> tuple[TimeSeries, TimeSeries]:
    n = len(series)
    if not 0 < h < n:
        raise SeriesError(f"holdout length must satisfy 0 < h < {n}, got {h}")
    # a 1-element train series is allowed here even though TimeSeries needs 2
    train = _unchecked(series.periods[: n - h], series.values[: n - h])
    test = _unchecked(series.periods[n - h:], series.values[n - h:])
    return train, test


def _unchecked(periods, values) -> TimeSeries:
    ts = object.__new__(TimeSeries)
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    object.__setattr__(ts, "periods", tuple(periods))
    object.__setattr__(ts, "values", values)
    return ts


def make_windows(values: Sequence[float], lookback: int = 4) -> list[SupervisedWindow]:
    x = np.asarray(values, dtype=float)
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    if len(x) <= lookback:
        raise SeriesError(f"series of length {len(x)} too short for lookback {lookback}")
    return [SupervisedWindow(x[i:i + lookback].copy(), float(x[i + lookback]), i + lookback)
            for i in range(len(x) - lookback)]


def windows_to_arrays(windows: Sequence[SupervisedWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into an (n, L) input matrix and an (n,) target vector."""
    X = np.stack([w.inputs for w in windows]).astype(float)
    y = np.array([w.target for w in windows], dtype=float)
    return X, y
