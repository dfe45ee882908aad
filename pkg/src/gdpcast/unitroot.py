"""Augmented Dickey-Fuller unit-root test."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

SPECS = ("no-constant", "constant", "constant+trend")

_PROBS = np.array([0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99])

# Asymptotic quantiles of the Dickey-Fuller t-statistic (Fuller 1976,
# reproduced in Hamilton 1994, Table B.6, sample size = infinity).
DF_QUANTILES = {
    "no-constant": np.array([-2.58, -2.23, -1.95, -1.62, 0.89, 1.28, 1.62, 2.00]),
    "constant": np.array([-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60]),
    "constant+trend": np.array([-3.96, -3.66, -3.41, -3.12, -1.25, -0.94, -0.66, -0.33]),
}

P_FLOOR, P_CEIL = 0.001, 0.999


class SingularRegressionError(ArithmeticError):
    """Regression design is (numerically) rank deficient or degenerate."""


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lags: int
    spec: str
    n_effective: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OlsResult:
    coef: np.ndarray
    stderr: np.ndarray
    resid: np.ndarray
    ssr: float
    nobs: int


def solve_pivoted(A: np.ndarray, b: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Gaussian elimination with partial pivoting. ``b`` may be 1-d or 2-d.

    Raises SingularRegressionError when a pivot falls below ``tol`` times the
    largest absolute entry of ``A``.
    """
    A = np.array(A, dtype=float)
    B = np.array(b, dtype=float)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    n = A.shape[0]
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise SingularRegressionError("zero matrix")
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[piv, k]) <= tol * scale:
            raise SingularRegressionError(f"singular normal equations (pivot {k})")
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            B[[k, piv]] = B[[piv, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        B[k + 1:] -= np.outer(f, B[k])
    X = np.zeros_like(B)
    for k in range(n - 1, -1, -1):
        X[k] = (B[k] - A[k, k + 1:] @ X[k + 1:]) / A[k, k]
    return X[:, 0] if vec else X


def ols(X: np.ndarray, y: np.ndarray) -> OlsResult:
    """Least squares through the normal equations.

    Columns are scaled to unit norm before forming X'X, which keeps the
    pivoted solve well conditioned when regressors differ in magnitude.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    nobs, k = X.shape
    if nobs <= k:
        raise SingularRegressionError(f"{nobs} observations for {k} regressors")
    colnorm = np.sqrt(np.sum(X * X, axis=0))
    if np.any(colnorm == 0):
        raise SingularRegressionError("all-zero regressor column")
    Xs = X / colnorm
    XtX = Xs.T @ Xs
    XtX_inv = solve_pivoted(XtX, np.eye(k))
    beta_s = solve_pivoted(XtX, Xs.T @ y)
    resid = y - Xs @ beta_s
    ssr = float(resid @ resid)
    sigma2 = ssr / (nobs - k)
    if not sigma2 > 0:
        raise SingularRegressionError("zero residual variance (degenerate regression)")
    stderr = np.sqrt(sigma2 * np.diag(XtX_inv)) / colnorm
    return OlsResult(beta_s / colnorm, stderr, resid, ssr, nobs)


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _design(y: np.ndarray, spec: str, lags: int, start: int):
    """Regressors for rows t = start+1 .. n-1 of the ADF regression.

    ``start`` >= lags fixes the first usable difference so that different lag
    orders can share one estimation sample.
    """
    dy = np.diff(y)
    rows = np.arange(start, len(dy))
    cols = []
    if spec in ("constant", "constant+trend"):
        cols.append(np.ones(len(rows)))
    if spec == "constant+trend":
        cols.append(rows.astype(float) + 1.0)
    gamma_col = len(cols)
    cols.append(y[rows])
    for j in range(1, lags + 1):
        cols.append(dy[rows - j])
    return np.column_stack(cols), dy[rows], gamma_col


def adf_test(series: Sequence[float], spec: str = "constant", max_lag: int | None = None,
             autolag: bool = True) -> AdfResult:
    """Test for a unit root in ``series``.

    Parameters
    ----------
    series : sequence of float
    spec : {'no-constant', 'constant', 'constant+trend'}
        Deterministic terms in the test regression.
    max_lag : int, optional
        Largest number of lagged differences considered. Defaults to the
        Schwert rule, reduced if the series is too short for it.
    autolag : bool
        Pick the lag order in ``0..max_lag`` minimizing AIC on a common
        sample. When False, exactly ``max_lag`` lags are used.

    Returns
    -------
    AdfResult
    """
    if spec not in SPECS:
        raise ValueError(f"spec must be one of {SPECS}, got {spec!r}")
    y = np.asarray(series, dtype=float)
    n = len(y)
    if max_lag is None:
        max_lag = min(schwert_max_lag(n), n - 10)
    if max_lag < 0 or n < max_lag + 10:
        raise ValueError(f"series of length {n} too short for max_lag={max_lag}")

    lags = max_lag
    if autolag and max_lag > 0:
        best = None
        for k in range(max_lag + 1):
            X, dy, _ = _design(y, spec, k, max_lag)
            res = ols(X, dy)
            aic = res.nobs * math.log(res.ssr / res.nobs) + 2 * X.shape[1]
            if best is None or aic < best[0]:
                best = (aic, k)
        lags = best[1]

    X, dy, gcol = _design(y, spec, lags, lags)
    res = ols(X, dy)
    stat = float(res.coef[gcol] / res.stderr[gcol])
    return AdfResult(stat, df_pvalue(stat, spec), lags, spec, res.nobs)


def df_pvalue(statistic: float, spec: str = "constant") -> float:
    """Left-tail probability of the Dickey-Fuller t-distribution.

    Interpolates linearly on the probit scale between tabulated quantiles,
    so table knots are reproduced exactly; the result is clamped to
    [0.001, 0.999].
    """
    if spec not in SPECS:
        raise ValueError(f"spec must be one of {SPECS}, got {spec!r}")
    q = DF_QUANTILES[spec]
    stat = float(statistic)
    hit = np.flatnonzero(q == stat)
    if hit.size:
        return float(_PROBS[hit[0]])
    z = norm.ppf(_PROBS)
    if stat < q[0]:
        i = 0
    elif stat > q[-1]:
        i = len(q) - 2
    else:
        i = int(np.searchsorted(q, stat)) - 1
    zz = z[i] + (z[i + 1] - z[i]) * (stat - q[i]) / (q[i + 1] - q[i])
    return float(min(max(norm.cdf(zz), P_FLOOR), P_CEIL))
