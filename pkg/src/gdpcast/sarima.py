"""Seasonal ARIMA by conditional sum of squares.

Polynomial convention (Box-Jenkins signs)::

    phi(B) Phi(B^s) (1-B)^d (1-B^s)^D (y_t - mu) = theta(B) Theta(B^s) e_t
    phi(B)   = 1 - phi_1 B - ... - phi_p B^p
    theta(B) = 1 - theta_1 B - ... - theta_q B^q

so a positive MA coefficient enters the residual recursion with a plus sign.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .series import TimeSeries, difference, integrate_forecasts

log = logging.getLogger(__name__)

PENALTY = 1e12
ROOT_MARGIN = 1e-6
DEFAULT_RANGES = {"p": (0, 1, 2), "d": (0, 1, 2), "q": (0, 1, 2),
                  "P": (0, 1), "D": (0, 1), "Q": (0, 1), "s": 4}


class InfeasibleParamsError(ValueError):
    """Parameters violate stationarity or invertibility."""


@dataclass(frozen=True, order=True)
class SarimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 4

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0 or self.s < 1:
            raise ValueError(f"invalid order {self}")

    @property
    def has_mean(self) -> bool:
        return self.d + self.D == 0

    @property
    def max_ar_lag(self) -> int:
        return self.p + self.s * self.P

    @property
    def max_ma_lag(self) -> int:
        return self.q + self.s * self.Q

    @property
    def k(self) -> int:
        """Parameter count for AIC, innovation variance included."""
        return self.p + self.q + self.P + self.Q + int(self.has_mean) + 1

    def as_tuple(self) -> tuple[int, ...]:
        return (self.p, self.d, self.q, self.P, self.D, self.Q)

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"


@dataclass(frozen=True)
class SarimaParams:
    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    Phi: tuple[float, ...] = ()
    Theta: tuple[float, ...] = ()
    mu: float | None = None
    sigma2: float = 1.0

    def as_dict(self) -> dict:
        return {"phi": list(self.phi), "theta": list(self.theta), "Phi": list(self.Phi),
                "Theta": list(self.Theta), "mu": self.mu, "sigma2": self.sigma2}


@dataclass(frozen=True)
class SarimaFit:
    order: SarimaOrder
    params: SarimaParams
    loglik: float
    aic: float
    n_effective: int
    converged: bool
    n_iter: int = field(default=0, compare=False)

    @property
    def k(self) -> int:
        return self.order.k

    def as_dict(self) -> dict:
        o = self.order
        return {"order": {"p": o.p, "d": o.d, "q": o.q, "P": o.P, "D": o.D, "Q": o.Q, "s": o.s},
                "params": self.params.as_dict(), "k": self.k, "loglik": self.loglik,
                "aic": self.aic, "n_effective": self.n_effective, "converged": self.converged}


def _check_dims(order: SarimaOrder, params: SarimaParams) -> None:
    dims = (len(params.phi), len(params.theta), len(params.Phi), len(params.Theta))
    if dims != (order.p, order.q, order.P, order.Q):
        raise ValueError(f"parameter dimensions {dims} do not match order {order}")
    if order.has_mean != (params.mu is not None):
        raise ValueError("mu must be given exactly when d + D == 0")


def _lag_poly(coefs: Sequence[float], step: int) -> np.ndarray:
    poly = np.zeros(len(coefs) * step + 1)
    poly[0] = 1.0
    for j, c in enumerate(coefs, start=1):
        poly[j * step] = -c
    return poly


def _expanded(short, seasonal, s) -> tuple[np.ndarray, set[int]]:
    poly = np.convolve(_lag_poly(short, 1), _lag_poly(seasonal, s))
    support = {i + s * j for i in range(len(short) + 1) for j in range(len(seasonal) + 1)} - {0}
    return poly, support


def expand_polynomials(order: SarimaOrder, params: SarimaParams) -> tuple[dict[int, float], dict[int, float]]:
    """Lag -> coefficient maps of phi(B)Phi(B^s) and theta(B)Theta(B^s).

    Coefficients are reported with the recursion's sign, i.e. the expanded
    polynomial is ``1 - sum(c * B**lag)``.
    """
    _check_dims(order, params)
    ar, ar_lags = _expanded(params.phi, params.Phi, order.s)
    ma, ma_lags = _expanded(params.theta, params.Theta, order.s)
    return ({j: float(-ar[j]) for j in sorted(ar_lags)},
            {j: float(-ma[j]) for j in sorted(ma_lags)})


def poly_from_map(coefs: Mapping[int, float]) -> np.ndarray:
    """Dense ascending coefficients of ``1 - sum(c * B**lag)``."""
    m = max(coefs, default=0)
    poly = np.zeros(m + 1)
    poly[0] = 1.0
    for j, c in coefs.items():
        poly[j] -= c
    return poly


def min_root_modulus(poly: np.ndarray) -> float:
    """Smallest root modulus of an ascending-coefficient polynomial (inf if constant)."""
    coeffs = np.trim_zeros(np.asarray(poly, dtype=float), "b")
    if len(coeffs) <= 1:
        return math.inf
    return float(np.min(np.abs(np.roots(coeffs[::-1]))))


def roots_outside(poly: Sequence[float], radius: float = 1.0 + ROOT_MARGIN) -> bool:
    """True when every root of the ascending polynomial has modulus > ``radius``.

    Schur-Cohn step-down on the polynomial rescaled to z -> radius*z: the
    roots lie outside the unit circle iff every reflection coefficient
    satisfies |k| < 1.
    """
    a = [float(c) * radius**j for j, c in enumerate(poly)]
    while len(a) > 1 and a[-1] == 0.0:
        a.pop()
    if a[0] == 0.0:
        return False
    a = [c / a[0] for c in a]
    for m in range(len(a) - 1, 0, -1):
        k = a[m]
        if not abs(k) < 1.0:
            return False
        scale = 1.0 - k * k
        a = [(a[j] - k * a[m - j]) / scale for j in range(m)]
    return True


def check_feasible(ar: Mapping[int, float], ma: Mapping[int, float]) -> None:
    if not roots_outside(poly_from_map(ar)):
        raise InfeasibleParamsError("AR polynomial has a root on or inside the unit circle")
    if not roots_outside(poly_from_map(ma)):
        raise InfeasibleParamsError("MA polynomial has a root on or inside the unit circle")


def css_residuals(w: Sequence[float], order: SarimaOrder, params: SarimaParams) -> np.ndarray:
    """Residuals of the differenced series ``w``, conditioning on the first ``max AR lag`` values.

    Residuals before the conditioning point are taken as zero.
    """
    ar, ma = expand_polynomials(order, params)
    check_feasible(ar, ma)
    w = np.asarray(w, dtype=float)
    m = order.max_ar_lag
    if len(w) - m < 1:
        raise ValueError(f"series of length {len(w)} too short for AR lag {m}")
    u = w - (params.mu if params.mu is not None else 0.0)
    a = u[m:].copy()
    for j, c in ar.items():
        a -= c * u[m - j:len(u) - j]
    if not ma:
        return a
    denom = np.zeros(max(ma) + 1)
    denom[0] = 1.0
    for j, c in ma.items():
        denom[j] = -c
    return lfilter([1.0], denom, a)


def css_objective(w: Sequence[float], order: SarimaOrder, params: SarimaParams, burn_in: int | None = None):
    """Conditional-sum-of-squares residuals and Gaussian log-likelihood.

    The residual recursion starts after the first ``max AR lag`` values of
    ``w``; only residuals from index ``burn_in`` on are scored (default: the
    max AR lag). A larger ``burn_in`` lets models of different orders be
    scored on the same observations.

    Returns
    -------
    residuals : ndarray of the scored residuals
    sigma2_hat : float
    loglik : float
    """
    m = order.max_ar_lag
    burn_in = m if burn_in is None else burn_in
    if burn_in < m:
        raise ValueError(f"burn_in {burn_in} is shorter than the AR lag {m}")
    resid = css_residuals(w, order, params)[burn_in - m:]
    n_eff = len(resid)
    if n_eff < 1:
        raise ValueError(f"series of length {len(w)} too short for burn-in {burn_in}")
    sigma2 = float(resid @ resid) / n_eff
    if not sigma2 > 0:
        raise ValueError("zero residual variance")
    loglik = -n_eff / 2.0 * (math.log(2.0 * math.pi * sigma2) + 1.0)
    return resid, sigma2, loglik


def _unpack(x: np.ndarray, order: SarimaOrder, mu_loc: float, mu_scale: float) -> SarimaParams:
    i = 0
    parts = []
    for n in (order.p, order.q, order.P, order.Q):
        parts.append(tuple(float(v) for v in x[i:i + n]))
        i += n
    mu = mu_loc + mu_scale * float(x[i]) if order.has_mean else None
    return SarimaParams(*parts, mu=mu)


def fit(series: TimeSeries | Sequence[float], order: SarimaOrder, *, condition: int | None = None,
        xatol: float = 1e-8, maxiter: int = 5000) -> SarimaFit:
    """Estimate a SARIMA model by minimizing the negative CSS log-likelihood.

    Nelder-Mead starts with every coefficient at 0.1 and the mean (when
    present) at the sample mean of the differenced series. The mean is
    searched in units of the series' standard deviation so the simplex
    tolerance is scale free.

    ``condition`` is the number of leading observations of the original
    series that are conditioned on rather than scored. It defaults to the
    minimum the order needs, d + D*s + max AR lag.
    """
    y = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    lost = order.d + order.D * order.s
    need = lost + order.max_ar_lag
    condition = need if condition is None else condition
    if condition < need:
        raise ValueError(f"order {order} must condition on at least {need} observations")
    if len(y) <= condition + 10:
        raise ValueError(f"series of length {len(y)} too short for order {order} "
                         f"(need > {condition + 10})")
    w = difference(y, order.d, order.D, order.s)
    burn_in = condition - lost
    mu_loc = float(np.mean(w))
    mu_scale = float(np.std(w)) or 1.0

    n_coef = order.p + order.q + order.P + order.Q
    x0 = np.full(n_coef + int(order.has_mean), 0.1)
    if order.has_mean:
        x0[-1] = 0.0

    def objective(x):
        try:
            return -css_objective(w, order, _unpack(x, order, mu_loc, mu_scale), burn_in)[2]
        except InfeasibleParamsError:
            return PENALTY

    if len(x0) == 0:
        x_best, converged, nit = x0, True, 0
    else:
        simplex = np.vstack([x0, x0 + 0.1 * np.eye(len(x0))])
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": np.inf, "maxiter": maxiter,
                                "initial_simplex": simplex})
        if not res.fun < PENALTY:
            raise RuntimeError(f"no feasible parameters found for order {order}")
        x_best, converged, nit = res.x, bool(res.status == 0), int(res.nit)

    params = _unpack(x_best, order, mu_loc, mu_scale)
    _, sigma2, loglik = css_objective(w, order, params, burn_in)
    params = SarimaParams(params.phi, params.theta, params.Phi, params.Theta, params.mu, sigma2)
    return SarimaFit(order, params, loglik, 2.0 * order.k - 2.0 * loglik,
                     len(y) - condition, converged, nit)


def forecast(fitted: SarimaFit, history: TimeSeries | Sequence[float], h: int) -> np.ndarray:
    """Point forecasts ``h`` steps past the end of ``history`` on the original scale."""
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    order, params = fitted.order, fitted.params
    y = np.asarray(history.values if isinstance(history, TimeSeries) else history, dtype=float)
    w = difference(y, order.d, order.D, order.s)
    resid = css_residuals(w, order, params)
    ar, ma = expand_polynomials(order, params)
    mu = params.mu if params.mu is not None else 0.0
    u = list(w - mu)
    e = [0.0] * order.max_ar_lag + list(resid)
    for _ in range(h):
        t = len(u)
        nxt = sum(c * u[t - j] for j, c in ar.items())
        nxt -= sum(c * e[t - j] for j, c in ma.items() if t - j >= 0)
        u.append(nxt)
        e.append(0.0)
    w_future = np.array(u[len(w):]) + mu
    return integrate_forecasts(y, w_future, order.d, order.D, order.s)


def enumerate_orders(ranges: Mapping[str, Iterable[int] | int] | None = None) -> list[SarimaOrder]:
    r = dict(DEFAULT_RANGES)
    if ranges:
        r.update(ranges)
    s = int(r["s"])
    axes = [sorted(set(int(v) for v in r[name])) for name in ("p", "d", "q", "P", "D", "Q")]
    if any(len(a) == 0 for a in axes):
        raise ValueError("every order range must be non-empty")
    return [SarimaOrder(*combo, s=s) for combo in itertools.product(*axes)]


def _try_fit(args):
    y, order, condition = args
    try:
        return fit(y, order, condition=condition), None
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def selection_key(f: SarimaFit):
    return (f.aic, f.k, f.order.as_tuple())


def aic_search(series: TimeSeries | Sequence[float],
               ranges: Mapping[str, Iterable[int] | int] | None = None,
               workers: int = 1) -> tuple[SarimaFit, list[SarimaFit]]:
    """Fit every order in ``ranges`` and return the minimum-AIC fit and the table.

    Every candidate is scored on the same observations: the first
    max(d + D*s + p + P*s) values over the whole grid are conditioned on, so
    log-likelihoods (and AICs) of different orders are comparable.
    Ties go to fewer parameters, then to the lexicographically smaller
    (p, d, q, P, D, Q). Orders that fail to fit are logged and skipped.
    """
    y = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    orders = enumerate_orders(ranges)
    condition = max(o.d + o.D * o.s + o.max_ar_lag for o in orders)
    jobs = [(y, o, condition) for o in orders]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_try_fit, jobs))
    else:
        results = [_try_fit(j) for j in jobs]
    table = []
    for order, (f, err) in zip(orders, results):
        if f is None:
            log.info("skipping SARIMA%s: %s", order, err)
        else:
            table.append(f)
    if not table:
        raise RuntimeError("every SARIMA candidate failed to fit")
    return min(table, key=selection_key), table
