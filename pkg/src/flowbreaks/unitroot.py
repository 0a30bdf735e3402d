"""Augmented Dickey-Fuller unit-root testing.

The regression is the standard equivalent form

    dy_t = rho * y_{t-1} + sum_j psi_j * dy_{t-j} + [const] + [trend] + e_t

so the reported coefficient is rho = alpha - 1 and the test statistic is
rho_hat / SE(rho_hat).  Lag order is chosen by AIC minimization over a common
estimation sample (all candidates start after ``max_lag`` differenced
observations), then the winner is refit on its own longest sample.

P-values come from the MacKinnon (1994) response-surface polynomials and
finite-sample critical values from the MacKinnon (2010) update; the constants
below are those published tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import norm

from .series import DailySeries


class SingularDesignError(ValueError):
    """The ADF design matrix is rank deficient (e.g. a constant series)."""


class Deterministic(Enum):
    CONSTANT = "c"
    CONSTANT_TREND = "ct"
    NONE = "n"


class LagSelection(Enum):
    FIXED = "fixed"    # use max_lag as the lag order
    AIC_MIN = "aic"


@dataclass(frozen=True)
class AdfSpec:
    """Configuration for one ADF run.

    ``max_lag=None`` means the Schwert rule ``floor(12 * (T/100)**0.25)``.
    """

    deterministic: Deterministic = Deterministic.CONSTANT
    max_lag: int | None = None
    lag_selection: LagSelection = LagSelection.AIC_MIN


@dataclass(frozen=True)
class AdfRegression:
    """OLS summary of one ADF regression at a fixed lag."""

    rho: float                 # coefficient on y_{t-1} (= alpha - 1)
    se_rho: float
    t_stat: float
    params: np.ndarray         # [rho, psi_1..psi_lag, const?, trend?]
    lag: int
    nobs: int                  # rows in the regression
    ssr: float
    resid_var: float           # ssr / (nobs - k)
    aic: float


@dataclass(frozen=True)
class AdfResult:
    t_stat: float
    p_value: float
    crit_1: float
    crit_5: float
    crit_10: float
    chosen_lag: int
    alpha_hat: float
    stationary_at_5pct: bool
    p_clamped: bool
    nobs: int
    deterministic: Deterministic
    regression: AdfRegression

    def to_dict(self) -> dict:
        return {
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "crit_1pct": self.crit_1,
            "crit_5pct": self.crit_5,
            "crit_10pct": self.crit_10,
            "lag": self.chosen_lag,
            "alpha_hat": self.alpha_hat,
            "stationary_at_5pct": self.stationary_at_5pct,
            "p_clamped": self.p_clamped,
            "nobs": self.nobs,
            "deterministic": self.deterministic.value,
        }


# ---------------------------------------------------------------------------
# MacKinnon response surfaces (N=1).
#
# P-value surfaces: MacKinnon (1994), JBES 12.2.  p = Phi(poly(stat)), with
# the "small-p" polynomial used at or below tau_star and the "large-p" one
# above, clamped to {0, 1} outside [tau_min, tau_max].
# Critical values: MacKinnon (2010), "Critical Values for Cointegration
# Tests"; crit = b0 + b1/T + b2/T^2 + b3/T^3 per significance level.
# ---------------------------------------------------------------------------

_PVAL_SURFACE = {
    # det: (tau_star, tau_min, tau_max, small-p coefs, large-p coefs)
    Deterministic.NONE: (
        -1.04, -19.04, math.inf,
        (0.6344, 1.2378, 0.032496),
        (0.4797, 0.93557, -0.06999, 0.033066),
    ),
    Deterministic.CONSTANT: (
        -1.61, -18.83, 2.74,
        (2.1659, 1.4412, 0.038269),
        (1.7339, 0.93202, -0.12745, -0.010368),
    ),
    Deterministic.CONSTANT_TREND: (
        -2.89, -16.18, 0.70,
        (3.2512, 1.6047, 0.049588),
        (2.5261, 0.61654, -0.37956, -0.060285),
    ),
}

_CRIT_SURFACE = {
    # det: rows (1%, 5%, 10%), columns (b0, b1, b2, b3)
    Deterministic.NONE: (
        (-2.56574, -2.2358, -3.627, 0.0),
        (-1.94100, -0.2686, -3.365, 31.223),
        (-1.61682, 0.2656, -2.714, 25.364),
    ),
    Deterministic.CONSTANT: (
        (-3.43035, -6.5393, -16.786, -79.433),
        (-2.86154, -2.8903, -4.234, -40.040),
        (-2.56677, -1.5384, -2.809, 0.0),
    ),
    Deterministic.CONSTANT_TREND: (
        (-3.95877, -9.0531, -28.428, -134.155),
        (-3.41049, -4.3904, -9.036, -45.374),
        (-3.12705, -2.5856, -3.925, -22.380),
    ),
}

P_CLAMP = (1e-4, 0.9999)


def mackinnon_pvalue(stat: float, deterministic: Deterministic) -> float:
    """Raw response-surface p-value (0.0 / 1.0 outside the tabulated range)."""
    tau_star, tau_min, tau_max, smallp, largep = _PVAL_SURFACE[deterministic]
    if stat > tau_max:
        return 1.0
    if stat < tau_min:
        return 0.0
    coefs = smallp if stat <= tau_star else largep
    z = sum(c * stat**k for k, c in enumerate(coefs))
    return float(norm.cdf(z))


def mackinnon_crit(deterministic: Deterministic, nobs: int) -> tuple[float, float, float]:
    """Finite-sample (1%, 5%, 10%) critical values at ``nobs`` observations."""
    rows = _CRIT_SURFACE[deterministic]
    return tuple(
        b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3 for b0, b1, b2, b3 in rows
    )  # type: ignore[return-value]


def _as_values(y) -> np.ndarray:
    vals = y.values if isinstance(y, DailySeries) else np.asarray(y, dtype=np.float64)
    if np.isnan(vals).any():
        raise ValueError("series contains NaN")
    return vals


def _design(values: np.ndarray, deterministic: Deterministic, lag: int,
            start: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows t = start..T-2 of the ADF regression, in dy index space."""
    dy = np.diff(values)
    n = dy.size - start
    dep = dy[start:]
    cols = [values[start:-1]]
    for j in range(1, lag + 1):
        cols.append(dy[start - j: start - j + n])
    if deterministic in (Deterministic.CONSTANT, Deterministic.CONSTANT_TREND):
        cols.append(np.ones(n))
    if deterministic is Deterministic.CONSTANT_TREND:
        cols.append(np.arange(1.0, n + 1.0))
    return dep, np.column_stack(cols)


def _fit(dep: np.ndarray, X: np.ndarray, lag: int) -> AdfRegression:
    n, k = X.shape
    if n - k <= 5:
        raise ValueError(f"too few observations ({n}) for {k} regressors")
    params, _, rank, _ = np.linalg.lstsq(X, dep, rcond=None)
    if rank < k:
        raise SingularDesignError(
            f"ADF design matrix is rank deficient (rank {rank} < {k} columns)"
        )
    resid = dep - X @ params
    ssr = float(resid @ resid)
    resid_var = ssr / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se_rho = math.sqrt(max(resid_var * xtx_inv[0, 0], 0.0))
    rho = float(params[0])
    t_stat = rho / se_rho if se_rho > 0 else math.copysign(math.inf, rho) if rho else 0.0
    if ssr > 0:
        llf = -0.5 * n * (math.log(2 * math.pi) + math.log(ssr / n) + 1.0)
        aic = -2.0 * llf + 2.0 * k
    else:
        aic = -math.inf
    return AdfRegression(rho=rho, se_rho=se_rho, t_stat=t_stat, params=params,
                         lag=lag, nobs=n, ssr=ssr, resid_var=resid_var, aic=aic)


def adf_regression(y, spec: AdfSpec, lag: int) -> AdfRegression:
    """Fit the ADF regression at a fixed lag on the longest available sample."""
    values = _as_values(y)
    if lag < 0:
        raise ValueError("lag must be non-negative")
    dep, X = _design(values, spec.deterministic, lag, start=lag)
    return _fit(dep, X, lag)


def default_max_lag(nobs: int) -> int:
    return int(math.floor(12.0 * (nobs / 100.0) ** 0.25))


def adf_test(y, spec: AdfSpec = AdfSpec()) -> AdfResult:
    """Run the ADF test with the configured deterministic terms and lag rule."""
    values = _as_values(y)
    T = values.size
    if T < 30:
        raise ValueError(f"ADF test needs at least 30 observations, got {T}")
    max_lag = spec.max_lag if spec.max_lag is not None else default_max_lag(T)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if max_lag >= (T - 10) / 2:
        raise ValueError(f"max_lag {max_lag} too large for sample length {T}")

    if spec.lag_selection is LagSelection.FIXED:
        chosen = max_lag
    else:
        best_aic = math.inf
        chosen = 0
        for k in range(max_lag + 1):
            dep, X = _design(values, spec.deterministic, k, start=max_lag)
            reg = _fit(dep, X, k)
            if reg.aic < best_aic:
                best_aic = reg.aic
                chosen = k

    reg = adf_regression(values, spec, chosen)
    crit1, crit5, crit10 = mackinnon_crit(spec.deterministic, reg.nobs)
    raw_p = mackinnon_pvalue(reg.t_stat, spec.deterministic)
    lo, hi = P_CLAMP
    p = min(max(raw_p, lo), hi)
    return AdfResult(
        t_stat=reg.t_stat,
        p_value=p,
        crit_1=crit1,
        crit_5=crit5,
        crit_10=crit10,
        chosen_lag=chosen,
        alpha_hat=reg.rho + 1.0,
        stationary_at_5pct=reg.t_stat < crit5,
        p_clamped=(p != raw_p),
        nobs=reg.nobs,
        deterministic=spec.deterministic,
        regression=reg,
    )
