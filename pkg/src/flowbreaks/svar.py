"""Two-variable structural VAR with Cholesky identification and a Wald
structural-change test.

Estimation is equation-by-equation OLS on the stacked lag design (identical
to multivariate OLS for a common regressor set).  The residual covariance
uses the 1/T_eff divisor and feeds both lag selection,

    AIC(p) = ln det(Sigma_u) + 2 k / T_eff,   k = 2 (1 + 2p),

evaluated on a common sample aligned at the longest candidate lag, and the
Cholesky impact matrices under either variable ordering.  The Wald test
compares the stacked lag coefficients (intercepts excluded) of two windows
using the OLS covariance Sigma_u (kron) (X'X)^-1 restricted to those rows;
it depends only on reduced-form quantities, so it is identical under both
orderings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum

import numpy as np
from scipy.stats import chi2

from .series import DailySeries, first_difference, log_transform, split_at
from .unitroot import AdfResult, AdfSpec, adf_test

log = logging.getLogger(__name__)

MIN_OVERLAP_DAYS = 60


class InsufficientOverlapError(ValueError):
    """The two series share too short a date range."""


class DegeneratePanelError(ValueError):
    """A transformed column has no variation (e.g. constant inputs)."""


class SingularRegressorsError(ValueError):
    """The lag design matrix is rank deficient (e.g. collinear columns)."""


class Ordering(Enum):
    FIRST_VAR_LEADS = "first"
    SECOND_VAR_LEADS = "second"


@dataclass(frozen=True)
class Panel:
    """Aligned, transformed two-column stationary panel."""

    start_date: date
    data: np.ndarray                      # (T, 2) log1p first differences
    labels: tuple[str, str]
    adf: tuple[AdfResult, AdfResult] | None = None

    @property
    def nobs(self) -> int:
        return self.data.shape[0]

    @property
    def stationary(self) -> tuple[bool, bool] | None:
        if self.adf is None:
            return None
        return tuple(r.stationary_at_5pct for r in self.adf)  # type: ignore[return-value]


@dataclass(frozen=True)
class VarModel:
    p: int
    c: np.ndarray                         # (2,) intercepts
    phi: tuple[np.ndarray, ...]           # p matrices, phi[i][eq, var]
    sigma_u: np.ndarray                   # (2, 2) residual covariance, E'E / T_eff
    t_eff: int
    aic: float
    labels: tuple[str, str] = ("y1", "y2")
    coef: np.ndarray = field(repr=False, default=None)      # (1+2p, 2) columns = equations
    xtx_inv: np.ndarray = field(repr=False, default=None)
    resid: np.ndarray = field(repr=False, default=None)

    def lag_coef_vector(self) -> np.ndarray:
        """Lag coefficients stacked equation by equation (intercepts dropped)."""
        return np.concatenate([self.coef[1:, 0], self.coef[1:, 1]])

    def lag_coef_cov(self) -> np.ndarray:
        """OLS covariance of the stacked lag coefficients."""
        full = np.kron(self.sigma_u, self.xtx_inv)
        k = self.coef.shape[0]
        keep = np.concatenate([np.arange(1, k), k + np.arange(1, k)])
        return full[np.ix_(keep, keep)]


@dataclass(frozen=True)
class ImpactMatrix:
    """Lower-triangular contemporaneous impact of orthogonal shocks.

    ``p_matrix`` lives in leader-first coordinates: row/column 0 is the
    ordering's leading variable.  ``entries`` maps (response, shock) pairs in
    the panel's original variable labels to the corresponding loadings.
    """

    ordering: Ordering
    p_matrix: np.ndarray
    variables: tuple[str, str]            # (leader, follower)
    entries: dict[tuple[str, str], float]


@dataclass(frozen=True)
class WaldReport:
    theta_pre: np.ndarray
    theta_post: np.ndarray
    cov_pre: np.ndarray
    cov_post: np.ndarray
    w: float
    df: int
    p_value: float
    n_magnitude_increased: int            # coefficients with |post| > |pre|
    ridge_applied: bool

    def to_dict(self) -> dict:
        return {
            "wald_statistic": self.w,
            "df": self.df,
            "p_value": self.p_value,
            "n_magnitude_increased": self.n_magnitude_increased,
            "n_coefficients": int(self.theta_pre.size),
            "ridge_applied": self.ridge_applied,
        }


def prepare_pair(a: DailySeries, b: DailySeries, *, adf_spec: AdfSpec = AdfSpec(),
                 min_overlap: int = MIN_OVERLAP_DAYS, run_adf: bool = True) -> Panel:
    """Align two daily series, transform to log1p first differences, and
    record ADF verdicts on the transformed columns.

    Post-transform non-stationarity is logged and flagged, not fatal.
    """
    lo = max(a.start_date, b.start_date)
    hi = min(a.end_date, b.end_date)
    overlap = (hi - lo).days + 1
    if overlap < min_overlap:
        raise InsufficientOverlapError(
            f"series overlap {overlap} day(s) is below the {min_overlap}-day minimum"
        )
    cols = []
    for s in (a, b):
        i = s.index_of(lo)
        window = s.with_values(s.values[i:i + overlap], start_date=lo)
        cols.append(first_difference(log_transform(window, plus_one=True)).values)
    data = np.column_stack(cols)
    for j, s in enumerate((a, b)):
        if np.ptp(data[:, j]) == 0.0:
            raise DegeneratePanelError(
                f"column {s.label!r} has no variation after log1p differencing"
            )
    adf_results = None
    if run_adf:
        adf_results = tuple(adf_test(data[:, j], adf_spec) for j in (0, 1))
        for s, r in zip((a, b), adf_results):
            if not r.stationary_at_5pct:
                log.warning("transformed column %r fails the 5%% ADF gate (t=%.3f)",
                            s.label, r.t_stat)
    return Panel(start_date=lo + timedelta(days=1), data=data,
                 labels=(a.label or "y1", b.label or "y2"), adf=adf_results)


def _lag_design(data: np.ndarray, p: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Dependent rows and [1, Y_{t-1}, ..., Y_{t-p}] design from row ``start``."""
    T = data.shape[0]
    rows = T - start
    dep = data[start:]
    cols = [np.ones((rows, 1))]
    for i in range(1, p + 1):
        cols.append(data[start - i:T - i])
    return dep, np.hstack(cols)


def fit_var(panel: Panel | np.ndarray, p: int,
            labels: tuple[str, str] | None = None) -> VarModel:
    """OLS fit of a VAR(p) on the panel."""
    data = panel.data if isinstance(panel, Panel) else np.asarray(panel, dtype=np.float64)
    if labels is None:
        labels = panel.labels if isinstance(panel, Panel) else ("y1", "y2")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"panel must be (T, 2), got {data.shape}")
    T = data.shape[0]
    if p < 1:
        raise ValueError("lag order must be at least 1")
    if T - p <= 4 * p + 7:
        raise ValueError(f"sample length {T} too short for VAR({p})")
    dep, X = _lag_design(data, p, start=p)
    coef, _, rank, _ = np.linalg.lstsq(X, dep, rcond=None)
    if rank < X.shape[1]:
        raise SingularRegressorsError(
            f"lag design is rank deficient (rank {rank} < {X.shape[1]})"
        )
    resid = dep - X @ coef
    t_eff = T - p
    sigma = resid.T @ resid / t_eff
    sigma = 0.5 * (sigma + sigma.T)
    det = float(np.linalg.det(sigma))
    if det <= 0:
        raise DegeneratePanelError("residual covariance is singular")
    k = 2 * (1 + 2 * p)
    aic = math.log(det) + 2.0 * k / t_eff
    phi = tuple(coef[1 + 2 * i: 3 + 2 * i, :].T.copy() for i in range(p))
    return VarModel(p=p, c=coef[0].copy(), phi=phi, sigma_u=sigma, t_eff=t_eff,
                    aic=aic, labels=labels, coef=coef,
                    xtx_inv=np.linalg.inv(X.T @ X), resid=resid)


def select_lag(panel: Panel | np.ndarray, p_max: int = 14,
               labels: tuple[str, str] | None = None) -> VarModel:
    """AIC-minimizing lag order over a common estimation sample.

    All candidates are scored on rows aligned at the largest feasible lag;
    ties go to the smaller order.  The winner is refit on its full sample.
    """
    data = panel.data if isinstance(panel, Panel) else np.asarray(panel, dtype=np.float64)
    T = data.shape[0]
    feasible = (T - 8) // 5          # largest p with T - p > 4p + 7
    p_cap = min(p_max, feasible)
    if p_cap < 1:
        raise ValueError(f"sample length {T} cannot support any VAR lag")
    if p_cap < p_max:
        log.info("p_max reduced from %d to %d for sample length %d", p_max, p_cap, T)
    best_p, best_aic = 1, math.inf
    t_common = T - p_cap
    for p in range(1, p_cap + 1):
        dep, X = _lag_design(data, p, start=p_cap)
        coef, _, rank, _ = np.linalg.lstsq(X, dep, rcond=None)
        if rank < X.shape[1]:
            raise SingularRegressorsError("lag design is rank deficient")
        resid = dep - X @ coef
        sigma = resid.T @ resid / t_common
        det = float(np.linalg.det(sigma))
        if det <= 0:
            raise DegeneratePanelError("residual covariance is singular")
        aic = math.log(det) + 2.0 * 2 * (1 + 2 * p) / t_common
        if aic < best_aic:
            best_p, best_aic = p, aic
    return fit_var(panel if isinstance(panel, Panel) else data, best_p, labels=labels)


def impact_matrix(model: VarModel, ordering: Ordering) -> ImpactMatrix:
    """Cholesky impact matrix under the requested variable ordering."""
    sigma = model.sigma_u
    eig = np.linalg.eigvalsh(sigma)
    if eig.min() <= 1e-12 * np.trace(sigma):
        raise DegeneratePanelError(
            f"residual covariance is not positive definite (eigenvalues {eig})"
        )
    perm = (0, 1) if ordering is Ordering.FIRST_VAR_LEADS else (1, 0)
    sp = sigma[np.ix_(perm, perm)]
    p_mat = np.linalg.cholesky(sp)
    names = (model.labels[perm[0]], model.labels[perm[1]])
    entries = {}
    for i in range(2):
        for j in range(i + 1):
            entries[(names[i], names[j])] = float(p_mat[i, j])
    return ImpactMatrix(ordering=ordering, p_matrix=p_mat, variables=names,
                        entries=entries)


def wald_test(pre: VarModel, post: VarModel, *, include_intercepts: bool = False,
              ridge_scale: float = 1e-10) -> WaldReport:
    """Wald test of equality of the two windows' stacked lag coefficients.

    A near-singular combined covariance is ridged by ``ridge_scale * trace``
    and flagged.  The chi-square p-value is two-sided in the coefficient
    vector; the count of coefficients that grew in magnitude is reported as
    the directional summary.
    """
    if pre.p != post.p:
        raise ValueError(f"windows must share the lag order, got {pre.p} and {post.p}")

    def theta_cov(m: VarModel) -> tuple[np.ndarray, np.ndarray]:
        if include_intercepts:
            th = np.concatenate([m.coef[:, 0], m.coef[:, 1]])
            return th, np.kron(m.sigma_u, m.xtx_inv)
        return m.lag_coef_vector(), m.lag_coef_cov()

    th_pre, cov_pre = theta_cov(pre)
    th_post, cov_post = theta_cov(post)
    delta = th_post - th_pre
    combined = cov_pre + cov_post
    ridge_applied = False
    try:
        sol = np.linalg.solve(combined, delta)
        if not np.isfinite(sol).all():
            raise np.linalg.LinAlgError("non-finite solve")
    except np.linalg.LinAlgError:
        ridge_applied = True
        combined = combined + ridge_scale * np.trace(combined) * np.eye(combined.shape[0])
        sol = np.linalg.solve(combined, delta)
        log.warning("combined coefficient covariance was singular; ridge applied")
    w = float(delta @ sol)
    w = max(w, 0.0)
    df = delta.size
    return WaldReport(
        theta_pre=th_pre,
        theta_post=th_post,
        cov_pre=cov_pre,
        cov_post=cov_post,
        w=w,
        df=df,
        p_value=float(chi2.sf(w, df)),
        n_magnitude_increased=int(np.count_nonzero(np.abs(th_post) > np.abs(th_pre))),
        ridge_applied=ridge_applied,
    )


@dataclass(frozen=True)
class SvarRegimeReport:
    labels: tuple[str, str]
    split_date: date
    selected_lag: int
    window_nobs: dict[str, int]
    impacts: dict[str, dict[str, dict[str, float]]]   # ordering -> window -> "resp<-shock"
    pct_change: dict[str, dict[str, float]]           # ordering -> entry -> pre->post %
    wald: WaldReport
    adf_stationary: tuple[bool, bool] | None
    warnings: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "split_date": self.split_date.isoformat(),
            "selected_lag": self.selected_lag,
            "window_nobs": self.window_nobs,
            "impacts": self.impacts,
            "pct_change_pre_to_post": self.pct_change,
            "wald": {o: self.wald.to_dict() for o in self.impacts},
            "adf_stationary": list(self.adf_stationary) if self.adf_stationary else None,
            "warnings": list(self.warnings),
        }


def _entry_key(resp: str, shock: str) -> str:
    return f"{resp} to {shock} shock"


def regime_analysis(a: DailySeries, b: DailySeries, split_date: date, *,
                    orderings: tuple[Ordering, ...] = (Ordering.FIRST_VAR_LEADS,
                                                       Ordering.SECOND_VAR_LEADS),
                    p_max: int = 14, adf_spec: AdfSpec = AdfSpec(),
                    min_overlap: int = MIN_OVERLAP_DAYS) -> SvarRegimeReport:
    """Estimate the SVAR on the full sample and both regime windows.

    Both windows are refit at the full-sample AIC lag so the Wald comparison
    is dimension-compatible.  The Wald statistic is ordering-invariant by
    construction (reduced-form coefficients); it is reported once per
    ordering for schema uniformity.
    """
    warnings: list[str] = []
    full_panel = prepare_pair(a, b, adf_spec=adf_spec, min_overlap=min_overlap)
    if full_panel.stationary and not all(full_panel.stationary):
        warnings.append("a transformed column failed the 5% stationarity gate")

    windows: dict[str, Panel] = {"full_sample": full_panel}
    for name, sel in (("pre", "pre"), ("post", "post")):
        parts = []
        for s in (a, b):
            sp = split_at(s, split_date)
            parts.append(sp.pre if sel == "pre" else sp.post)
        windows[name] = prepare_pair(parts[0], parts[1], adf_spec=adf_spec,
                                     min_overlap=min(min_overlap, 30), run_adf=False)

    full_model = select_lag(full_panel, p_max=p_max)
    p_star = full_model.p
    models = {"full_sample": full_model}
    for name in ("pre", "post"):
        models[name] = fit_var(windows[name], p_star)

    impacts: dict[str, dict[str, dict[str, float]]] = {}
    pct: dict[str, dict[str, float]] = {}
    for ordering in orderings:
        key = ordering.value
        impacts[key] = {}
        for wname, model in models.items():
            im = impact_matrix(model, ordering)
            impacts[key][wname] = {
                _entry_key(r, s): v for (r, s), v in im.entries.items()
            }
        pct[key] = {}
        for entry, pre_v in impacts[key]["pre"].items():
            post_v = impacts[key]["post"][entry]
            pct[key][entry] = (post_v - pre_v) / pre_v * 100.0 if pre_v else math.nan

    wald = wald_test(models["pre"], models["post"])
    return SvarRegimeReport(
        labels=(a.label or "a", b.label or "b"),
        split_date=split_date,
        selected_lag=p_star,
        window_nobs={k: v.nobs for k, v in windows.items()},
        impacts=impacts,
        pct_change=pct,
        wald=wald,
        adf_stationary=full_panel.stationary,
        warnings=tuple(warnings),
    )
