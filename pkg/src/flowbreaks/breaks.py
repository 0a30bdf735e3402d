"""Multiple structural break estimation for the mean-shift model.

Break dates are found by exact dynamic programming over a precomputed table
of segment sums of squares, so the returned partition is the global SSR
minimizer over all partitions respecting the trimming constraint (not a
heuristic).  Significance of the single-break alternative is assessed with a
sup-F statistic whose null distribution is simulated from i.i.d. Gaussian
samples of the same length and trimming; the statistic is scale and location
free, so one simulated distribution serves any series of that shape.

Index convention: ``break_indices`` holds 1-based last indices of each
regime, which coincide with the 0-based positions of the first observation
of the following regime.  ``break_dates`` are the first days under the new
regime mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from functools import lru_cache

import numpy as np

from .series import DailySeries


class InfeasibleBreaksError(ValueError):
    """Requested break count cannot satisfy the minimum segment length."""


class Selection(Enum):
    FIXED_M = "fixed"
    BIC_MIN = "bic"
    SEQUENTIAL_SUPF = "seq"


@dataclass(frozen=True)
class BreakConfig:
    """Trimming, break budget, and model-selection rule.

    ``null_sims``/``seed`` drive the simulated sup-F null distribution.
    """

    max_breaks: int = 5
    trim: float = 0.15
    selection: Selection = Selection.BIC_MIN
    null_sims: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.trim <= 0.25:
            raise ValueError(f"trim must be in (0, 0.25], got {self.trim}")
        if self.max_breaks < 1:
            raise ValueError("max_breaks must be positive")
        if self.null_sims < 100:
            raise ValueError("null_sims must be at least 100")

    def min_segment(self, nobs: int) -> int:
        h = math.ceil(self.trim * nobs)
        if h < 2:
            raise InfeasibleBreaksError(
                f"minimum segment length {h} < 2 for T={nobs}, trim={self.trim}"
            )
        return h


@dataclass(frozen=True)
class BreakModel:
    """An estimated mean-shift partition."""

    break_indices: tuple[int, ...]    # 1-based last index of each regime but the final
    break_dates: tuple[date, ...]     # first day of each new regime
    regime_means: tuple[float, ...]
    global_ssr: float
    m: int
    nobs: int

    def regime_bounds(self) -> list[tuple[int, int]]:
        """0-based inclusive (start, end) per regime."""
        edges = (0, *self.break_indices, self.nobs)
        return [(edges[i], edges[i + 1] - 1) for i in range(len(edges) - 1)]


@dataclass(frozen=True)
class SupFResult:
    sup_f: float
    q: int
    trim_range: tuple[int, int]       # admissible first-regime lengths [h, T-h]
    p_value: float
    reject_at_5pct: bool
    best_index: int | None            # argmax break index (1-based), None if degenerate
    best_date: date | None
    crit_5pct: float


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, DailySeries) else np.asarray(y, dtype=np.float64)


def _start_date(y) -> date | None:
    return y.start_date if isinstance(y, DailySeries) else None


def segment_ssr_table(y) -> np.ndarray:
    """All-segments SSR table: ``table[i, j]`` for 0-based inclusive i <= j.

    Built from prefix sums of the globally demeaned series (segment SSR is
    shift invariant), O(T^2) time and memory.  Entries below the diagonal
    are zero filler.
    """
    v = _values(y)
    T = v.size
    if T < 4:
        raise ValueError(f"need at least 4 observations, got {T}")
    z = v - v.mean()
    s1 = np.concatenate([[0.0], np.cumsum(z)])
    s2 = np.concatenate([[0.0], np.cumsum(z * z)])
    i = np.arange(T)[:, None]
    j = np.arange(T)[None, :]
    n = j - i + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        table = (s2[j + 1] - s2[i]) - (s1[j + 1] - s1[i]) ** 2 / n
    upper = j >= i
    return np.where(upper, np.maximum(table, 0.0), 0.0)


def _suffix_dp(table: np.ndarray, h: int, k_max: int) -> np.ndarray:
    """R[k, s] = min SSR partitioning y[s:] into k+1 segments of length >= h."""
    T = table.shape[0]
    R = np.full((k_max + 1, T + 1), np.inf)
    R[0, :T] = table[np.arange(T), T - 1]
    for k in range(1, k_max + 1):
        # suffix starting at s needs (k+1)*h observations
        for s in range(0, T - (k + 1) * h + 1):
            lo = s + h - 1            # earliest end of the first segment
            hi = T - 1 - k * h        # latest end leaving room for k segments
            cand = table[s, lo:hi + 1] + R[k - 1, lo + 1:hi + 2]
            R[k, s] = cand.min()
    return R


def _reconstruct(table: np.ndarray, R: np.ndarray, h: int, m: int) -> list[int]:
    """Earliest-lexicographic optimal break set for exactly m breaks."""
    T = table.shape[0]
    breaks: list[int] = []
    s = 0
    for k in range(m, 0, -1):
        lo = s + h - 1
        hi = T - 1 - k * h
        cand = table[s, lo:hi + 1] + R[k - 1, lo + 1:hi + 2]
        target = R[k, s]
        hits = np.flatnonzero(cand == target)
        e = lo + (int(hits[0]) if hits.size else int(np.argmin(cand)))
        breaks.append(e + 1)          # 1-based last index of this regime
        s = e + 1
    return breaks


def _model_from_breaks(v: np.ndarray, breaks: list[int], start: date | None) -> BreakModel:
    edges = [0, *breaks, v.size]
    means = []
    ssr = 0.0
    for a, b in zip(edges, edges[1:]):
        seg = v[a:b]
        mu = seg.mean()
        means.append(float(mu))
        ssr += float(((seg - mu) ** 2).sum())
    dates = tuple(start + timedelta(days=b) for b in breaks) if start else ()
    return BreakModel(break_indices=tuple(breaks), break_dates=dates,
                      regime_means=tuple(means), global_ssr=ssr,
                      m=len(breaks), nobs=v.size)


def estimate_breaks(y, cfg: BreakConfig, m: int) -> BreakModel:
    """Exact SSR-optimal partition with exactly ``m`` breaks.

    Ties are broken toward the earliest break dates, so results are
    deterministic.
    """
    v = _values(y)
    T = v.size
    h = cfg.min_segment(T)
    if m < 0:
        raise ValueError("m must be non-negative")
    if (m + 1) * h > T:
        raise InfeasibleBreaksError(
            f"{m} breaks with minimum segment {h} need {(m + 1) * h} > {T} observations"
        )
    if m == 0:
        return _model_from_breaks(v, [], _start_date(y))
    table = segment_ssr_table(v)
    R = _suffix_dp(table, h, m)
    breaks = _reconstruct(table, R, h, m)
    return _model_from_breaks(v, breaks, _start_date(y))


def _bic(ssr: float, T: int, m: int) -> float:
    # parameters: m+1 regime means plus m break positions
    with np.errstate(divide="ignore"):
        return float(T * np.log(ssr / T) + (2 * m + 1) * np.log(T)) if ssr > 0 else -math.inf


def select_num_breaks(y, cfg: BreakConfig) -> BreakModel:
    """Choose the number of breaks by the configured rule.

    BIC_MIN minimizes ``T ln(SSR_m/T) + (2m+1) ln T`` over m = 0..max_breaks.
    SEQUENTIAL_SUPF grows the partition while a simulated-null sup-F test on
    some current regime rejects at 5%.  FIXED_M returns the max_breaks model.
    A zero-variance series short-circuits to the no-break model.
    """
    v = _values(y)
    T = v.size
    h = cfg.min_segment(T)
    start = _start_date(y)
    if np.ptp(v) == 0.0:
        return _model_from_breaks(v, [], start)
    m_max = min(cfg.max_breaks, T // h - 1)
    if m_max < 1:
        return _model_from_breaks(v, [], start)

    if cfg.selection is Selection.FIXED_M:
        return estimate_breaks(v if start is None else y, cfg, m_max)

    if cfg.selection is Selection.BIC_MIN:
        table = segment_ssr_table(v)
        R = _suffix_dp(table, h, m_max)
        best_m, best_bic = 0, _bic(float(table[0, T - 1]), T, 0)
        for m in range(1, m_max + 1):
            b = _bic(float(R[m, 0]), T, m)
            if b < best_bic:
                best_m, best_bic = m, b
        breaks = _reconstruct(table, R, h, best_m) if best_m else []
        return _model_from_breaks(v, breaks, start)

    # sequential sup-F growth: test every current regime for an internal
    # break, take the smallest per-segment p, and apply a Sidak family
    # correction across the testable segments so the add decision stays a
    # 5% test regardless of how many regimes exist.
    model = _model_from_breaks(v, [], start)
    while model.m < m_max:
        best_p = None
        n_testable = 0
        for a, b in model.regime_bounds():
            seg = v[a:b + 1]
            if seg.size < 2 * h + 2:
                continue
            curve = _supf_curve(seg, h)
            if curve is None:
                continue
            n_testable += 1
            taus, F = curve
            i = int(np.argmax(F))
            p = _null_pvalue(float(F[i]), seg.size, h, cfg.null_sims, cfg.seed)
            if best_p is None or p < best_p:
                best_p = p
        if best_p is None:
            break
        family_p = 1.0 - (1.0 - best_p) ** n_testable
        if family_p >= 0.05:
            break
        model = estimate_breaks(v if start is None else y, cfg, model.m + 1)
    return model


def _supf_curve(v: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray] | None:
    """F statistics over admissible first-regime lengths; None if degenerate."""
    T = v.size
    z = v - v.mean()
    s1 = np.concatenate([[0.0], np.cumsum(z)])
    s2 = np.concatenate([[0.0], np.cumsum(z * z)])
    ssr0 = s2[-1] - s1[-1] ** 2 / T
    if ssr0 <= 0.0:
        return None
    taus = np.arange(h, T - h + 1)
    left = s2[taus] - s1[taus] ** 2 / taus
    right = (s2[-1] - s2[taus]) - (s1[-1] - s1[taus]) ** 2 / (T - taus)
    ssr1 = np.maximum(left + right, 0.0)
    with np.errstate(divide="ignore"):
        F = (ssr0 - ssr1) / (ssr1 / (T - 2))
    return taus, F


@lru_cache(maxsize=32)
def supf_null_distribution(nobs: int, h: int, n_sims: int, seed: int) -> np.ndarray:
    """Sorted sup-F draws under i.i.d. Gaussian data of length ``nobs``.

    Deterministic for a given seed; cached because the distribution depends
    only on (nobs, h), not the data.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(nobs, h)))
    stats = np.empty(n_sims)
    block = max(1, min(n_sims, 50_000_000 // (8 * nobs)))
    taus = np.arange(h, nobs - h + 1)
    done = 0
    while done < n_sims:
        nb = min(block, n_sims - done)
        x = rng.standard_normal((nb, nobs))
        x -= x.mean(axis=1, keepdims=True)
        s1 = np.concatenate([np.zeros((nb, 1)), np.cumsum(x, axis=1)], axis=1)
        s2 = np.concatenate([np.zeros((nb, 1)), np.cumsum(x * x, axis=1)], axis=1)
        ssr0 = s2[:, -1] - s1[:, -1] ** 2 / nobs
        left = s2[:, taus] - s1[:, taus] ** 2 / taus
        right = (s2[:, -1:] - s2[:, taus]) - (s1[:, -1:] - s1[:, taus]) ** 2 / (nobs - taus)
        ssr1 = np.maximum(left + right, 1e-300)
        F = (ssr0[:, None] - ssr1) / (ssr1 / (nobs - 2))
        stats[done:done + nb] = F.max(axis=1)
        done += nb
    stats.sort()
    stats.flags.writeable = False
    return stats


def _null_pvalue(stat: float, nobs: int, h: int, n_sims: int, seed: int) -> float:
    null = supf_null_distribution(nobs, h, n_sims, seed)
    exceed = int(null.size - np.searchsorted(null, stat, side="left"))
    return (1 + exceed) / (1 + null.size)


def supf_test(y, cfg: BreakConfig) -> SupFResult:
    """Sup-F test of no break against a single mean shift."""
    v = _values(y)
    T = v.size
    h = cfg.min_segment(T)
    if T < 2 * h + 2:
        raise ValueError(f"sup-F needs T >= 2h+2 = {2 * h + 2}, got {T}")
    start = _start_date(y)
    curve = _supf_curve(v, h)
    if curve is None:
        return SupFResult(sup_f=0.0, q=1, trim_range=(h, T - h), p_value=1.0,
                          reject_at_5pct=False, best_index=None, best_date=None,
                          crit_5pct=math.nan)
    taus, F = curve
    i = int(np.argmax(F))
    sup_f = float(F[i])
    tau = int(taus[i])
    null = supf_null_distribution(T, h, cfg.null_sims, cfg.seed)
    p = _null_pvalue(sup_f, T, h, cfg.null_sims, cfg.seed)
    return SupFResult(
        sup_f=sup_f,
        q=1,
        trim_range=(h, T - h),
        p_value=p,
        reject_at_5pct=p < 0.05,
        best_index=tau,
        best_date=start + timedelta(days=tau) if start else None,
        crit_5pct=float(np.quantile(null, 0.95)),
    )
