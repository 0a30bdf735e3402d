"""Phase-randomized surrogate generation and significance harnesses.

FT surrogates keep the Fourier amplitudes of the input and draw fresh
uniform phases for every non-DC, non-Nyquist bin, so the periodogram is
preserved bin-exactly.  AAFT surrogates additionally preserve the amplitude
distribution: the output is an exact permutation of the input values whose
rank order follows an FT surrogate of rank-matched Gaussian noise.

The significance harnesses rerun a detector on each surrogate and report an
add-one p-value for the observed statistic against the surrogate ensemble:

    p = (1 + #{surrogate statistic >= observed}) / (1 + n_surrogates)

For breaks the statistic is the sup-F value; for energy it is the peak
instantaneous energy (surrogates preserve total power, so peaks are directly
comparable).  The count of surrogates that additionally place a significant
break (or any event) within the configured day window of the observed one is
reported alongside.

Surrogate ``i`` always draws from substream (seed, i), so verdicts are
bit-identical across runs and any execution order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import breaks as breaks_mod
from . import hht as hht_mod
from .series import DailySeries

log = logging.getLogger(__name__)

SIGNIFICANCE_THRESHOLDS = (0.05, 0.01, 0.001)


class DetectorFailureError(RuntimeError):
    """Detector failed on more than the tolerated fraction of surrogates."""


class SurrogateMethod(Enum):
    FT = "ft"
    AAFT = "aaft"


@dataclass(frozen=True)
class SurrogateConfig:
    method: SurrogateMethod = SurrogateMethod.AAFT
    n_surrogates: int = 1000
    seed: int = 0
    match_window_days: int = 3

    def __post_init__(self) -> None:
        if self.n_surrogates < 1:
            raise ValueError("n_surrogates must be positive")
        if self.n_surrogates < 100:
            log.warning("n_surrogates=%d is below 100; reported p-values are coarse",
                        self.n_surrogates)
        if self.match_window_days < 0:
            raise ValueError("match_window_days must be non-negative")


@dataclass(frozen=True)
class SurrogateVerdict:
    observed_stat: float
    n_surrogates: int
    exceed_count: int             # surrogates with statistic >= observed
    p_value: float                # add-one exceedance p-value (primary)
    window_match_count: int       # significant & co-located within the window
    p_value_window: float         # add-one p for the window criterion
    null_quantiles: dict[str, float]
    significant_at: tuple[float, ...]
    method: SurrogateMethod
    seed: int
    match_window_days: int

    def to_dict(self) -> dict:
        return {
            "observed_stat": self.observed_stat,
            "n_surrogates": self.n_surrogates,
            "exceed_count": self.exceed_count,
            "p_value": self.p_value,
            "p_value_str": f"< {1.0 / (1 + self.n_surrogates):.3g}"
                           if self.exceed_count == 0 else f"{self.p_value:.4g}",
            "window_match_count": self.window_match_count,
            "p_value_window": self.p_value_window,
            "null_quantiles": self.null_quantiles,
            "significant_at": list(self.significant_at),
            "method": self.method.value,
            "seed": self.seed,
            "match_window_days": self.match_window_days,
        }


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for surrogate ``index`` under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def ft_surrogate(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Fourier-transform surrogate: same amplitudes, fresh uniform phases."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 8:
        raise ValueError(f"surrogates need at least 8 samples, got {n}")
    spec = np.fft.rfft(x)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.size)
    new = np.abs(spec) * np.exp(1j * phases)
    new[0] = spec[0]              # DC untouched: mean preserved
    if n % 2 == 0:
        new[-1] = spec[-1]        # Nyquist bin stays real
    return np.fft.irfft(new, n=n)


def aaft_surrogate(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Amplitude-adjusted FT surrogate: an exact permutation of ``x``.

    Ranks are computed with a stable sort, so ties are broken by original
    position and the output is always a multiset permutation of the input.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    order_x = np.argsort(x, kind="stable")
    noise = np.sort(rng.standard_normal(n))
    matched = np.empty(n)
    matched[order_x] = noise            # Gaussian noise with the ranks of x
    shuffled = ft_surrogate(matched, rng)
    order_s = np.argsort(shuffled, kind="stable")
    out = np.empty(n)
    out[order_s] = np.sort(x)           # x values with the ranks of the surrogate
    return out


def generate(x: np.ndarray, method: SurrogateMethod, rng: np.random.Generator) -> np.ndarray:
    if method is SurrogateMethod.FT:
        return ft_surrogate(x, rng)
    return aaft_surrogate(x, rng)


def _verdict(observed: float, stats: np.ndarray, matches: int, n: int,
             cfg: SurrogateConfig) -> SurrogateVerdict:
    exceed = int(np.count_nonzero(stats >= observed))
    p = (1 + exceed) / (1 + n)
    p_window = (1 + matches) / (1 + n)
    qs = {f"q{int(q * 100):02d}": float(np.quantile(stats, q)) for q in (0.5, 0.9, 0.95, 0.99)}
    qs["max"] = float(stats.max())
    return SurrogateVerdict(
        observed_stat=float(observed),
        n_surrogates=n,
        exceed_count=exceed,
        p_value=p,
        window_match_count=matches,
        p_value_window=p_window,
        null_quantiles=qs,
        significant_at=tuple(t for t in SIGNIFICANCE_THRESHOLDS if p <= t),
        method=cfg.method,
        seed=cfg.seed,
        match_window_days=cfg.match_window_days,
    )


def default_break_detector(nobs: int, break_cfg: breaks_mod.BreakConfig
                           ) -> Callable[[np.ndarray], tuple[float, bool, int | None]]:
    """Sup-F detector with its simulated-null 5% critical value precomputed.

    For the mean-shift model the sup-F maximizer and the one-break SSR
    minimizer coincide, so the returned break index matches estimate_breaks
    with m=1.
    """
    h = break_cfg.min_segment(nobs)
    null = breaks_mod.supf_null_distribution(nobs, h, break_cfg.null_sims, break_cfg.seed)
    crit = float(np.quantile(null, 0.95))

    def detect(values: np.ndarray) -> tuple[float, bool, int | None]:
        curve = breaks_mod._supf_curve(np.asarray(values, dtype=np.float64), h)
        if curve is None:
            return 0.0, False, None
        taus, F = curve
        i = int(np.argmax(F))
        return float(F[i]), bool(F[i] > crit), int(taus[i])

    return detect


def _run_harness(values: np.ndarray, cfg: SurrogateConfig,
                 runner: Callable[[np.ndarray], tuple[float, list[int]]],
                 observed_indices: Sequence[int], observed_stat: float,
                 max_failures: float = 0.01) -> SurrogateVerdict:
    n = cfg.n_surrogates
    stats = np.empty(n)
    matches = 0
    failures: list[Exception] = []
    obs = np.asarray(sorted(observed_indices), dtype=int)
    for i in range(n):
        xs = generate(values, cfg.method, substream(cfg.seed, i))
        try:
            stat, hits = runner(xs)
        except Exception as exc:  # noqa: BLE001 - detector faults are counted, then reported
            failures.append(exc)
            stats[i] = -np.inf
            continue
        stats[i] = stat
        if hits and obs.size:
            diffs = np.abs(np.asarray(hits)[:, None] - obs[None, :])
            if diffs.min() <= cfg.match_window_days:
                matches += 1
    if len(failures) > max_failures * n:
        raise DetectorFailureError(
            f"detector failed on {len(failures)}/{n} surrogates; first error: {failures[0]!r}"
        )
    return _verdict(observed_stat, stats, matches, n, cfg)


def break_significance(
    y: DailySeries,
    observed: breaks_mod.BreakModel,
    supf: breaks_mod.SupFResult,
    cfg: SurrogateConfig,
    break_detector: Callable[[np.ndarray], tuple[float, bool, int | None]] | None = None,
    break_cfg: breaks_mod.BreakConfig | None = None,
) -> SurrogateVerdict:
    """Test the observed sup-F break against phase-randomized surrogates."""
    if observed.m < 1:
        raise ValueError("break significance requires at least one observed break")
    values = y.values if isinstance(y, DailySeries) else np.asarray(y, dtype=np.float64)
    detector = break_detector
    if detector is None:
        detector = default_break_detector(values.size, break_cfg or breaks_mod.BreakConfig())

    def runner(xs: np.ndarray) -> tuple[float, list[int]]:
        stat, significant, idx = detector(xs)
        return stat, [idx] if (significant and idx is not None) else []

    return _run_harness(values, cfg, runner, observed.break_indices, supf.sup_f)


def default_hht_runner(emd_cfg: hht_mod.EmdConfig = hht_mod.EmdConfig(),
                       n_bins: int = hht_mod.DEFAULT_FREQ_BINS,
                       b: float = hht_mod.DEFAULT_EVENT_SIGMA
                       ) -> Callable[[np.ndarray], tuple[float, list[int]]]:
    """Full EMD/Hilbert/energy chain returning (peak energy, event indices)."""

    def run(values: np.ndarray) -> tuple[float, list[int]]:
        imfs, _ = hht_mod.emd(values, emd_cfg)
        spec = hht_mod.hilbert_spectrum(imfs, hht_mod.frequency_grid(n_bins))
        ie, _, _, events = hht_mod.instantaneous_energy(spec, b=b)
        return float(ie.max()), [e.index for e in events]

    return run


def energy_significance(
    series: DailySeries,
    observed_events: Sequence,
    cfg: SurrogateConfig,
    hht_runner: Callable[[np.ndarray], tuple[float, list[int]]] | None = None,
) -> SurrogateVerdict:
    """Test observed extreme-energy events against surrogate ensembles."""
    indices = [e.index if isinstance(e, hht_mod.EnergyEvent) else int(e)
               for e in observed_events]
    if not indices:
        raise ValueError("energy significance requires at least one observed event")
    values = series.values if isinstance(series, DailySeries) else np.asarray(series, dtype=np.float64)
    runner = hht_runner or default_hht_runner()
    observed_stat, _ = runner(values)
    return _run_harness(values, cfg, runner, indices, observed_stat)
