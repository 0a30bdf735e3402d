"""Empirical mode decomposition and Hilbert-spectrum extreme-event detection.

Sifting uses natural cubic spline envelopes through local extrema, with the
two nearest extrema mirrored about each endpoint to tame edge effects.  A
candidate is accepted as an intrinsic mode function when its extrema and
zero-crossing counts differ by at most one and its envelope mean is small
relative to its RMS, or when the Cauchy-type change criterion between
successive sifts falls below the configured threshold.

The analytic signal is built in the frequency domain (positive frequencies
doubled, negative zeroed); instantaneous frequency is the central difference
of the unwrapped phase in radians per day.  Amplitudes are deposited on a
fixed frequency grid to form the Hilbert spectrum, whose squared bins are
summed into instantaneous energy; runs of samples above mean + B*std of the
energy are reported as extreme events at their peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .series import DailySeries

DEFAULT_FREQ_BINS = 64
DEFAULT_EVENT_SIGMA = 4.0


class TooFewExtremaError(ValueError):
    """Signal lacks the oscillation needed to continue decomposing."""


class Boundary(Enum):
    MIRROR_EXTREMA = "mirror"


@dataclass(frozen=True)
class EmdConfig:
    max_imfs: int = 10
    sift_sd_threshold: float = 0.2
    max_sift_iters: int = 100
    boundary: Boundary = Boundary.MIRROR_EXTREMA

    def __post_init__(self) -> None:
        if not 0.0 < self.sift_sd_threshold < 1.0:
            raise ValueError("sift_sd_threshold must be in (0, 1)")
        if self.max_sift_iters < 1:
            raise ValueError("max_sift_iters must be at least 1")
        if self.max_imfs < 1:
            raise ValueError("max_imfs must be at least 1")


@dataclass(frozen=True)
class Imf:
    values: np.ndarray
    index: int


@dataclass(frozen=True)
class EnergyEvent:
    index: int
    date: date | None
    ie_norm: float


@dataclass(frozen=True)
class HilbertSpectrum:
    """Time-frequency amplitude grid: ``grid[t, b]`` in bin ``b`` at time t."""

    grid: np.ndarray
    bin_edges: np.ndarray     # length n_bins+1, spanning (0, pi]

    @property
    def n_bins(self) -> int:
        return self.bin_edges.size - 1

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


@dataclass(frozen=True)
class HilbertProfile:
    """Full HHT output for one series."""

    imfs: tuple[Imf, ...]
    residue: np.ndarray
    amplitudes: tuple[np.ndarray, ...]
    phases: tuple[np.ndarray, ...]
    frequencies: tuple[np.ndarray, ...]
    spectrum: HilbertSpectrum
    ie: np.ndarray
    ie_norm: np.ndarray
    e_th: float
    events: tuple[EnergyEvent, ...]
    start_date: date | None


def find_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    A plateau (run of equal neighbors) counts once, at its midpoint, when the
    slopes on both sides make it an extremum.
    """
    d = np.diff(x)
    maxima: list[int] = []
    minima: list[int] = []
    i = 0
    n = d.size
    while i < n:
        if d[i] == 0.0:
            i += 1
            continue
        j = i + 1
        while j < n and d[j] == 0.0:
            j += 1
        if j == n:
            break
        if d[i] > 0 and d[j] < 0:
            maxima.append((i + 1 + j) // 2)
        elif d[i] < 0 and d[j] > 0:
            minima.append((i + 1 + j) // 2)
        i = j
    return np.asarray(maxima, dtype=int), np.asarray(minima, dtype=int)


def _count_zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _mirrored_knots(idx: np.ndarray, vals: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Extend extrema knots by reflecting the two nearest about each endpoint."""
    left_t = (-idx[:2])[::-1]                    # reflect first two about t=0
    left_v = vals[:2][::-1]
    right_t = (2 * (n - 1) - idx[-2:])[::-1]
    right_v = vals[-2:][::-1]
    t = np.concatenate([left_t, idx, right_t])
    v = np.concatenate([left_v, vals, right_v])
    keep = np.concatenate([[True], np.diff(t) > 0])
    return t[keep], v[keep]


def _envelope_mean(x: np.ndarray) -> np.ndarray | None:
    """Mean of upper and lower spline envelopes; None if too few extrema."""
    maxima, minima = find_extrema(x)
    if maxima.size < 2 or minima.size < 2:
        return None
    n = x.size
    t = np.arange(n)
    up_t, up_v = _mirrored_knots(maxima, x[maxima], n)
    lo_t, lo_v = _mirrored_knots(minima, x[minima], n)
    upper = CubicSpline(up_t, up_v, bc_type="natural")(t)
    lower = CubicSpline(lo_t, lo_v, bc_type="natural")(t)
    return 0.5 * (upper + lower)


def _counts_match(x: np.ndarray) -> bool:
    maxima, minima = find_extrema(x)
    return abs(maxima.size + minima.size - _count_zero_crossings(x)) <= 1


def _envelope_small(x: np.ndarray, env_mean: np.ndarray) -> bool:
    rms = math.sqrt(float(np.mean(x * x)))
    if rms == 0.0:
        return True
    return abs(float(np.mean(env_mean))) <= 0.1 * rms


def sift(signal: np.ndarray, cfg: EmdConfig = EmdConfig()) -> tuple[Imf, np.ndarray]:
    """Extract one intrinsic mode function and the residual it leaves behind.

    The extrema/zero-crossing count condition is a hard gate; the envelope
    mean must be small or the Cauchy-type change criterion met, all capped
    at ``max_sift_iters``.
    """
    x = np.asarray(signal, dtype=np.float64)
    cur = x.copy()
    env = _envelope_mean(cur)
    if env is None:
        raise TooFewExtremaError("signal has fewer than two maxima or two minima")
    for _ in range(cfg.max_sift_iters):
        nxt = cur - env
        env_next = _envelope_mean(nxt)
        if env_next is None:
            cur = nxt
            break
        denom = float(np.sum(cur * cur))
        sd = float(np.sum((cur - nxt) ** 2)) / denom if denom > 0 else 0.0
        cur = nxt
        env = env_next
        if _counts_match(cur) and (_envelope_small(cur, env) or sd < cfg.sift_sd_threshold):
            break
    return Imf(values=cur, index=0), x - cur


def _residue_done(x: np.ndarray) -> bool:
    maxima, minima = find_extrema(x)
    return maxima.size + minima.size <= 2


def emd(signal, cfg: EmdConfig = EmdConfig()) -> tuple[list[Imf], np.ndarray]:
    """Decompose into IMFs plus a monotone-ish residue.

    The reconstruction identity ``sum(imfs) + residue == signal`` holds by
    construction up to floating point.
    """
    x = signal.values if isinstance(signal, DailySeries) else np.asarray(signal, dtype=np.float64)
    if x.size < 16:
        raise ValueError(f"EMD needs at least 16 observations, got {x.size}")
    imfs: list[Imf] = []
    residual = x.copy()
    while len(imfs) < cfg.max_imfs and not _residue_done(residual):
        try:
            imf, residual = sift(residual, cfg)
        except TooFewExtremaError:
            if not imfs:
                raise
            break
        imfs.append(Imf(values=imf.values, index=len(imfs)))
    if not imfs:
        raise TooFewExtremaError("signal has no oscillatory component to extract")
    return imfs, residual


def analytic_signal(imf: Imf | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Instantaneous amplitude, unwrapped phase, and frequency of one IMF.

    Frequency is d(phase)/dt by central differences (one-sided at the ends),
    in radians per day.
    """
    x = imf.values if isinstance(imf, Imf) else np.asarray(imf, dtype=np.float64)
    n = x.size
    if n < 8:
        raise ValueError(f"analytic signal needs at least 8 samples, got {n}")
    spec = np.fft.fft(x)
    gain = np.zeros(n)
    if n % 2 == 0:
        gain[0] = 1.0
        gain[n // 2] = 1.0
        gain[1:n // 2] = 2.0
    else:
        gain[0] = 1.0
        gain[1:(n + 1) // 2] = 2.0
    a = np.fft.ifft(spec * gain)
    amplitude = np.abs(a)
    phase = np.unwrap(np.angle(a))
    freq = np.gradient(phase)
    return amplitude, phase, freq


def frequency_grid(n_bins: int = DEFAULT_FREQ_BINS) -> np.ndarray:
    """Uniform bin edges over (0, pi] radians/day (Nyquist for daily data)."""
    return np.linspace(0.0, np.pi, n_bins + 1)


def hilbert_spectrum(imfs: list[Imf], grid: np.ndarray | None = None) -> HilbertSpectrum:
    """Deposit each IMF's amplitude into the bin holding its frequency.

    IMFs are equally weighted; frequencies outside the grid clip to the
    nearest bin.  A tiny tolerance keeps on-edge frequencies in one bin.
    """
    if not imfs:
        raise ValueError("hilbert_spectrum needs at least one IMF")
    edges = frequency_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    n_bins = edges.size - 1
    dw = edges[1] - edges[0]
    T = imfs[0].values.size
    out = np.zeros((T, n_bins))
    t = np.arange(T)
    for imf in imfs:
        amp, _, freq = analytic_signal(imf)
        idx = np.clip(np.ceil(freq / dw - 1e-9).astype(int) - 1, 0, n_bins - 1)
        np.add.at(out, (t, idx), amp)
    return HilbertSpectrum(grid=out, bin_edges=edges)


def instantaneous_energy(
    spectrum: HilbertSpectrum,
    b: float = DEFAULT_EVENT_SIGMA,
    start_date: date | None = None,
) -> tuple[np.ndarray, np.ndarray, float, list[EnergyEvent]]:
    """Frequency-integrated squared spectrum and threshold-exceeding events.

    Threshold is ``mean + b * std`` of the energy (population std).  Samples
    strictly above it are grouped into runs and each run reports its peak.
    """
    if spectrum.grid.size == 0:
        raise ValueError("empty spectrum")
    ie = (spectrum.grid ** 2).sum(axis=1) * spectrum.bin_width
    peak = float(ie.max())
    ie_norm = ie / peak if peak > 0 else np.zeros_like(ie)
    e_th = float(ie.mean() + b * ie.std())
    above = ie > e_th
    events: list[EnergyEvent] = []
    i = 0
    T = ie.size
    while i < T:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < T and above[j + 1]:
            j += 1
        k = i + int(np.argmax(ie[i:j + 1]))
        events.append(EnergyEvent(
            index=k,
            date=start_date + timedelta(days=k) if start_date else None,
            ie_norm=float(ie_norm[k]),
        ))
        i = j + 1
    return ie, ie_norm, e_th, events


def hilbert_profile(
    series,
    cfg: EmdConfig = EmdConfig(),
    n_bins: int = DEFAULT_FREQ_BINS,
    b: float = DEFAULT_EVENT_SIGMA,
) -> HilbertProfile:
    """Run the full chain: EMD, per-IMF Hilbert analysis, spectrum, events."""
    start = series.start_date if isinstance(series, DailySeries) else None
    imfs, residue = emd(series, cfg)
    amps, phases, freqs = [], [], []
    for imf in imfs:
        a, p, f = analytic_signal(imf)
        amps.append(a)
        phases.append(p)
        freqs.append(f)
    spec = hilbert_spectrum(imfs, frequency_grid(n_bins))
    ie, ie_norm, e_th, events = instantaneous_energy(spec, b=b, start_date=start)
    return HilbertProfile(
        imfs=tuple(imfs),
        residue=residue,
        amplitudes=tuple(amps),
        phases=tuple(phases),
        frequencies=tuple(freqs),
        spectrum=spec,
        ie=ie,
        ie_norm=ie_norm,
        e_th=e_th,
        events=tuple(events),
        start_date=start,
    )
