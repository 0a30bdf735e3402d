"""Daily time series container and the shared transforms.

Every analysis module operates on :class:`DailySeries`: a contiguous run of
daily observations anchored at a start date, together with a record of which
transformation chain produced the values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from enum import Enum
from pathlib import Path

import numpy as np

EPOCH = date(1970, 1, 1)
SECONDS_PER_DAY = 86400


class Transform(Enum):
    """Declared transform state of a series' values."""

    RAW = "raw"
    LOG = "log"
    LOG1P = "log1p"
    DIFF = "diff"
    DIFF_LOG = "diff_log"
    DIFF_LOG1P = "diff_log1p"


# transform transition applied by first_difference()
_DIFF_OF = {
    Transform.RAW: Transform.DIFF,
    Transform.LOG: Transform.DIFF_LOG,
    Transform.LOG1P: Transform.DIFF_LOG1P,
}


@dataclass(frozen=True)
class DailySeries:
    """A contiguous sequence of daily observations.

    Parameters
    ----------
    start_date : datetime.date
        Calendar date of the first observation (UTC day).
    values : numpy.ndarray
        One observation per day, consecutive days, no gaps.  NaN is allowed
        only as the explicit "undefined" marker produced by
        :func:`rolling_mean`; infinities are rejected.
    label : str
        Human-readable identifier used in reports.
    transform : Transform
        Which transformation chain produced ``values``.
    """

    start_date: date
    values: np.ndarray
    label: str = ""
    transform: Transform = Transform.RAW

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError(f"values must be 1-D, got shape {vals.shape}")
        if vals.size < 1:
            raise ValueError("series must contain at least one observation")
        if np.isinf(vals).any():
            raise ValueError(f"series {self.label!r} contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    @property
    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=i) for i in range(len(self))]

    def date_at(self, i: int) -> date:
        if not 0 <= i < len(self):
            raise IndexError(f"index {i} out of range for series of length {len(self)}")
        return self.start_date + timedelta(days=i)

    def index_of(self, d: date) -> int:
        i = (d - self.start_date).days
        if not 0 <= i < len(self):
            raise ValueError(f"date {d} outside series span {self.start_date}..{self.end_date}")
        return i

    def with_values(self, values: np.ndarray, *, start_date: date | None = None,
                    transform: Transform | None = None) -> "DailySeries":
        return replace(
            self,
            values=values,
            start_date=self.start_date if start_date is None else start_date,
            transform=self.transform if transform is None else transform,
        )


@dataclass(frozen=True)
class SeriesSplit:
    """A series cut in two at ``split_date``.

    ``pre`` ends the day before ``split_date``; ``post`` starts on it.
    Concatenating the two reproduces the original values exactly.
    """

    pre: DailySeries
    post: DailySeries
    split_date: date


def log_transform(s: DailySeries, plus_one: bool = False) -> DailySeries:
    """Elementwise natural log, or log(1+x) when ``plus_one`` is set.

    Without ``plus_one`` every value must be strictly positive.
    """
    if plus_one:
        return s.with_values(np.log1p(s.values), transform=Transform.LOG1P)
    if np.nanmin(s.values) <= 0:
        bad = int(np.nanargmin(s.values))
        raise ValueError(
            f"log of non-positive value {s.values[bad]} at {s.date_at(bad)}; "
            "use plus_one=True for series with zeros"
        )
    return s.with_values(np.log(s.values), transform=Transform.LOG)


def first_difference(s: DailySeries) -> DailySeries:
    """Consecutive differences; output observation t sits on the later day."""
    if len(s) < 2:
        raise ValueError("first difference needs at least two observations")
    out = np.diff(s.values)
    tr = _DIFF_OF.get(s.transform, Transform.DIFF)
    return s.with_values(out, start_date=s.start_date + timedelta(days=1), transform=tr)


def rolling_mean(s: DailySeries, window: int) -> DailySeries:
    """Trailing mean over ``window`` days (current day plus the prior window-1).

    The first window-1 entries are undefined and emitted as NaN; CSV writers
    render them as empty fields.
    """
    if window < 1:
        raise ValueError("window must be a positive integer")
    if window > len(s):
        raise ValueError(f"window {window} exceeds series length {len(s)}")
    kernel = np.full(window, 1.0 / window)
    out = np.full(len(s), np.nan)
    out[window - 1:] = np.convolve(s.values, kernel, mode="valid")
    return s.with_values(out)


def split_at(s: DailySeries, split_date: date) -> SeriesSplit:
    """Cut a series so that ``pre`` covers start..split_date-1 and ``post`` the rest."""
    if not (s.start_date < split_date <= s.end_date):
        raise ValueError(
            f"split date {split_date} must be strictly inside {s.start_date}..{s.end_date}"
        )
    k = (split_date - s.start_date).days
    pre = s.with_values(s.values[:k])
    post = s.with_values(s.values[k:], start_date=split_date)
    return SeriesSplit(pre=pre, post=post, split_date=split_date)


def write_series_csv(s: DailySeries, path: str | Path) -> None:
    """Write the canonical two-column ``date,value`` CSV; NaN becomes empty."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "value"])
        d = s.start_date
        for v in s.values:
            w.writerow([d.isoformat(), "" if math.isnan(v) else repr(float(v))])
            d += timedelta(days=1)


def read_series_csv(path: str | Path, label: str = "",
                    transform: Transform = Transform.RAW) -> DailySeries:
    """Read the canonical ``date,value`` CSV back into a series."""
    path = Path(path)
    dates: list[date] = []
    vals: list[float] = []
    with path.open(newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames is None or "date" not in r.fieldnames or "value" not in r.fieldnames:
            raise ValueError(f"{path}: expected header with 'date' and 'value' columns")
        for row in r:
            dates.append(date.fromisoformat(row["date"]))
            raw = row["value"]
            vals.append(float("nan") if raw in ("", None) else float(raw))
    if not dates:
        raise ValueError(f"{path}: no data rows")
    for prev, cur in zip(dates, dates[1:]):
        if (cur - prev).days != 1:
            raise ValueError(f"{path}: dates not contiguous around {prev} -> {cur}")
    return DailySeries(start_date=dates[0], values=np.array(vals),
                       label=label or path.stem, transform=transform)
