"""Transaction and market-data ingestion.

Parses raw ERC-20 transfer CSVs, classifies each transfer by the contract
flags of its endpoints, cleans duplicates / failed / zero-value rows, and
aggregates surviving transfers into daily USD volume series.  Market CSVs
(close prices, trading volumes) are loaded into the same series type.

Amounts are accumulated as Python integers in token base units and converted
to USD only when a series is materialized, so per-day sums are exact.
"""

from __future__ import annotations

import csv
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from pathlib import Path

import numpy as np

from .series import EPOCH, SECONDS_PER_DAY, DailySeries, Transform

log = logging.getLogger(__name__)

# Table-style transfer dump: these columns must be present (case-sensitive);
# anything else in the header is carried along but ignored.
MANDATORY_COLUMNS = ("timeStamp", "tokenAddress", "from", "to",
                     "fromIsContract", "toIsContract", "value")
ERROR_COLUMN = "isError"

_HEX_ADDR = re.compile(r"^0x[0-9a-f]{40}$")


class IngestError(ValueError):
    """Raised for unreadable inputs, schema violations, or excess malformed rows."""


class EmptySelectionError(IngestError):
    """Raised when an aggregation matches no records."""


class FlowClass(Enum):
    """Endpoint classification of a transfer."""

    EOA_TO_EOA = "EoaToEoa"   # both endpoints are key-controlled accounts
    SC_TO_SC = "ScToSc"       # both endpoints are contracts
    MIXED = "Mixed"           # one of each; tracked but excluded from analysis


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    """One ERC-20 transfer.

    ``raw_value`` is in token base units (1e-6 USD for 6-decimal stablecoins);
    ``time_stamp`` is Unix seconds UTC.  ``is_error`` comes from an optional
    failure column and defaults to 0 when the input has none.
    """

    time_stamp: int
    token_address: str
    from_addr: str
    to_addr: str
    from_is_contract: int
    to_is_contract: int
    raw_value: int
    is_error: int = 0


class ParsedTransactions(Sequence):
    """Records plus parse bookkeeping; behaves as a sequence of records."""

    def __init__(self, records: list[TransactionRecord], *, total_rows: int,
                 malformed_rows: int, filtered_rows: int, has_error_column: bool):
        self.records = records
        self.total_rows = total_rows
        self.malformed_rows = malformed_rows
        self.filtered_rows = filtered_rows
        self.has_error_column = has_error_column

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


class CleanResult(Sequence):
    """Cleaned records plus per-class removal counts."""

    def __init__(self, records: list[TransactionRecord], *, failed_removed: int,
                 zero_value_removed: int, duplicates_removed: int):
        self.records = records
        self.failed_removed = failed_removed
        self.zero_value_removed = zero_value_removed
        self.duplicates_removed = duplicates_removed

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def parse_transactions(path: str | Path, token_allow_list: Iterable[str],
                       max_malformed_fraction: float = 0.001) -> ParsedTransactions:
    """Parse a transfer CSV, keeping rows whose token is on the allow-list.

    Rows for other tokens are filtered silently.  Rows that fail field
    validation are counted as malformed; if their fraction of all data rows
    exceeds ``max_malformed_fraction`` the parse fails.
    """
    path = Path(path)
    allow = {a.lower() for a in token_allow_list}
    for a in allow:
        if not _HEX_ADDR.match(a):
            raise IngestError(f"allow-list entry {a!r} is not a 0x-prefixed 40-hex-digit address")

    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc

    records: list[TransactionRecord] = []
    total = malformed = filtered = 0
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANDATORY_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{path}: missing mandatory column(s) {missing}")
        has_error_col = ERROR_COLUMN in header
        if not has_error_col:
            log.info("%s: no %s column; failed-transaction removal will be skipped",
                     path.name, ERROR_COLUMN)

        for row in reader:
            total += 1
            token = (row.get("tokenAddress") or "").lower()
            if token not in allow:
                filtered += 1
                continue
            try:
                ts = int(row["timeStamp"])
                f_sc = int(row["fromIsContract"])
                t_sc = int(row["toIsContract"])
                val = int(row["value"])
                err = int(row[ERROR_COLUMN]) if has_error_col and row.get(ERROR_COLUMN) else 0
            except (TypeError, ValueError, KeyError):
                malformed += 1
                continue
            if ts < 0 or val < 0 or f_sc not in (0, 1) or t_sc not in (0, 1):
                malformed += 1
                continue
            records.append(TransactionRecord(
                time_stamp=ts,
                token_address=token,
                from_addr=(row.get("from") or "").lower(),
                to_addr=(row.get("to") or "").lower(),
                from_is_contract=f_sc,
                to_is_contract=t_sc,
                raw_value=val,
                is_error=err,
            ))

    if total and malformed / total > max_malformed_fraction:
        raise IngestError(
            f"{path}: {malformed}/{total} malformed rows exceeds the "
            f"{max_malformed_fraction:.4%} threshold"
        )
    if malformed:
        log.warning("%s: %d malformed row(s) skipped", path.name, malformed)
    return ParsedTransactions(records, total_rows=total, malformed_rows=malformed,
                              filtered_rows=filtered, has_error_column=has_error_col)


def classify_flow(rec: TransactionRecord) -> FlowClass:
    """Map the two contract flags to a flow class."""
    f, t = rec.from_is_contract, rec.to_is_contract
    if f not in (0, 1) or t not in (0, 1):
        raise ValueError(f"contract flags must be 0 or 1, got ({f}, {t})")
    if f == 0 and t == 0:
        return FlowClass.EOA_TO_EOA
    if f == 1 and t == 1:
        return FlowClass.SC_TO_SC
    return FlowClass.MIXED


def to_usd(raw_value: int, decimals: int = 6) -> float:
    """Convert base units to USD by dividing by 10**decimals."""
    if raw_value < 0:
        raise ValueError(f"raw value must be non-negative, got {raw_value}")
    return raw_value / 10**decimals


def clean(records: Sequence[TransactionRecord]) -> CleanResult:
    """Drop failed, zero-value, and exact-duplicate records, keeping order.

    A record is failed when its ``is_error`` flag is set (inputs without the
    failure column never set it, so that removal class stays empty there).
    Duplicates keep their first occurrence.  Idempotent.
    """
    seen: set[TransactionRecord] = set()
    kept: list[TransactionRecord] = []
    failed = zero = dup = 0
    for rec in records:
        if rec.is_error:
            failed += 1
        elif rec.raw_value == 0:
            zero += 1
        elif rec in seen:
            dup += 1
        else:
            seen.add(rec)
            kept.append(rec)
    return CleanResult(kept, failed_removed=failed, zero_value_removed=zero,
                       duplicates_removed=dup)


def aggregate_daily(records: Sequence[TransactionRecord], flow: FlowClass,
                    token: str, decimals: int = 6, label: str = "") -> DailySeries:
    """Sum USD volume per UTC calendar day for one token and flow class.

    Day boundaries are pure epoch arithmetic (``floor(time_stamp / 86400)``).
    Days with no transfers inside the observed span get explicit zeros.
    """
    if flow not in (FlowClass.EOA_TO_EOA, FlowClass.SC_TO_SC):
        raise ValueError(f"aggregation is defined for EOA-EOA and SC-SC flows, not {flow}")
    token = token.lower()
    sums: dict[int, int] = {}
    for rec in records:
        if rec.token_address != token or classify_flow(rec) is not flow:
            continue
        day = rec.time_stamp // SECONDS_PER_DAY
        sums[day] = sums.get(day, 0) + rec.raw_value
    if not sums:
        raise EmptySelectionError(f"no records for token {token} with flow {flow.value}")
    d_min, d_max = min(sums), max(sums)
    scale = 10**decimals
    values = np.array([sums.get(d, 0) / scale for d in range(d_min, d_max + 1)])
    return DailySeries(
        start_date=EPOCH + timedelta(days=d_min),
        values=values,
        label=label or f"{token} {flow.value}",
        transform=Transform.RAW,
    )


def load_market_csv(path: str | Path, field: str) -> DailySeries:
    """Load one column of a daily market CSV (``date`` plus close/volume).

    Dates must be ISO format, strictly ascending, and gap-free.
    """
    if field not in ("close", "volume"):
        raise ValueError(f"field must be 'close' or 'volume', got {field!r}")
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc

    dates: list[date] = []
    vals: list[float] = []
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "date" not in header:
            raise IngestError(f"{path}: missing 'date' column")
        if field not in header:
            raise IngestError(f"{path}: missing {field!r} column")
        for row in reader:
            try:
                d = date.fromisoformat(row["date"])
                v = float(row[field])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}: bad row {row}: {exc}") from exc
            if not np.isfinite(v):
                raise IngestError(f"{path}: non-finite {field} on {d}")
            dates.append(d)
            vals.append(v)
    if not dates:
        raise IngestError(f"{path}: no data rows")
    for prev, cur in zip(dates, dates[1:]):
        gap = (cur - prev).days
        if gap <= 0:
            raise IngestError(f"{path}: duplicate or non-ascending date at {cur}")
        if gap != 1:
            raise IngestError(f"{path}: missing day(s) between {prev} and {cur}")
    return DailySeries(start_date=dates[0], values=np.array(vals),
                       label=f"{path.stem}:{field}", transform=Transform.RAW)


def ingestion_report(parsed: ParsedTransactions, cleaned: CleanResult) -> dict:
    """Assemble the JSON-ready ingestion summary (row and removal counts)."""
    by_class = {fc.value: 0 for fc in FlowClass}
    usd_by_class = {fc.value: 0 for fc in FlowClass}
    for rec in cleaned:
        fc = classify_flow(rec)
        by_class[fc.value] += 1
        usd_by_class[fc.value] += rec.raw_value
    return {
        "rows_total": parsed.total_rows,
        "rows_malformed": parsed.malformed_rows,
        "rows_other_tokens": parsed.filtered_rows,
        "records_parsed": len(parsed),
        "has_error_column": parsed.has_error_column,
        "removed": {
            "failed": cleaned.failed_removed,
            "zero_value": cleaned.zero_value_removed,
            "duplicate": cleaned.duplicates_removed,
        },
        "records_clean": len(cleaned),
        "count_by_class": by_class,
        "base_units_by_class": usd_by_class,
    }
