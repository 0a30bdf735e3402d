"""Shared fixtures: synthetic transaction dumps, market CSVs, planted-break series."""

from __future__ import annotations

import csv
import pathlib
from datetime import date, timedelta

import numpy as np
import pytest

from flowbreaks.series import DailySeries

HEADER = ["timeStamp", "tokenAddress", "from", "to",
          "fromIsContract", "toIsContract", "value"]

USDT = "0xdac17f958d2ee523a2206206994597c13d831ec7"
USDC = "0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48"


def day_ts(d: date, second: int = 0) -> int:
    return (d - date(1970, 1, 1)).days * 86400 + second


def write_tx_csv(path, rows, header=HEADER):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_market_csv(path, start: date, values, field="close"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", field])
        for i, v in enumerate(values):
            w.writerow([(start + timedelta(days=i)).isoformat(), v])
    return path


def step_series(T=200, break_at=120, step=6.0, sigma=1.0, seed=7,
                start=date(2024, 3, 1), label="step") -> DailySeries:
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(T) * sigma
    y[break_at:] += step
    return DailySeries(start, y, label)


@pytest.fixture
def planted_step() -> DailySeries:
    return step_series()


def build_run_fixture(root, n_surrogates=300, analyses=None, seed=7) -> tuple:
    """200-day synthetic dataset with a planted break at day 120.

    Blockchain volumes for two tokens (EOA and SC flows), a market volume
    CSV sharing the break, and a close-price CSV with a volatility burst.
    Returns (config_path, out_dir).
    """
    root = pathlib.Path(root)
    data = root / "data"
    data.mkdir(parents=True, exist_ok=True)
    start = date(2024, 3, 1)
    split = start + timedelta(days=120)          # 2024-06-29
    T = 200
    rng = np.random.default_rng(seed)

    lvl = {"usdt": (6.9, 9.9), "usdc": (7.5, 9.5)}
    rows = []
    for day in range(T):
        d = start + timedelta(days=day)
        for name, token in (("usdt", USDT), ("usdc", USDC)):
            lo, hi = lvl[name]
            mean = hi if day >= 120 else lo
            vol_usd = float(np.exp(mean + 0.3 * rng.standard_normal()))
            base_units = max(2, int(round(vol_usd * 1e6)))
            a, b = base_units // 2, base_units - base_units // 2
            rows.append([day_ts(d, 3600), token, "0x01", "0x02", 0, 0, a])
            rows.append([day_ts(d, 7200), token, "0x03", "0x04", 0, 0, b])
            sc_units = max(1, int(round(vol_usd * 0.4 * 1e6)))
            rows.append([day_ts(d, 10800), token, "0x05", "0x06", 1, 1, sc_units])
    rows.append([day_ts(start, 3600), USDT, "0x01", "0x02", 0, 0,
                 rows[0][-1]])                                   # exact duplicate
    rows.append([day_ts(start, 99), USDT, "0x07", "0x08", 0, 0, 0])  # zero value
    tx_path = write_tx_csv(data / "erc20.csv", rows)

    vol_values = np.exp(np.where(np.arange(T) >= 120, 12.0, 9.0)
                        + 0.25 * rng.standard_normal(T))
    write_market_csv(data / "usdt_usd.csv", start, vol_values, field="volume")

    returns = 0.02 * rng.standard_normal(T)
    returns[130:135] *= 8.0                       # volatility burst
    close = 50000.0 * np.exp(np.cumsum(returns))
    write_market_csv(data / "btc_usd.csv", start, close, field="close")

    analyses = analyses if analyses is not None else "adf, breaks, surrogate, hht, svar"
    out_dir = root / "out"
    config = f"""# synthetic fixture run
seed = 42
out_dir = {out_dir}
event_date = {split.isoformat()}
split_date = {split.isoformat()}
transactions = {tx_path}
token.usdt = {USDT}
token.usdc = {USDC}
market.usdt_volume = {data / 'usdt_usd.csv'}, volume
market.btc_close = {data / 'btc_usd.csv'}, close
analyses = {analyses}
svar_pairs = usdc_eoa:usdt_eoa
surrogate.n = {n_surrogates}
svar.p_max = 8
"""
    config_path = root / "run.cfg"
    config_path.write_text(config)
    return config_path, out_dir


@pytest.fixture
def run_fixture(tmp_path):
    return build_run_fixture(tmp_path)


@pytest.fixture
def tmp_tx_file(tmp_path):
    """Synthetic 40-day two-token transfer dump with known structure."""
    rows = []
    start = date(2024, 3, 1)
    rng = np.random.default_rng(11)
    for day in range(40):
        d = start + timedelta(days=day)
        for k in range(5):
            rows.append([day_ts(d, 3600 * k), USDT, f"0xa{k}", f"0xb{k}", 0, 0,
                         int(rng.integers(1, 10_000_000))])
        for k in range(3):
            rows.append([day_ts(d, 7200 * k), USDT, f"0xc{k}", f"0xd{k}", 1, 1,
                         int(rng.integers(1, 10_000_000))])
        rows.append([day_ts(d, 60), USDC, "0xe0", "0xe1", 0, 0,
                     int(rng.integers(1, 10_000_000))])
    return write_tx_csv(tmp_path / "tx.csv", rows)
