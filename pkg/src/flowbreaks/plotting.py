"""Render report figures from the emitted plot CSVs.

Figures are built strictly from the delimited plot data, so anything shown
here can be reproduced by any other plotting stack from the same files.
Per series: the (log) level with its rolling mean and break / event /
election-day markers; for series with a Hilbert profile, the time-frequency
amplitude grid and the normalized instantaneous energy with its threshold.
"""

from __future__ import annotations

import csv
from datetime import date
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_csv(path: Path) -> dict[str, list[str]]:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [r[k] for r in rows] for k in rows[0]}


def _dates(col: list[str]) -> list[date]:
    return [date.fromisoformat(v) for v in col]


def _floats(col: list[str]) -> np.ndarray:
    return np.array([float(v) if v else np.nan for v in col])


def _plot_series_panel(ax, data: dict[str, list[str]]) -> None:
    d = _dates(data["date"])
    values = _floats(data["value"])
    rolling = _floats(data["rolling_mean"])
    ax.plot(d, values, lw=0.8, color="0.4", label="series")
    ax.plot(d, rolling, lw=1.6, color="saddlebrown", label="rolling mean")
    flags = {
        "is_break": ("tab:blue", "--", "break"),
        "is_election": ("tab:red", "--", "election day"),
    }
    for col, (color, ls, label) in flags.items():
        marked = [dd for dd, f in zip(d, data[col]) if f == "1"]
        for k, dd in enumerate(marked):
            ax.axvline(dd, color=color, ls=ls, lw=1.2, label=label if k == 0 else None)
    ax.legend(loc="best", fontsize=8)
    ax.set_ylabel("log level")


def _plot_spectrum_panel(ax, data: dict[str, list[str]]) -> None:
    d = _dates(data["date"])
    freq = _floats(data["freq_rad_per_day"])
    amp = _floats(data["amplitude"])
    sc = ax.scatter(d, freq, c=amp, s=4, cmap="inferno", marker="s")
    ax.set_ylabel("frequency (rad/day)")
    plt.colorbar(sc, ax=ax, label="amplitude", pad=0.01)


def _plot_energy_panel(ax, data: dict[str, list[str]]) -> None:
    d = _dates(data["date"])
    ie = _floats(data["ie"])
    ie_norm = _floats(data["ie_norm"])
    e_th = _floats(data["e_th"])[0]
    peak = np.nanmax(ie)
    ax.plot(d, ie_norm, lw=1.0, color="tab:purple", label="normalized energy")
    if peak > 0:
        ax.axhline(e_th / peak, color="tab:green", ls=":", lw=1.2, label="threshold")
    events = [dd for dd, f in zip(d, data["is_event"]) if f == "1"]
    for k, dd in enumerate(events):
        ax.axvline(dd, color="tab:red", ls="--", lw=1.0,
                   label="extreme event" if k == 0 else None)
    ax.set_ylabel("normalized energy")
    ax.legend(loc="best", fontsize=8)


def render_figures(plots_dir: str | Path, figures_dir: str | Path | None = None,
                   dpi: int = 130) -> list[Path]:
    """Render one PNG per series found in ``plots_dir``; returns the paths."""
    plots_dir = Path(plots_dir)
    figures_dir = Path(figures_dir) if figures_dir else plots_dir.parent / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    out: list[Path] = []
    for series_csv in sorted(plots_dir.glob("*_series.csv")):
        sid = series_csv.name[: -len("_series.csv")]
        series_data = _read_csv(series_csv)
        if not series_data:
            continue
        spectrum_csv = plots_dir / f"{sid}_spectrum.csv"
        energy_csv = plots_dir / f"{sid}_energy.csv"
        has_hht = spectrum_csv.exists() and energy_csv.exists()
        n_panels = 3 if has_hht else 1
        fig, axes = plt.subplots(n_panels, 1, figsize=(9, 3.0 * n_panels),
                                 sharex=True, squeeze=False)
        axes = axes.ravel()
        _plot_series_panel(axes[0], series_data)
        axes[0].set_title(sid)
        if has_hht:
            spectrum_data = _read_csv(spectrum_csv)
            if spectrum_data:
                _plot_spectrum_panel(axes[1], spectrum_data)
            _plot_energy_panel(axes[2], _read_csv(energy_csv))
        axes[-1].xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
        fig.autofmt_xdate()
        fig.tight_layout()
        target = figures_dir / f"{sid}.png"
        fig.savefig(target, dpi=dpi)
        plt.close(fig)
        out.append(target)
    return out
