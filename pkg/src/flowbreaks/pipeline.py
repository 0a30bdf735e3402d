"""End-to-end batch run: ingest, test, validate, compare regimes, report.

The run configuration is a flat ``key = value`` text file (``#`` comments);
every key can be overridden from the CLI.  The run produces a single JSON
report with stable key order plus per-figure CSV files, and is byte-for-byte
deterministic for a fixed config and seed: the report carries no wall-clock
timestamps, only a config hash, the seed, and the tool version.

Stages are isolated: each enabled stage computes what it needs (the
surrogate stage re-derives its cheap sup-F detector rather than reading the
breaks section), a failure in one asset is recorded under ``errors`` without
aborting the others, and the report is written atomically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__
from . import breaks as breaks_mod
from . import hht as hht_mod
from . import surrogate as surrogate_mod
from . import svar as svar_mod
from .ingest import (FlowClass, aggregate_daily, clean, ingestion_report,
                     load_market_csv, parse_transactions)
from .series import (DailySeries, Transform, first_difference, log_transform,
                     rolling_mean, write_series_csv)
from .unitroot import AdfSpec, adf_test

log = logging.getLogger(__name__)

ALL_ANALYSES = ("adf", "breaks", "surrogate", "hht", "svar")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: Path = Path("out")
    event_date: date = date(2024, 11, 5)
    split_date: date = date(2024, 11, 5)
    transactions: Path | None = None
    tokens: dict[str, tuple[str, int]] = field(default_factory=dict)
    market: dict[str, tuple[Path, str]] = field(default_factory=dict)
    analyses: tuple[str, ...] = ALL_ANALYSES
    hht_series: tuple[str, ...] | None = None
    svar_pairs: tuple[tuple[str, str], ...] = ()
    max_breaks: int = 5
    trim: float = 0.15
    null_sims: int = 2000
    surrogate_n: int = 1000
    surrogate_method: str = "aaft"
    surrogate_window: int = 3
    max_imfs: int = 10
    freq_bins: int = 64
    event_sigma: float = 4.0
    svar_p_max: int = 14
    rolling_window: int = 20
    malformed_threshold: float = 0.001

    def break_config(self) -> breaks_mod.BreakConfig:
        return breaks_mod.BreakConfig(max_breaks=self.max_breaks, trim=self.trim,
                                      null_sims=self.null_sims, seed=self.seed)

    def emd_config(self) -> hht_mod.EmdConfig:
        return hht_mod.EmdConfig(max_imfs=self.max_imfs)

    def surrogate_config(self, series_id: str) -> surrogate_mod.SurrogateConfig:
        sub = (self.seed * 1000003 + zlib.crc32(series_id.encode())) % (2**63)
        return surrogate_mod.SurrogateConfig(
            method=surrogate_mod.SurrogateMethod(self.surrogate_method),
            n_surrogates=self.surrogate_n,
            seed=sub,
            match_window_days=self.surrogate_window,
        )

    def validate(self) -> None:
        if self.transactions is not None and not Path(self.transactions).exists():
            raise ConfigError(f"transactions file not found: {self.transactions}")
        if self.transactions is not None and not self.tokens:
            raise ConfigError("transactions given but no token.<name> addresses configured")
        for sid, (path, fld) in self.market.items():
            if not Path(path).exists():
                raise ConfigError(f"market file for {sid!r} not found: {path}")
            if fld not in ("close", "volume"):
                raise ConfigError(f"market field for {sid!r} must be close or volume")
        unknown = set(self.analyses) - set(ALL_ANALYSES)
        if unknown:
            raise ConfigError(f"unknown analyses {sorted(unknown)}; valid: {ALL_ANALYSES}")
        if self.surrogate_method not in ("ft", "aaft"):
            raise ConfigError("surrogate.method must be 'ft' or 'aaft'")
        if not self.market and self.transactions is None:
            raise ConfigError("no inputs: configure transactions and/or market files")


def parse_config(path: str | Path) -> RunConfig:
    """Read the flat key=value run configuration."""
    cfg = RunConfig()
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, val = (part.strip() for part in stripped.split("=", 1))
        raw[key] = val
    _apply_raw(cfg, raw, source=str(path))
    return cfg


def _apply_raw(cfg: RunConfig, raw: dict[str, str], source: str = "<cli>") -> None:
    simple = {
        "seed": ("seed", int),
        "out_dir": ("out_dir", Path),
        "event_date": ("event_date", date.fromisoformat),
        "split_date": ("split_date", date.fromisoformat),
        "transactions": ("transactions", Path),
        "breaks.max_breaks": ("max_breaks", int),
        "breaks.trim": ("trim", float),
        "breaks.null_sims": ("null_sims", int),
        "surrogate.n": ("surrogate_n", int),
        "surrogate.method": ("surrogate_method", str),
        "surrogate.window": ("surrogate_window", int),
        "emd.max_imfs": ("max_imfs", int),
        "emd.bins": ("freq_bins", int),
        "emd.event_sigma": ("event_sigma", float),
        "svar.p_max": ("svar_p_max", int),
        "plots.rolling_window": ("rolling_window", int),
        "ingest.malformed_threshold": ("malformed_threshold", float),
    }
    for key, val in raw.items():
        if key in simple:
            attr, conv = simple[key]
            try:
                setattr(cfg, attr, conv(val))
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {key}: {val!r} ({exc})") from exc
        elif key == "analyses":
            cfg.analyses = tuple(a.strip() for a in val.split(",") if a.strip())
        elif key == "hht_series":
            cfg.hht_series = tuple(s.strip() for s in val.split(",") if s.strip())
        elif key == "svar_pairs":
            pairs = []
            for chunk in val.split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                if ":" not in chunk:
                    raise ConfigError(f"{source}: svar_pairs entries are 'a:b', got {chunk!r}")
                a, b = (p.strip() for p in chunk.split(":", 1))
                pairs.append((a, b))
            cfg.svar_pairs = tuple(pairs)
        elif key.startswith("token."):
            parts = key.split(".")
            if len(parts) == 2:
                cfg.tokens.setdefault(parts[1], ("", 6))
                cfg.tokens[parts[1]] = (val.lower(), cfg.tokens[parts[1]][1])
            elif len(parts) == 3 and parts[2] == "decimals":
                addr = cfg.tokens.get(parts[1], ("", 6))[0]
                cfg.tokens[parts[1]] = (addr, int(val))
            else:
                raise ConfigError(f"{source}: unknown token key {key!r}")
        elif key.startswith("market."):
            sid = key.split(".", 1)[1]
            if "," not in val:
                raise ConfigError(f"{source}: market entries are 'path, field', got {val!r}")
            p, fld = (part.strip() for part in val.rsplit(",", 1))
            cfg.market[sid] = (Path(p), fld)
        else:
            raise ConfigError(f"{source}: unknown config key {key!r}")


def config_fingerprint(cfg: RunConfig) -> tuple[dict, str]:
    """JSON echo of the resolved configuration and its sha256."""
    echo = {
        "seed": cfg.seed,
        "event_date": cfg.event_date.isoformat(),
        "split_date": cfg.split_date.isoformat(),
        "transactions": str(cfg.transactions) if cfg.transactions else None,
        "tokens": {k: [v[0], v[1]] for k, v in sorted(cfg.tokens.items())},
        "market": {k: [str(v[0]), v[1]] for k, v in sorted(cfg.market.items())},
        "analyses": sorted(cfg.analyses),
        "hht_series": sorted(cfg.hht_series) if cfg.hht_series else None,
        "svar_pairs": [list(p) for p in cfg.svar_pairs],
        "breaks": {"max_breaks": cfg.max_breaks, "trim": cfg.trim, "null_sims": cfg.null_sims},
        "surrogate": {"n": cfg.surrogate_n, "method": cfg.surrogate_method,
                      "window": cfg.surrogate_window},
        "emd": {"max_imfs": cfg.max_imfs, "bins": cfg.freq_bins,
                "event_sigma": cfg.event_sigma},
        "svar_p_max": cfg.svar_p_max,
        "rolling_window": cfg.rolling_window,
    }
    digest = hashlib.sha256(json.dumps(echo, sort_keys=True).encode()).hexdigest()
    return echo, digest


@dataclass
class PipelineResult:
    report: dict
    store: dict[str, DailySeries]          # analysis-scale (log) series
    profiles: dict[str, hht_mod.HilbertProfile]
    exit_code: int


def _analysis_series(raw: DailySeries, kind: str) -> DailySeries:
    """Log for price levels, log1p for volumes (zeros are legitimate)."""
    if kind == "close":
        return log_transform(raw, plus_one=False)
    return log_transform(raw, plus_one=True)


def _load_inputs(cfg: RunConfig, report: dict, errors: dict) -> tuple[
        dict[str, DailySeries], dict[str, str]]:
    """Build the raw series store: blockchain aggregates plus market columns."""
    store: dict[str, DailySeries] = {}
    kinds: dict[str, str] = {}
    if cfg.transactions is not None:
        allow = {addr for addr, _ in cfg.tokens.values()}
        parsed = parse_transactions(cfg.transactions, allow,
                                    max_malformed_fraction=cfg.malformed_threshold)
        cleaned = clean(parsed)
        report["ingestion"] = ingestion_report(parsed, cleaned)
        for name, (addr, decimals) in sorted(cfg.tokens.items()):
            for flow, suffix in ((FlowClass.EOA_TO_EOA, "eoa"), (FlowClass.SC_TO_SC, "sc")):
                sid = f"{name}_{suffix}"
                try:
                    store[sid] = aggregate_daily(cleaned, flow, addr,
                                                 decimals=decimals, label=sid)
                    kinds[sid] = "volume"
                except Exception as exc:
                    errors[f"ingest/{sid}"] = str(exc)
    for sid, (path, fld) in sorted(cfg.market.items()):
        try:
            s = load_market_csv(path, fld)
            store[sid] = DailySeries(s.start_date, s.values, label=sid,
                                     transform=Transform.RAW)
            kinds[sid] = fld
        except Exception as exc:
            errors[f"ingest/{sid}"] = str(exc)
    return store, kinds


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Execute every enabled stage and assemble the deterministic report."""
    cfg.validate()
    echo, digest = config_fingerprint(cfg)
    report: dict = {
        "provenance": {
            "tool": "flowbreaks",
            "version": __version__,
            "seed": cfg.seed,
            "config_sha256": digest,
        },
        "config": echo,
    }
    errors: dict[str, str] = {}
    raw_store, kinds = _load_inputs(cfg, report, errors)

    store: dict[str, DailySeries] = {}
    for sid, raw in sorted(raw_store.items()):
        try:
            store[sid] = _analysis_series(raw, kinds[sid])
        except Exception as exc:
            errors[f"transform/{sid}"] = str(exc)

    if "adf" in cfg.analyses:
        section: dict = {}
        for sid, s in sorted(store.items()):
            try:
                level = adf_test(s, AdfSpec())
                diffd = adf_test(first_difference(s), AdfSpec())
                section[sid] = {
                    "transformation": s.transform.value,
                    "level": level.to_dict(),
                    "first_difference": diffd.to_dict(),
                }
            except Exception as exc:
                errors[f"adf/{sid}"] = str(exc)
        report["adf"] = section

    bcfg = cfg.break_config()
    if "breaks" in cfg.analyses:
        section = {}
        for sid, s in sorted(store.items()):
            try:
                selected = breaks_mod.select_num_breaks(s, bcfg)
                dominant = breaks_mod.estimate_breaks(s, bcfg, 1)
                sf = breaks_mod.supf_test(s, bcfg)
                section[sid] = {
                    "break_date": dominant.break_dates[0].isoformat(),
                    "break_index": dominant.break_indices[0],
                    "sup_f": sf.sup_f,
                    "supf_p_value": sf.p_value,
                    "significant_at_5pct": sf.reject_at_5pct,
                    "selected_m": selected.m,
                    "selected_break_dates": [d.isoformat() for d in selected.break_dates],
                    "regime_means": list(selected.regime_means),
                    "comment": "",
                }
            except Exception as exc:
                errors[f"breaks/{sid}"] = str(exc)
        report["breaks"] = section

    if "surrogate" in cfg.analyses:
        section = {}
        for sid, s in sorted(store.items()):
            try:
                sf = breaks_mod.supf_test(s, bcfg)
                if sf.best_index is None:
                    section[sid] = {"skipped": "degenerate series, no break to validate"}
                    continue
                dominant = breaks_mod.estimate_breaks(s, bcfg, 1)
                verdict = surrogate_mod.break_significance(
                    s, dominant, sf, cfg.surrogate_config(sid), break_cfg=bcfg)
                section[sid] = verdict.to_dict()
            except Exception as exc:
                errors[f"surrogate/{sid}"] = str(exc)
        report["surrogate"] = section

    profiles: dict[str, hht_mod.HilbertProfile] = {}
    if "hht" in cfg.analyses:
        section = {}
        hht_ids = cfg.hht_series
        if hht_ids is None:
            hht_ids = tuple(sid for sid, kind in sorted(kinds.items()) if kind == "close")
        for sid in hht_ids:
            if sid not in store:
                errors[f"hht/{sid}"] = "series not available"
                continue
            try:
                prof = hht_mod.hilbert_profile(store[sid], cfg.emd_config(),
                                               n_bins=cfg.freq_bins, b=cfg.event_sigma)
                entry = {
                    "n_imfs": len(prof.imfs),
                    "e_th": prof.e_th,
                    "events": [
                        {"date": e.date.isoformat() if e.date else None,
                         "index": e.index, "ie_norm": e.ie_norm}
                        for e in prof.events
                    ],
                    "peak_event_date": max(prof.events, key=lambda e: e.ie_norm).date.isoformat()
                                       if prof.events else None,
                }
                if prof.events:
                    runner = surrogate_mod.default_hht_runner(
                        cfg.emd_config(), n_bins=cfg.freq_bins, b=cfg.event_sigma)
                    verdict = surrogate_mod.energy_significance(
                        store[sid], prof.events, cfg.surrogate_config("hht:" + sid),
                        hht_runner=runner)
                    entry["energy_surrogate"] = verdict.to_dict()
                profiles[sid] = prof
                section[sid] = entry
            except Exception as exc:
                errors[f"hht/{sid}"] = str(exc)
        report["hht"] = section

    if "svar" in cfg.analyses:
        section = {}
        pairs = cfg.svar_pairs
        for a_id, b_id in pairs:
            key = f"{a_id}~{b_id}"
            if a_id not in raw_store or b_id not in raw_store:
                errors[f"svar/{key}"] = "series not available"
                continue
            try:
                rep = svar_mod.regime_analysis(raw_store[a_id], raw_store[b_id],
                                               cfg.split_date, p_max=cfg.svar_p_max)
                d = rep.to_dict()
                for ordering in d["wald"].values():
                    ordering["p_value"] = max(ordering["p_value"], 1e-16)
                section[key] = d
            except Exception as exc:
                errors[f"svar/{key}"] = str(exc)
        report["svar"] = section

    report["errors"] = errors
    succeeded = any(k in report and report[k] for k in ("adf", "breaks", "surrogate",
                                                        "hht", "svar", "ingestion"))
    if errors and not succeeded:
        code = 1
    elif errors:
        code = 2
    else:
        code = 0
    return PipelineResult(report=report, store=store, profiles=profiles, exit_code=code)


def _sanitize(obj):
    """Make the report strictly JSON (NaN/inf become null); keys to str."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_report(report: dict, out_dir: str | Path, name: str = "report.json") -> Path:
    """Atomically write the JSON report (temp file + rename)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / name
    payload = json.dumps(_sanitize(report), sort_keys=True, indent=2,
                         allow_nan=False) + "\n"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def emit_plot_data(result: PipelineResult, cfg: RunConfig,
                   out_dir: str | Path | None = None) -> set[Path]:
    """Write per-figure CSVs: series with markers, spectrum grid, energy."""
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir) / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written: set[Path] = set()
    report = result.report

    for sid, s in sorted(result.store.items()):
        rm = rolling_mean(s, min(cfg.rolling_window, len(s)))
        break_dates = set()
        if "breaks" in report and sid in report.get("breaks", {}):
            entry = report["breaks"][sid]
            if "break_date" in entry:
                break_dates.add(entry["break_date"])
        event_dates = set()
        if "hht" in report and sid in report.get("hht", {}):
            event_dates = {e["date"] for e in report["hht"][sid].get("events", [])}
        path = out_dir / f"{sid}_series.csv"
        with path.open("w", newline="") as fh:
            fh.write("date,value,rolling_mean,is_break,is_event,is_election\n")
            for i, d in enumerate(s.dates):
                iso = d.isoformat()
                rv = rm.values[i]
                fh.write(
                    f"{iso},{float(s.values[i])!r},{'' if math.isnan(rv) else repr(float(rv))},"
                    f"{int(iso in break_dates)},{int(iso in event_dates)},"
                    f"{int(d == cfg.event_date)}\n"
                )
        written.add(path)

    for sid, prof in sorted(result.profiles.items()):
        s = result.store[sid]
        spec_path = out_dir / f"{sid}_spectrum.csv"
        centers = prof.spectrum.bin_centers
        with spec_path.open("w", newline="") as fh:
            fh.write("date,freq_rad_per_day,amplitude\n")
            for i, d in enumerate(s.dates):
                row = prof.spectrum.grid[i]
                for b in np.flatnonzero(row):
                    fh.write(f"{d.isoformat()},{float(centers[b])!r},{float(row[b])!r}\n")
        written.add(spec_path)

        energy_path = out_dir / f"{sid}_energy.csv"
        event_idx = {e.index for e in prof.events}
        with energy_path.open("w", newline="") as fh:
            fh.write("date,ie,ie_norm,e_th,is_event\n")
            for i, d in enumerate(s.dates):
                fh.write(f"{d.isoformat()},{float(prof.ie[i])!r},{float(prof.ie_norm[i])!r},"
                         f"{prof.e_th!r},{int(i in event_idx)}\n")
        written.add(energy_path)

        imf_path = out_dir / f"{sid}_imfs.csv"
        with imf_path.open("w", newline="") as fh:
            header = ",".join([f"imf_{k + 1}" for k in range(len(prof.imfs))])
            fh.write(f"date,{header},residue\n")
            for i, d in enumerate(s.dates):
                vals = ",".join(repr(float(imf.values[i])) for imf in prof.imfs)
                fh.write(f"{d.isoformat()},{vals},{float(prof.residue[i])!r}\n")
        written.add(imf_path)

    return written


def export_series_store(result: PipelineResult, cfg: RunConfig) -> set[Path]:
    """Write each analysis series as a canonical date,value CSV."""
    out = Path(cfg.out_dir) / "series"
    out.mkdir(parents=True, exist_ok=True)
    written = set()
    for sid, s in sorted(result.store.items()):
        path = out / f"{sid}.csv"
        write_series_csv(s, path)
        written.add(path)
    return written
