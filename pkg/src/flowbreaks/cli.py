"""Command-line interface.

Subcommands mirror the analysis stages (``ingest``, ``adf``, ``breaks``,
``hht``, ``surrogate``, ``svar``), plus ``run`` for the full configured
pipeline and ``plot`` to re-render figures from previously emitted CSVs.
Exit codes: 0 success, 2 partial failure (some assets errored), 1 fatal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__
from . import breaks as breaks_mod
from . import hht as hht_mod
from . import surrogate as surrogate_mod
from . import svar as svar_mod
from .ingest import FlowClass, aggregate_daily, clean, ingestion_report, parse_transactions
from .pipeline import (ConfigError, RunConfig, _apply_raw, emit_plot_data,
                       export_series_store, parse_config, run_pipeline, write_report)
from .series import (DailySeries, first_difference, log_transform, read_series_csv,
                     write_series_csv)
from .unitroot import AdfSpec, Deterministic, LagSelection, adf_test

log = logging.getLogger("flowbreaks")


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=str)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_series(args) -> DailySeries:
    s = read_series_csv(args.series, label=args.label or Path(args.series).stem)
    if args.transform == "log":
        s = log_transform(s, plus_one=False)
    elif args.transform == "log1p":
        s = log_transform(s, plus_one=True)
    return s


def _add_series_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--series", required=True, help="canonical date,value CSV")
    p.add_argument("--label", default="", help="series label for the report")
    p.add_argument("--transform", choices=["none", "log", "log1p"], default="none",
                   help="transform applied before analysis (default none)")


def cmd_ingest(args) -> int:
    tokens: dict[str, tuple[str, int]] = {}
    for spec in args.token:
        if "=" not in spec:
            raise SystemExit(f"--token entries look like NAME=0xADDR[:DECIMALS], got {spec!r}")
        name, rest = spec.split("=", 1)
        decimals = 6
        if ":" in rest:
            rest, dec = rest.rsplit(":", 1)
            decimals = int(dec)
        tokens[name.strip()] = (rest.strip().lower(), decimals)
    parsed = parse_transactions(args.transactions, {a for a, _ in tokens.values()},
                                max_malformed_fraction=args.malformed_threshold)
    cleaned = clean(parsed)
    report = ingestion_report(parsed, cleaned)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series_written = {}
    for name, (addr, decimals) in sorted(tokens.items()):
        for flow, suffix in ((FlowClass.EOA_TO_EOA, "eoa"), (FlowClass.SC_TO_SC, "sc")):
            sid = f"{name}_{suffix}"
            try:
                s = aggregate_daily(cleaned, flow, addr, decimals=decimals, label=sid)
            except Exception as exc:
                report.setdefault("errors", {})[sid] = str(exc)
                continue
            path = out_dir / f"{sid}.csv"
            write_series_csv(s, path)
            series_written[sid] = str(path)
    report["series_written"] = series_written
    _write_json(report, str(out_dir / "ingest_report.json"))
    print(f"wrote {len(series_written)} series and ingest_report.json to {out_dir}")
    return 2 if report.get("errors") else 0


def cmd_adf(args) -> int:
    s = _load_series(args)
    spec = AdfSpec(
        deterministic=Deterministic(args.deterministic),
        max_lag=args.max_lag,
        lag_selection=LagSelection.FIXED if args.fixed_lag else LagSelection.AIC_MIN,
    )
    level = adf_test(s, spec)
    diffd = adf_test(first_difference(s), spec)
    _write_json({
        "series": s.label,
        "transformation": s.transform.value,
        "level": level.to_dict(),
        "first_difference": diffd.to_dict(),
    }, args.out)
    return 0


def _break_cfg(args) -> breaks_mod.BreakConfig:
    return breaks_mod.BreakConfig(
        max_breaks=args.max_breaks, trim=args.trim,
        selection=breaks_mod.Selection(args.selection),
        null_sims=args.null_sims, seed=args.seed,
    )


def cmd_breaks(args) -> int:
    s = _load_series(args)
    cfg = _break_cfg(args)
    if args.m is not None:
        model = breaks_mod.estimate_breaks(s, cfg, args.m)
    else:
        model = breaks_mod.select_num_breaks(s, cfg)
    sf = breaks_mod.supf_test(s, cfg)
    dominant = breaks_mod.estimate_breaks(s, cfg, 1) if sf.best_index else None
    _write_json({
        "series": s.label,
        "selected_m": model.m,
        "break_dates": [d.isoformat() for d in model.break_dates],
        "break_indices": list(model.break_indices),
        "regime_means": list(model.regime_means),
        "global_ssr": model.global_ssr,
        "sup_f": sf.sup_f,
        "supf_p_value": sf.p_value,
        "significant_at_5pct": sf.reject_at_5pct,
        "dominant_break_date": dominant.break_dates[0].isoformat() if dominant else None,
    }, args.out)
    return 0


def cmd_hht(args) -> int:
    s = _load_series(args)
    prof = hht_mod.hilbert_profile(
        s, hht_mod.EmdConfig(max_imfs=args.max_imfs),
        n_bins=args.bins, b=args.event_sigma,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sid = s.label
    with (out_dir / f"{sid}_imfs.csv").open("w") as fh:
        header = ",".join(f"imf_{k + 1}" for k in range(len(prof.imfs)))
        fh.write(f"date,{header},residue\n")
        for i, d in enumerate(s.dates):
            vals = ",".join(repr(float(im.values[i])) for im in prof.imfs)
            fh.write(f"{d.isoformat()},{vals},{float(prof.residue[i])!r}\n")
    centers = prof.spectrum.bin_centers
    with (out_dir / f"{sid}_spectrum.csv").open("w") as fh:
        fh.write("date,freq_rad_per_day,amplitude\n")
        for i, d in enumerate(s.dates):
            row = prof.spectrum.grid[i]
            for bidx in np.flatnonzero(row):
                fh.write(f"{d.isoformat()},{float(centers[bidx])!r},{float(row[bidx])!r}\n")
    event_idx = {e.index for e in prof.events}
    with (out_dir / f"{sid}_energy.csv").open("w") as fh:
        fh.write("date,ie,ie_norm,e_th,is_event\n")
        for i, d in enumerate(s.dates):
            fh.write(f"{d.isoformat()},{float(prof.ie[i])!r},{float(prof.ie_norm[i])!r},"
                     f"{prof.e_th!r},{int(i in event_idx)}\n")
    _write_json({
        "series": sid,
        "n_imfs": len(prof.imfs),
        "e_th": prof.e_th,
        "events": [{"date": e.date.isoformat() if e.date else None,
                    "index": e.index, "ie_norm": e.ie_norm} for e in prof.events],
    }, str(out_dir / f"{sid}_hht.json"))
    print(f"wrote IMF, spectrum, and energy CSVs for {sid} to {out_dir}")
    return 0


def cmd_surrogate(args) -> int:
    s = _load_series(args)
    bcfg = _break_cfg(args)
    scfg = surrogate_mod.SurrogateConfig(
        method=surrogate_mod.SurrogateMethod(args.method),
        n_surrogates=args.surrogates, seed=args.seed,
        match_window_days=args.window,
    )
    sf = breaks_mod.supf_test(s, bcfg)
    if sf.best_index is None:
        raise SystemExit("series is degenerate; nothing to validate")
    dominant = breaks_mod.estimate_breaks(s, bcfg, 1)
    verdict = surrogate_mod.break_significance(s, dominant, sf, scfg, break_cfg=bcfg)
    payload = verdict.to_dict()
    payload["series"] = s.label
    payload["observed_break_date"] = dominant.break_dates[0].isoformat()
    _write_json(payload, args.out)
    return 0


def cmd_svar(args) -> int:
    a = read_series_csv(args.series_a, label=Path(args.series_a).stem)
    b = read_series_csv(args.series_b, label=Path(args.series_b).stem)
    rep = svar_mod.regime_analysis(a, b, date.fromisoformat(args.split_date),
                                   p_max=args.p_max)
    _write_json(rep.to_dict(), args.out)
    return 0


def cmd_run(args) -> int:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    _apply_raw(cfg, overrides)
    result = run_pipeline(cfg)
    out_dir = Path(cfg.out_dir)
    report_path = write_report(result.report, out_dir)
    export_series_store(result, cfg)
    emit_plot_data(result, cfg)
    if not args.no_plots:
        from .plotting import render_figures
        figures = render_figures(out_dir / "plots", out_dir / "figures")
        print(f"rendered {len(figures)} figure(s) to {out_dir / 'figures'}")
    print(f"report written to {report_path}")
    if result.report["errors"]:
        for key, msg in sorted(result.report["errors"].items()):
            print(f"error [{key}]: {msg}", file=sys.stderr)
    return result.exit_code


def cmd_plot(args) -> int:
    from .plotting import render_figures
    out_dir = Path(args.out_dir)
    figures = render_figures(out_dir / "plots", out_dir / "figures")
    print(f"rendered {len(figures)} figure(s) to {out_dir / 'figures'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowbreaks",
        description="Structural breaks, Hilbert-spectrum extreme events, surrogate "
                    "validation, and SVAR regime comparison for daily series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse transfers, clean, aggregate daily series")
    p.add_argument("--transactions", required=True)
    p.add_argument("--token", action="append", required=True,
                   metavar="NAME=0xADDR[:DECIMALS]")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--malformed-threshold", type=float, default=0.001)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("adf", help="unit-root test (level and first difference)")
    _add_series_opts(p)
    p.add_argument("--deterministic", choices=["c", "ct", "n"], default="c")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--fixed-lag", action="store_true",
                   help="use --max-lag directly instead of AIC selection")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_adf)

    def add_break_opts(p):
        p.add_argument("--max-breaks", type=int, default=5)
        p.add_argument("--trim", type=float, default=0.15)
        p.add_argument("--selection", choices=["bic", "seq", "fixed"], default="bic")
        p.add_argument("--null-sims", type=int, default=2000)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("breaks", help="Bai-Perron breaks and sup-F significance")
    _add_series_opts(p)
    add_break_opts(p)
    p.add_argument("--m", type=int, default=None, help="estimate exactly m breaks")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_breaks)

    p = sub.add_parser("hht", help="EMD, Hilbert spectrum, extreme events")
    _add_series_opts(p)
    p.add_argument("--max-imfs", type=int, default=10)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--event-sigma", type=float, default=4.0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_hht)

    p = sub.add_parser("surrogate", help="surrogate validation of the dominant break")
    _add_series_opts(p)
    add_break_opts(p)
    p.add_argument("--surrogates", type=int, default=1000)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--method", choices=["ft", "aaft"], default="aaft")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("svar", help="two-window SVAR comparison and Wald test")
    p.add_argument("--series-a", required=True)
    p.add_argument("--series-b", required=True)
    p.add_argument("--split-date", required=True)
    p.add_argument("--p-max", type=int, default=14)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_svar)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="re-render figures from emitted plot CSVs")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
