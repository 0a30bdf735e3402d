"""Pipeline orchestration, config handling, reports, plot data, and the CLI."""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
from datetime import date, timedelta

import numpy as np
import pytest

from flowbreaks.cli import main as cli_main
from flowbreaks.pipeline import (ConfigError, RunConfig, config_fingerprint,
                                 emit_plot_data, parse_config, run_pipeline,
                                 write_report)
from tests.conftest import USDC, USDT, build_run_fixture


class TestConfig:
    def test_parse_round_trip(self, run_fixture):
        config_path, out_dir = run_fixture
        cfg = parse_config(config_path)
        assert cfg.seed == 42
        assert cfg.split_date == date(2024, 6, 29)
        assert cfg.tokens["usdt"] == (USDT, 6)
        assert cfg.market["btc_close"][1] == "close"
        assert cfg.svar_pairs == (("usdc_eoa", "usdt_eoa"),)
        assert cfg.surrogate_n == 300
        cfg.validate()

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("no_such_key = 1\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config(p)

    def test_missing_file_rejected_at_validation(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("transactions = /nonexistent.csv\ntoken.usdt = " + USDT + "\n")
        with pytest.raises(ConfigError, match="not found"):
            parse_config(p).validate()

    def test_no_inputs_rejected(self):
        with pytest.raises(ConfigError, match="no inputs"):
            RunConfig().validate()

    def test_fingerprint_stable_and_sensitive(self, run_fixture):
        cfg = parse_config(run_fixture[0])
        _, d1 = config_fingerprint(cfg)
        _, d2 = config_fingerprint(cfg)
        assert d1 == d2
        cfg.seed += 1
        assert config_fingerprint(cfg)[1] != d1


@pytest.fixture(scope="module")
def result(tmp_path_factory):
    config_path, _ = build_run_fixture(tmp_path_factory.mktemp("fx"))
    cfg = parse_config(config_path)
    return run_pipeline(cfg), cfg


@pytest.fixture(scope="module")
def emitted(tmp_path_factory):
    root = tmp_path_factory.mktemp("plots")
    config_path, out_dir = build_run_fixture(root, n_surrogates=120)
    cfg = parse_config(config_path)
    res = run_pipeline(cfg)
    paths = emit_plot_data(res, cfg)
    return res, cfg, out_dir, paths


class TestRunPipeline:

    def test_no_errors_and_exit_zero(self, result):
        res, _ = result
        assert res.report["errors"] == {}
        assert res.exit_code == 0

    def test_ingestion_counts(self, result):
        res, _ = result
        ing = res.report["ingestion"]
        assert ing["rows_total"] == 200 * 6 + 2
        assert ing["removed"]["duplicate"] == 1
        assert ing["removed"]["zero_value"] == 1
        counts = ing["count_by_class"]
        assert counts["EoaToEoa"] + counts["ScToSc"] + counts["Mixed"] \
            == ing["records_clean"]

    def test_planted_break_recovered_within_one_day(self, result):
        res, _ = result
        planted = date(2024, 6, 29)
        for sid in ("usdt_eoa", "usdc_eoa", "usdt_volume"):
            got = date.fromisoformat(res.report["breaks"][sid]["break_date"])
            assert abs((got - planted).days) <= 1, sid
            assert res.report["breaks"][sid]["significant_at_5pct"]

    def test_surrogate_validation_significant(self, result):
        res, _ = result
        for sid in ("usdt_eoa", "usdc_eoa"):
            verdict = res.report["surrogate"][sid]
            assert verdict["p_value"] <= 0.01, sid
            assert 0 < verdict["p_value"] <= 1

    def test_adf_table_shape(self, result):
        res, _ = result
        for sid, rows in res.report["adf"].items():
            assert set(rows) >= {"level", "first_difference"}
            for row in (rows["level"], rows["first_difference"]):
                assert 0 < row["p_value"] <= 1
                assert row["crit_5pct"] < 0

    def test_hht_section(self, result):
        res, _ = result
        entry = res.report["hht"]["btc_close"]
        assert entry["n_imfs"] >= 2
        assert entry["e_th"] > 0
        if entry["events"]:
            assert entry["peak_event_date"] is not None
            assert "energy_surrogate" in entry

    def test_svar_section(self, result):
        res, _ = result
        block = res.report["svar"]["usdc_eoa~usdt_eoa"]
        assert set(block["impacts"]) == {"first", "second"}
        for window_entries in block["impacts"]["first"].values():
            assert len(window_entries) == 3
        assert 0 < block["wald"]["first"]["p_value"] <= 1

    def test_every_reported_pvalue_in_unit_interval(self, result):
        res, _ = result

        def walk(obj, path=""):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    if k in ("p_value", "supf_p_value", "p_value_window") \
                            and isinstance(v, (int, float)):
                        assert 0 < v <= 1, f"{path}/{k} = {v}"
                    else:
                        walk(v, f"{path}/{k}")
            elif isinstance(obj, list):
                for i, v in enumerate(obj):
                    walk(v, f"{path}[{i}]")

        walk(res.report)

    def test_reported_dates_within_span(self, result):
        res, _ = result
        lo, hi = date(2024, 3, 1), date(2024, 3, 1) + timedelta(days=199)
        for sid, entry in res.report["breaks"].items():
            d = date.fromisoformat(entry["break_date"])
            assert lo <= d <= hi

    def test_toggles_all_off(self, run_fixture):
        config_path, _ = run_fixture
        cfg = parse_config(config_path)
        cfg.analyses = ()
        res = run_pipeline(cfg)
        assert "ingestion" in res.report
        for stage in ("adf", "breaks", "surrogate", "hht", "svar"):
            assert stage not in res.report

    def test_stage_isolation(self, tmp_path, result):
        full, _ = result
        config_path, _ = build_run_fixture(tmp_path)
        cfg = parse_config(config_path)
        cfg.analyses = ("adf", "breaks", "surrogate", "svar")   # hht disabled
        partial = run_pipeline(cfg)
        assert "hht" not in partial.report
        for section in ("ingestion", "adf", "breaks", "surrogate", "svar"):
            assert partial.report[section] == full.report[section], section

    def test_partial_failure_exit_code(self, run_fixture):
        config_path, _ = run_fixture
        cfg = parse_config(config_path)
        cfg.svar_pairs = (("usdc_eoa", "no_such_series"),)
        res = run_pipeline(cfg)
        assert res.exit_code == 2
        assert "svar/usdc_eoa~no_such_series" in res.report["errors"]


class TestReportWriting:
    def test_atomic_write_and_json_strictness(self, tmp_path):
        report = {"b": 1.5, "a": {"x": float("nan"), "y": float("inf")}}
        path = write_report(report, tmp_path)
        text = path.read_text()
        parsed = json.loads(text)
        assert parsed["a"]["x"] is None and parsed["a"]["y"] is None
        assert list(parsed) == sorted(parsed)
        assert not list(tmp_path.glob("*.tmp"))

    def test_deterministic_bytes_across_parallelism(self, tmp_path):
        """Same config+seed, different thread-count env: byte-identical report."""
        config_path, _ = build_run_fixture(tmp_path, n_surrogates=150)
        reports = []
        for threads in ("1", "4"):
            out_dir = tmp_path / f"out_t{threads}"
            env = dict(os.environ, OMP_NUM_THREADS=threads,
                       OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
            proc = subprocess.run(
                [sys.executable, "-m", "flowbreaks.cli", "run",
                 "--config", str(config_path), "--out-dir", str(out_dir),
                 "--no-plots"],
                capture_output=True, text=True, env=env, timeout=600)
            assert proc.returncode == 0, proc.stderr
            reports.append((out_dir / "report.json").read_bytes())
        assert reports[0] == reports[1]

    def test_same_seed_same_bytes_in_process(self, tmp_path):
        config_path, out_dir = build_run_fixture(tmp_path, n_surrogates=120)
        blobs = []
        for name in ("r1.json", "r2.json"):
            res = run_pipeline(parse_config(config_path))
            path = write_report(res.report, out_dir, name=name)
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]


class TestPlotData:
    def test_row_counts_match_series_lengths(self, emitted):
        res, cfg, out_dir, _ = emitted
        for sid, s in res.store.items():
            lines = (out_dir / "plots" / f"{sid}_series.csv").read_text().splitlines()
            assert len(lines) - 1 == len(s)

    def test_energy_csv_constant_threshold(self, emitted):
        res, cfg, out_dir, _ = emitted
        prof = res.profiles["btc_close"]
        lines = (out_dir / "plots" / "btc_close_energy.csv").read_text().splitlines()
        assert len(lines) - 1 == len(res.store["btc_close"])
        th = {float(line.split(",")[3]) for line in lines[1:]}
        assert th == {prof.e_th}
        want = prof.ie.mean() + 4.0 * prof.ie.std()
        assert prof.e_th == pytest.approx(want, rel=1e-12)

    def test_election_marker_present(self, emitted):
        res, cfg, out_dir, _ = emitted
        lines = (out_dir / "plots" / "usdt_eoa_series.csv").read_text().splitlines()
        marked = [line for line in lines[1:] if line.split(",")[5] == "1"]
        assert len(marked) == 1
        assert marked[0].startswith(cfg.event_date.isoformat())

    def test_break_marker_matches_report(self, emitted):
        res, cfg, out_dir, _ = emitted
        want = res.report["breaks"]["usdt_eoa"]["break_date"]
        lines = (out_dir / "plots" / "usdt_eoa_series.csv").read_text().splitlines()
        marked = [line.split(",")[0] for line in lines[1:] if line.split(",")[3] == "1"]
        assert marked == [want]

    def test_imf_csv_columns(self, emitted):
        res, cfg, out_dir, _ = emitted
        prof = res.profiles["btc_close"]
        header = (out_dir / "plots" / "btc_close_imfs.csv").read_text().splitlines()[0]
        assert header.split(",") == (
            ["date"] + [f"imf_{k+1}" for k in range(len(prof.imfs))] + ["residue"])

    def test_figures_render(self, emitted):
        res, cfg, out_dir, _ = emitted
        from flowbreaks.plotting import render_figures
        figures = render_figures(out_dir / "plots", out_dir / "figures")
        assert len(figures) == len(res.store)
        for f in figures:
            assert f.exists() and f.stat().st_size > 10_000


class TestCli:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli_main(["--version"])
        assert exc.value.code == 0

    def test_ingest_then_analyses(self, tmp_path, run_fixture, capsys):
        config_path, _ = run_fixture
        data_dir = config_path.parent / "data"
        out = tmp_path / "cli"
        rc = cli_main(["ingest", "--transactions", str(data_dir / "erc20.csv"),
                       "--token", f"usdt={USDT}", "--token", f"usdc={USDC}:6",
                       "--out-dir", str(out)])
        assert rc == 0
        assert (out / "usdt_eoa.csv").exists()
        assert json.loads((out / "ingest_report.json").read_text())["records_clean"] > 0

        rc = cli_main(["adf", "--series", str(out / "usdt_eoa.csv"),
                       "--transform", "log1p", "--out", str(out / "adf.json")])
        assert rc == 0
        adf = json.loads((out / "adf.json").read_text())
        assert adf["first_difference"]["stationary_at_5pct"] is True

        rc = cli_main(["breaks", "--series", str(out / "usdt_eoa.csv"),
                       "--transform", "log1p", "--out", str(out / "breaks.json")])
        assert rc == 0
        breaks = json.loads((out / "breaks.json").read_text())
        assert abs(date.fromisoformat(breaks["dominant_break_date"])
                   - date(2024, 6, 29)) <= timedelta(days=1)

        rc = cli_main(["surrogate", "--series", str(out / "usdt_eoa.csv"),
                       "--transform", "log1p", "--surrogates", "150",
                       "--seed", "3", "--out", str(out / "sur.json")])
        assert rc == 0
        assert json.loads((out / "sur.json").read_text())["p_value"] <= 0.01

    def test_hht_and_svar_subcommands(self, tmp_path, run_fixture):
        config_path, _ = run_fixture
        cfg = parse_config(config_path)
        from flowbreaks.pipeline import export_series_store
        res = run_pipeline(cfg)
        export_series_store(res, cfg)
        series_dir = cfg.out_dir / "series"
        out = tmp_path / "x"
        rc = cli_main(["hht", "--series", str(series_dir / "btc_close.csv"),
                       "--out-dir", str(out)])
        assert rc == 0
        assert (out / "btc_close_energy.csv").exists()
        assert (out / "btc_close_spectrum.csv").exists()

        rc = cli_main(["svar", "--series-a", str(series_dir / "usdc_eoa.csv"),
                       "--series-b", str(series_dir / "usdt_eoa.csv"),
                       "--split-date", "2024-06-29",
                       "--out", str(out / "svar.json")])
        assert rc == 0
        block = json.loads((out / "svar.json").read_text())
        assert set(block["impacts"]) == {"first", "second"}

    def test_run_command_and_artifacts(self, tmp_path):
        config_path, out_dir = build_run_fixture(tmp_path, n_surrogates=120)
        rc = cli_main(["run", "--config", str(config_path)])
        assert rc == 0
        assert (out_dir / "report.json").exists()
        assert (out_dir / "figures").is_dir()
        assert list((out_dir / "figures").glob("*.png"))
        rc = cli_main(["plot", "--out-dir", str(out_dir)])
        assert rc == 0

    def test_run_fatal_config_error(self, tmp_path, capsys):
        p = tmp_path / "broken.cfg"
        p.write_text("transactions = /nope.csv\ntoken.usdt = " + USDT + "\n")
        rc = cli_main(["run", "--config", str(p)])
        assert rc == 1
