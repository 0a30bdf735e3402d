"""Series transforms: examples plus the stated algebraic properties."""

from __future__ import annotations

import math
from datetime import date

import numpy as np
import pytest

from flowbreaks.series import (DailySeries, Transform, first_difference,
                               log_transform, read_series_csv, rolling_mean,
                               split_at, write_series_csv)

D0 = date(2024, 3, 1)


def mk(values, start=D0, transform=Transform.RAW):
    return DailySeries(start, np.asarray(values, dtype=float), "t", transform)


class TestLogTransform:
    def test_ln_one_is_zero(self):
        assert log_transform(mk([1.0])).values[0] == 0.0

    def test_log1p_of_zero_is_zero(self):
        assert log_transform(mk([0.0]), plus_one=True).values[0] == 0.0

    def test_log1p_of_e_minus_one(self):
        out = log_transform(mk([math.e - 1.0]), plus_one=True)
        assert out.values[0] == pytest.approx(1.0, abs=1e-12)
        assert out.transform is Transform.LOG1P

    def test_rejects_nonpositive_without_plus_one(self):
        with pytest.raises(ValueError, match="non-positive"):
            log_transform(mk([1.0, 0.0]))


class TestFirstDifference:
    def test_arithmetic(self):
        out = first_difference(mk([1.0, 2.0, 4.0]))
        assert out.values.tolist() == [1.0, 2.0]
        assert out.start_date == D0.replace(day=2)

    def test_constant_gives_zeros(self):
        assert not first_difference(mk([3.0] * 10)).values.any()

    def test_cumsum_inverts(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(50)
        s = mk(v)
        rebuilt = np.concatenate([[v[0]], v[0] + np.cumsum(first_difference(s).values)])
        np.testing.assert_allclose(rebuilt, v, atol=1e-12)

    def test_length_one_rejected(self):
        with pytest.raises(ValueError):
            first_difference(mk([1.0]))

    def test_transform_transitions(self):
        assert first_difference(mk([1, 2, 3], transform=Transform.LOG)).transform \
            is Transform.DIFF_LOG
        assert first_difference(mk([1, 2, 3], transform=Transform.LOG1P)).transform \
            is Transform.DIFF_LOG1P


class TestRollingMean:
    def test_window_one_is_identity(self):
        v = [1.0, 5.0, 2.0]
        np.testing.assert_array_equal(rolling_mean(mk(v), 1).values, v)

    def test_small_example(self):
        out = rolling_mean(mk([1.0, 2.0, 3.0]), 2).values
        assert math.isnan(out[0])
        assert out[1:].tolist() == [1.5, 2.5]

    def test_against_prefix_sum_oracle(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(200)
        w = 20
        got = rolling_mean(mk(v), w).values
        prefix = np.concatenate([[0.0], np.cumsum(v)])
        want = (prefix[w:] - prefix[:-w]) / w
        np.testing.assert_allclose(got[w - 1:], want, atol=1e-12)
        assert np.isnan(got[: w - 1]).all()

    def test_commutes_with_constant_shift(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal(60)
        a = rolling_mean(mk(v + 5.0), 7).values
        b = rolling_mean(mk(v), 7).values + 5.0
        np.testing.assert_allclose(a[6:], b[6:], atol=1e-12)

    def test_bad_windows(self):
        with pytest.raises(ValueError):
            rolling_mean(mk([1.0, 2.0]), 0)
        with pytest.raises(ValueError):
            rolling_mean(mk([1.0, 2.0]), 3)


class TestSplitAt:
    def test_ten_day_split(self):
        s = mk(np.arange(10.0))
        sp = split_at(s, D0.replace(day=6))
        assert len(sp.pre) == 5 and len(sp.post) == 5
        assert sp.pre.end_date == D0.replace(day=5)
        assert sp.post.start_date == D0.replace(day=6)

    def test_split_at_first_date_rejected(self):
        with pytest.raises(ValueError):
            split_at(mk(np.arange(10.0)), D0)

    def test_reference_window_boundaries(self):
        s = DailySeries(date(2024, 3, 1), np.arange(365.0), "year")
        sp = split_at(s, date(2024, 11, 5))
        assert sp.pre.end_date == date(2024, 11, 4)
        assert sp.post.start_date == date(2024, 11, 5)
        assert len(sp.pre) + len(sp.post) == 365

    def test_concat_identity(self):
        rng = np.random.default_rng(3)
        s = mk(rng.standard_normal(30))
        sp = split_at(s, D0.replace(day=13))
        np.testing.assert_array_equal(
            np.concatenate([sp.pre.values, sp.post.values]), s.values)
        assert sp.pre.dates + sp.post.dates == s.dates


class TestCompositionProperties:
    def test_diff_of_log_is_log_ratio(self):
        rng = np.random.default_rng(4)
        v = np.exp(rng.standard_normal(40))
        got = first_difference(log_transform(mk(v))).values
        np.testing.assert_allclose(got, np.log(v[1:] / v[:-1]), atol=1e-12)


class TestCsvRoundTrip:
    def test_round_trip_preserves_values_and_nan(self, tmp_path):
        rng = np.random.default_rng(5)
        s = rolling_mean(mk(rng.standard_normal(25)), 4)
        path = tmp_path / "s.csv"
        write_series_csv(s, path)
        back = read_series_csv(path)
        assert back.start_date == s.start_date
        np.testing.assert_array_equal(np.isnan(back.values), np.isnan(s.values))
        np.testing.assert_array_equal(back.values[3:], s.values[3:])

    def test_gap_detected(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("date,value\n2024-03-01,1.0\n2024-03-03,2.0\n")
        with pytest.raises(ValueError, match="contiguous"):
            read_series_csv(path)


class TestDailySeriesValidation:
    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            mk([1.0, np.inf])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            DailySeries(D0, np.array([]))

    def test_values_read_only(self):
        s = mk([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 9.0
