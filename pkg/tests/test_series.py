"""Series container, CSV IO, standardization, splitting and windowing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arkan.errors import DegenerateSeriesError, InputError
from arkan.series import (
    StandardizationStats,
    TimeSeries,
    WindowDataset,
    apply_standardize,
    fit_standardize,
    lag_matrix,
    load_csv,
    make_windows,
    split,
    write_csv,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def _write(tmp_path, text, name="s.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestTimeSeries:
    def test_values_are_read_only(self):
        ts = TimeSeries([1.0, 2.0])
        with pytest.raises(ValueError):
            ts.values[0] = 5.0

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InputError):
            TimeSeries([])
        with pytest.raises(InputError):
            TimeSeries([1.0, np.nan])

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(InputError):
            TimeSeries([1.0, 2.0], t0=0.0, dt=0.0)

    def test_times_axis(self):
        ts = TimeSeries([1.0, 2.0, 3.0], t0=1.0, dt=0.5)
        np.testing.assert_allclose(ts.times, [1.0, 1.5, 2.0])
        assert TimeSeries([1.0]).times is None


class TestCsv:
    def test_value_column(self, tmp_path):
        ts = load_csv(_write(tmp_path, "value\n1.0\n2.0\n3.0\n"))
        np.testing.assert_array_equal(ts.values, [1.0, 2.0, 3.0])
        assert ts.dt is None

    def test_uniform_time_column(self, tmp_path):
        ts = load_csv(_write(tmp_path, "t,value\n0,5\n1,5\n"))
        np.testing.assert_array_equal(ts.values, [5.0, 5.0])
        assert ts.t0 == 0.0 and ts.dt == 1.0

    def test_nonuniform_time_dropped(self, tmp_path):
        ts = load_csv(_write(tmp_path, "t,value\n0,1\n1,2\n3,3\n"))
        assert ts.t0 is None and ts.dt is None

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(InputError, match="line 3.*'abc'"):
            load_csv(_write(tmp_path, "value\n1\nabc\n"))

    def test_missing_value_column(self, tmp_path):
        with pytest.raises(InputError, match="value"):
            load_csv(_write(tmp_path, "x,y\n1,2\n"))

    def test_empty_body(self, tmp_path):
        with pytest.raises(InputError, match="no data"):
            load_csv(_write(tmp_path, "value\n"))

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(InputError, match="nope.csv"):
            load_csv(tmp_path / "nope.csv")

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        ts = TimeSeries(rng.normal(size=50), t0=0.0, dt=0.1)
        path = tmp_path / "rt.csv"
        write_csv(ts, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.values, ts.values)
        np.testing.assert_allclose(back.dt, 0.1, rtol=1e-12)


class TestStandardize:
    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            fit_standardize(TimeSeries([0.0, 0.0, 0.0, 0.0]))

    def test_two_points(self):
        s = fit_standardize(TimeSeries([1.0, 3.0]))
        assert s.mean == 2.0 and s.std == 1.0

    def test_population_std(self):
        s = fit_standardize(TimeSeries([2.0, 4.0, 6.0, 8.0]))
        assert s.mean == 5.0
        np.testing.assert_allclose(s.std, np.sqrt(5.0), rtol=1e-15)

    def test_forward_and_inverse_points(self):
        stats = StandardizationStats(5.0, 2.0)
        assert apply_standardize(TimeSeries([5.0]), stats).values[0] == 0.0
        assert apply_standardize(TimeSeries([1.0]), stats, inverse=True).values[0] == 7.0

    def test_standardized_moments(self):
        ts = TimeSeries(np.random.default_rng(0).normal(3.0, 7.0, size=300))
        z = apply_standardize(ts, fit_standardize(ts)).values
        assert abs(z.mean()) < 1e-9
        assert abs(z.var() - 1.0) < 1e-9

    def test_stats_reject_nonpositive_std(self):
        with pytest.raises(DegenerateSeriesError):
            StandardizationStats(0.0, 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=40), finite, st.floats(min_value=1e-3, max_value=1e3))
    def test_round_trip_identity(self, values, mean, std):
        ts = TimeSeries(values)
        stats = StandardizationStats(mean, std)
        back = apply_standardize(apply_standardize(ts, stats), stats, inverse=True)
        np.testing.assert_allclose(back.values, ts.values, rtol=1e-12, atol=1e-12 * (1 + abs(mean)))


class TestSplit:
    def test_default_protocol(self):
        train, test = split(TimeSeries(np.arange(500.0)), 0.8)
        assert len(train) == 400 and len(test) == 100

    def test_even(self):
        train, test = split(TimeSeries(np.arange(10.0)), 0.5)
        assert len(train) == 5 and len(test) == 5

    def test_empty_side(self):
        with pytest.raises(InputError):
            split(TimeSeries([1.0, 2.0]), 0.1)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.5, 1.5])
    def test_bad_ratio(self, ratio):
        with pytest.raises(InputError):
            split(TimeSeries(np.arange(10.0)), ratio)

    def test_test_time_axis_continues(self):
        train, test = split(TimeSeries(np.arange(10.0), t0=2.0, dt=0.5), 0.8)
        assert test.t0 == 2.0 + 8 * 0.5

    @settings(max_examples=100, deadline=None)
    @given(st.lists(finite, min_size=2, max_size=60), st.floats(min_value=0.01, max_value=0.99))
    def test_concatenation_reproduces(self, values, ratio):
        ts = TimeSeries(values)
        try:
            train, test = split(ts, ratio)
        except InputError:
            return
        np.testing.assert_array_equal(np.concatenate([train.values, test.values]), ts.values)


class TestWindows:
    def test_enumeration(self):
        ds = make_windows(TimeSeries([1.0, 2.0, 3.0, 4.0]), 2)
        np.testing.assert_array_equal(ds.inputs, [[2, 1], [3, 2]])
        np.testing.assert_array_equal(ds.targets, [3, 4])
        assert ds.p == 2

    def test_context(self):
        ds = make_windows(TimeSeries([9.0]), 2, context=TimeSeries([1.0, 2.0]))
        np.testing.assert_array_equal(ds.inputs, [[2, 1]])
        np.testing.assert_array_equal(ds.targets, [9])

    def test_too_short(self):
        with pytest.raises(InputError):
            make_windows(TimeSeries([1.0, 2.0]), 5)

    def test_dataset_shape_check(self):
        with pytest.raises(InputError):
            WindowDataset(np.zeros((3, 2)), np.zeros(4))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 15), st.integers(1, 30))
    def test_index_bookkeeping(self, p, n_ctx, n_ts):
        # encode each sample by its global index so offsets are checkable
        full = np.arange(n_ctx + n_ts, dtype=float)
        ctx = TimeSeries(full[:n_ctx]) if n_ctx else None
        ts = TimeSeries(full[n_ctx:])
        if n_ctx + n_ts < p + 1:
            with pytest.raises(InputError):
                make_windows(ts, p, context=ctx)
            return
        ds = make_windows(ts, p, context=ctx)
        for row, target in zip(ds.inputs, ds.targets):
            n = int(target)
            assert n >= n_ctx
            np.testing.assert_array_equal(row, n - 1 - np.arange(p))

    def test_lag_matrix_orientation(self):
        np.testing.assert_array_equal(lag_matrix(np.arange(4.0), 3), [[2, 1, 0], [3, 2, 1]])
