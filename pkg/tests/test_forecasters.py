"""Base forecasters: repeat-last, exponential smoothing, drift."""

import numpy as np
import pytest

from flowrec import BadParameter, EmptySeries, ForecastSpec, HierarchicalSeries, forecast


def make_series(values):
    values = np.asarray(values, dtype=float)
    return HierarchicalSeries(np.arange(len(values)), values)


class TestSpec:
    def test_ses_needs_alpha_in_range(self):
        ForecastSpec("ses", {"alpha": 1.0})
        for alpha in (0.0, 1.5, -1.0):
            with pytest.raises(BadParameter):
                ForecastSpec("ses", {"alpha": alpha})
        with pytest.raises(BadParameter):
            ForecastSpec("ses", {})

    def test_unknown_kind(self):
        with pytest.raises(BadParameter):
            ForecastSpec("arima")


class TestNaive:
    def test_repeats_last_observation(self):
        series = make_series([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = forecast(series, ForecastSpec("naive"), horizon=3)
        assert len(out) == 3
        for k, vec in enumerate(out, start=1):
            assert vec.horizon == k
            assert vec.origin == 2
            assert np.array_equal(vec.data, [5.0, 6.0])

    def test_horizon_must_be_positive(self):
        series = make_series([[1.0]])
        with pytest.raises(BadParameter):
            forecast(series, ForecastSpec("naive"), horizon=0)


class TestSes:
    def test_alpha_one_equals_naive(self):
        series = make_series([[2.0], [9.0], [4.0]])
        out = forecast(series, ForecastSpec("ses", {"alpha": 1.0}), horizon=2)
        assert np.array_equal(out[0].data, [4.0])
        assert np.array_equal(out[1].data, [4.0])

    def test_matches_direct_weighted_sum(self):
        # The recursive level must equal the explicit geometric weighting
        # alpha * sum_j (1-alpha)^j y_{T-j} + (1-alpha)^(T-1) y_0.
        rng = np.random.default_rng(3)
        values = rng.normal(size=(20, 3))
        series = make_series(values)
        alpha = 0.3
        out = forecast(series, ForecastSpec("ses", {"alpha": alpha}), horizon=1)
        t_count = len(values)
        direct = values[0] * (1 - alpha) ** (t_count - 1)
        for j in range(t_count - 1):
            direct = direct + alpha * (1 - alpha) ** j * values[t_count - 1 - j]
        assert np.allclose(out[0].data, direct, atol=1e-12)


class TestDrift:
    def test_linear_sequence_continues_exactly(self):
        # Component c grows by slope (c+1) per step; drift must continue it.
        t_count, n = 6, 3
        slopes = np.arange(1.0, n + 1)
        values = np.outer(np.arange(t_count), slopes)
        series = make_series(values)
        out = forecast(series, ForecastSpec("drift"), horizon=4)
        for k, vec in enumerate(out, start=1):
            expected = (t_count - 1 + k) * slopes
            assert np.allclose(vec.data, expected, atol=1e-12)

    def test_needs_two_observations(self):
        series = make_series([[1.0]])
        with pytest.raises(EmptySeries):
            forecast(series, ForecastSpec("drift"), horizon=1)
