import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oransim.pipeline import (
    AggregateSeries,
    PipelineError,
    SgFilterConfig,
    WindowedDataset,
    aggregate,
    make_windows,
    savgol_coeffs,
    series_from_csv,
    series_to_csv,
    smooth,
)


class TestAggregate:
    def test_all_zero(self):
        out = aggregate(np.zeros(5000), 1000.0)
        assert np.array_equal(out.values, np.zeros(5))

    def test_constant_ttis(self):
        # 1000 TTIs of 0.2 Mbit each within a 1 s frame -> 200 Mbps
        out = aggregate(np.full(1000, 0.2), 1000.0)
        assert out.values == pytest.approx([200.0])

    def test_concat_additivity(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 0.3, 4000)
        b = rng.uniform(0, 0.3, 6000)
        joint = aggregate(np.concatenate([a, b]), 1000.0).values
        split = np.concatenate([aggregate(a, 1000.0).values, aggregate(b, 1000.0).values])
        assert np.allclose(joint, split, atol=1e-12)

    def test_ragged_tail_truncated_and_reported(self):
        out = aggregate(np.ones(2500), 1000.0)
        assert len(out) == 2
        assert out.truncated_ttis == 500

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 3000)
        assert np.allclose(
            aggregate(3.5 * x, 1000.0).values, 3.5 * aggregate(x, 1000.0).values
        )

    def test_frame_not_multiple_of_tti(self):
        with pytest.raises(PipelineError):
            aggregate(np.ones(100), 10.5, tti_ms=1.0)


class TestSavitzkyGolay:
    def test_config_validation(self):
        with pytest.raises(PipelineError):
            SgFilterConfig(window=4, poly_order=2)
        with pytest.raises(PipelineError):
            SgFilterConfig(window=5, poly_order=5)

    def test_coeffs_sum_to_one(self):
        c = savgol_coeffs(11, 3)
        assert np.sum(c) == pytest.approx(1.0, abs=1e-12)

    def test_constant_series_unchanged(self):
        series = AggregateSeries(1000.0, np.full(64, 7.25))
        out = smooth(series, SgFilterConfig(11, 3))
        assert np.allclose(out.values, 7.25, atol=1e-12)

    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_polynomial_reproduced_interior(self, degree):
        n, cfg = 120, SgFilterConfig(11, 3)
        x = np.arange(n, dtype=float)
        y = np.polyval(np.arange(1, degree + 2)[::-1] * 1e-3, x)
        out = smooth(AggregateSeries(1000.0, y), cfg).values
        half = cfg.window // 2
        assert np.max(np.abs(out[half:-half] - y[half:-half])) <= 1e-9

    def test_matches_per_point_least_squares_fit(self):
        # oracle: polynomial fit of each mirrored window, evaluated at center
        rng = np.random.default_rng(4)
        y = rng.normal(size=80)
        cfg = SgFilterConfig(11, 3)
        half = cfg.window // 2
        padded = np.pad(y, half, mode="reflect")
        expect = np.empty_like(y)
        xs = np.arange(-half, half + 1, dtype=float)
        for i in range(y.size):
            win = padded[i : i + cfg.window]
            coef = np.polyfit(xs, win, cfg.poly_order)
            expect[i] = np.polyval(coef, 0.0)
        out = smooth(AggregateSeries(1000.0, y), cfg).values
        assert np.max(np.abs(out - expect)) <= 1e-9

    def test_white_noise_variance_reduction_matches_coeff_norm(self):
        # output variance of white noise through an FIR filter is sigma^2 * sum(c^2)
        cfg = SgFilterConfig(11, 2)
        predicted = float(np.sum(savgol_coeffs(cfg.window, cfg.poly_order) ** 2))
        rng = np.random.default_rng(8)
        y = rng.normal(0.0, 1.0, 200_000)
        out = smooth(AggregateSeries(1000.0, y), cfg).values
        half = cfg.window // 2
        ratio = np.var(out[half:-half]) / np.var(y)
        assert ratio == pytest.approx(predicted, rel=0.05)
        assert ratio < 1.0

    def test_short_series_rejected(self):
        with pytest.raises(PipelineError):
            smooth(AggregateSeries(1000.0, np.ones(5)), SgFilterConfig(11, 3))

    def test_mean_preserved_on_constant(self):
        series = AggregateSeries(1000.0, np.full(256, 3.0))
        out = smooth(series, SgFilterConfig(11, 3))
        assert np.mean(out.values) == pytest.approx(3.0, abs=1e-9)


class TestWindows:
    def _series(self, n):
        return AggregateSeries(1000.0, np.sin(np.arange(n) / 7.0) * 50 + 200)

    def test_boundary_single_pair(self):
        ds = make_windows(self._series(17), input_len=16, horizon=1)
        assert ds.inputs.shape == (1, 16)
        assert ds.targets.shape == (1, 1)

    @pytest.mark.parametrize("n,L,h", [(40, 16, 1), (100, 24, 4), (50, 48, 2)])
    def test_pair_count(self, n, L, h):
        ds = make_windows(self._series(n), input_len=L, horizon=h)
        assert ds.inputs.shape[0] == n - L - h + 1

    def test_window_contents_contiguous(self):
        vals = np.arange(30, dtype=float)
        ds = make_windows(AggregateSeries(1000.0, vals), 8, 2)
        raw_in = ds.denormalize(ds.inputs)
        raw_tg = ds.denormalize(ds.targets)
        assert np.allclose(raw_in[3], vals[3:11])
        assert np.allclose(raw_tg[3], vals[11:13])

    def test_no_target_leakage_into_train_split(self):
        ds = make_windows(self._series(100), 16, 1, train_frac=0.5)
        # last training pair's target index must be <= split point
        assert ds.n_train == 50 - 16 - 1 + 1

    def test_normalization_from_train_region_only(self):
        vals = np.concatenate([np.full(50, 10.0), np.full(50, 1000.0)])
        vals += np.sin(np.arange(100))  # avoid zero variance
        ds = make_windows(AggregateSeries(1000.0, vals), 16, 1, train_frac=0.5)
        assert ds.norm_mean == pytest.approx(np.mean(vals[:50]))
        assert ds.norm_std == pytest.approx(np.std(vals[:50]))

    def test_round_trip(self):
        ds = make_windows(self._series(64), 16, 1)
        x = np.array([1.5, 200.0, -3.25])
        assert np.max(np.abs(ds.denormalize(ds.normalize(x)) - x) / np.abs(x)) < 1e-12

    def test_too_short_rejected(self):
        with pytest.raises(PipelineError):
            make_windows(self._series(10), 16, 1)

    def test_zero_variance_rejected(self):
        with pytest.raises(PipelineError):
            make_windows(AggregateSeries(1000.0, np.full(40, 5.0)), 16, 1)


@settings(max_examples=25, deadline=None)
@given(
    scale=st.floats(0.1, 50.0),
    n=st.integers(24, 200),
)
def test_aggregate_scaling_property(scale, n):
    rng = np.random.default_rng(n)
    x = rng.uniform(0, 1, n * 10)
    a = aggregate(scale * x, 10.0).values
    b = scale * aggregate(x, 10.0).values
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_series_csv_round_trip(tmp_path):
    series = AggregateSeries(1000.0, np.array([1.0, 2.5, 200.123456789]))
    path = tmp_path / "series.csv"
    series_to_csv(series, path)
    back = series_from_csv(path)
    assert np.allclose(back.values, series.values, rtol=1e-9)


def test_series_csv_missing_file(tmp_path):
    with pytest.raises(PipelineError, match="not found"):
        series_from_csv(tmp_path / "nope.csv")
