"""Downsampling, quantile transform, windowing, and the rotation corpus."""

import numpy as np
import pytest

from vrmotion.core import TimeSeries
from vrmotion.preprocess import (fit_quantile_transformer, load_rotation_csv,
                                 lowpass_downsample, make_rotation_corpus,
                                 postprocess, preprocess_series,
                                 save_rotation_csv, slide_windows,
                                 transform_windows)


def band_energy(x, rate, f_lo, f_hi):
    x = np.asarray(x, dtype=float) - np.mean(x)
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / rate)
    return spec[(freqs >= f_lo) & (freqs < f_hi)].sum()


class TestLowpassDownsample:
    def test_constant_preserved(self):
        s = TimeSeries(rate=250.0, values={"a": np.full(2500, 3.7)})
        out = lowpass_downsample(s, 10.0)
        assert out.rate == 10.0
        assert np.allclose(out.values["a"], 3.7, atol=1e-9)

    def test_sinusoid_amplitude_within_two_percent(self):
        t = np.arange(5000) / 250.0
        s = TimeSeries(rate=250.0, values={"a": np.sin(2 * np.pi * 2.0 * t)})
        out = lowpass_downsample(s, 10.0)
        analytic = np.sin(2 * np.pi * 2.0 * out.times())
        # a sinusoid is not constant beyond the ends, so the edge-replicate
        # padding distorts one filter length at each boundary; judge the rest
        edge = 13
        err = np.abs(out.values["a"] - analytic)[edge:-edge]
        assert err.max() < 0.02

    def test_sub_5hz_energy_preserved(self):
        rng = np.random.default_rng(0)
        t = np.arange(25000) / 250.0
        x = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in
                zip(rng.uniform(0.5, 2.0, 8), rng.uniform(0.2, 4.5, 8),
                    rng.uniform(0, 2 * np.pi, 8)))
        s = TimeSeries(rate=250.0, values={"a": x})
        out = lowpass_downsample(s, 10.0)
        # compare time-averaged band power (Parseval: sum |X|^2 = N sum x^2)
        p_in = band_energy(x, 250.0, 0.0, 5.0) / len(x) ** 2
        p_out = band_energy(out.values["a"], 10.0, 0.0, 5.0) / out.n_samples ** 2
        assert p_out >= 0.9 * p_in

    def test_linear(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(2500)
        s1 = TimeSeries(rate=250.0, values={"a": x})
        s2 = TimeSeries(rate=250.0, values={"a": 3.0 * x})
        a = lowpass_downsample(s1, 10.0).values["a"]
        b = lowpass_downsample(s2, 10.0).values["a"]
        assert np.allclose(b, 3.0 * a, atol=1e-9)

    def test_non_integer_factor_rejected(self):
        s = TimeSeries(rate=250.0, values={"a": np.zeros(1000)})
        with pytest.raises(ValueError):
            lowpass_downsample(s, 7.0)


class TestQuantileTransformer:
    def _fit(self, n=20000, seed=0):
        rng = np.random.default_rng(seed)
        data = {"yaw": rng.normal(10.0, 40.0, n) + 30.0 * rng.random(n) ** 2}
        return fit_quantile_transformer(data), data

    def test_median_maps_near_zero(self):
        tf, data = self._fit()
        med = np.median(data["yaw"])
        assert abs(tf.transform(np.array([med]), "yaw")[0]) <= 0.01

    def test_inverse_round_trip(self):
        tf, data = self._fit()
        lo, hi = np.quantile(data["yaw"], [0.05, 0.95])
        x = np.linspace(lo, hi, 500)
        back = tf.inverse(tf.transform(x, "yaw"), "yaw")
        assert np.max(np.abs(back - x)) < 1e-6

    def test_out_of_range_clamps(self):
        tf, data = self._fit()
        lo, hi = tf.fit_range("yaw")
        z = tf.transform(np.array([lo - 100.0, hi + 100.0]), "yaw")
        assert z[0] == tf.transform(np.array([lo]), "yaw")[0]
        assert z[1] == tf.transform(np.array([hi]), "yaw")[0]
        back = tf.inverse(np.array([-50.0, 50.0]), "yaw")
        assert lo <= back[0] <= hi and lo <= back[1] <= hi

    def test_normality_of_transformed_uniform(self):
        from scipy import stats
        rng = np.random.default_rng(2)
        data = {"u": rng.random(100_000)}
        tf = fit_quantile_transformer(data)
        z = tf.transform(data["u"], "u")
        assert abs(stats.skew(z)) < 0.05
        assert abs(stats.kurtosis(z)) < 0.1

    def test_degenerate_channel_rejected(self):
        with pytest.raises(ValueError):
            fit_quantile_transformer({"c": np.full(2000, 1.0)})

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            fit_quantile_transformer({"c": np.arange(999.0)})

    def test_serialization_round_trip(self):
        tf, data = self._fit()
        clone = type(tf).from_dict(tf.to_dict())
        x = np.linspace(*np.quantile(data["yaw"], [0.1, 0.9]), 100)
        assert np.array_equal(tf.transform(x, "yaw"), clone.transform(x, "yaw"))


class TestSlideWindows:
    def test_count_stride_one(self):
        out = slide_windows(np.zeros(10_000), length=25, stride=1)
        assert out.shape[0] == 9_976

    def test_disjoint_stride(self):
        out = slide_windows(np.zeros(1000), length=25, stride=25)
        assert out.shape[0] == 40

    def test_order_preserving(self):
        out = slide_windows(np.arange(30.0), length=25, stride=1)
        assert np.allclose(out[0], np.arange(25.0))
        assert np.allclose(out[5], np.arange(5.0, 30.0))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            slide_windows(np.zeros(10), length=25)


class TestPipelineRoundTrip:
    def test_preprocess_postprocess_identity(self):
        series = make_rotation_corpus(num_series=3, duration_s=60.0, seed=0)
        tr_windows, transformer, deg_windows = preprocess_series(series)
        assert tr_windows.shape[1:] == (25, 3)
        back = postprocess(transform_windows(deg_windows, transformer),
                           transformer)
        # interior of the fit range round-trips; extreme knots clamp
        err = np.abs(back - deg_windows)
        assert np.quantile(err, 0.999) < 1e-5
        assert np.median(err) < 1e-7

    def test_yaw_rewrapped(self):
        series = make_rotation_corpus(num_series=3, duration_s=60.0, seed=1)
        tr_windows, transformer, _ = preprocess_series(series)
        out = postprocess(tr_windows, transformer)
        assert np.all(out[..., 0] >= -180.0)
        assert np.all(out[..., 0] < 180.0)

    def test_pitch_roll_within_fit_range(self):
        series = make_rotation_corpus(num_series=3, duration_s=60.0, seed=2)
        _, transformer, _ = preprocess_series(series)
        rng = np.random.default_rng(0)
        wild = rng.normal(0.0, 5.0, size=(50, 25, 3))
        out = postprocess(wild, transformer)
        for k, channel in ((1, "pitch"), (2, "roll")):
            lo, hi = transformer.fit_range(channel)
            assert np.all(out[..., k] >= lo - 1e-9)
            assert np.all(out[..., k] <= hi + 1e-9)


class TestRotationCorpus:
    def test_trimodal_yaw(self):
        from vrmotion.metrics import histogram_pdf
        series = make_rotation_corpus(num_series=6, duration_s=120.0, seed=0)
        yaw = np.concatenate([s.values["yaw"] for s in series])
        h = histogram_pdf(yaw, 10.0)
        masses = dict(zip(h.centers.tolist(), h.masses.tolist()))
        for mode in (-90.0, 0.0, 90.0):
            assert masses.get(mode, 0.0) > masses.get(mode - 30.0, 0.0)
            assert masses.get(mode, 0.0) > masses.get(mode + 30.0, 0.0)

    def test_energy_below_5hz(self):
        series = make_rotation_corpus(num_series=2, duration_s=60.0, seed=3)
        for s in series:
            for c in ("yaw", "pitch", "roll"):
                total = band_energy(s.values[c], s.rate, 0.0, 125.0)
                low = band_energy(s.values[c], s.rate, 0.0, 5.0)
                assert low > 0.9 * total

    def test_deterministic(self):
        a = make_rotation_corpus(num_series=2, duration_s=10.0, seed=7)
        b = make_rotation_corpus(num_series=2, duration_s=10.0, seed=7)
        for sa, sb in zip(a, b):
            for c in sa.values:
                assert np.array_equal(sa.values[c], sb.values[c])

    def test_csv_round_trip(self, tmp_path):
        s = make_rotation_corpus(num_series=1, duration_s=5.0, seed=0)[0]
        path = tmp_path / "rot.csv"
        save_rotation_csv(s, path)
        back = load_rotation_csv(path)
        assert back.rate == pytest.approx(250.0)
        for c in ("yaw", "pitch", "roll"):
            assert np.allclose(back.values[c], s.values[c], atol=1e-6)
