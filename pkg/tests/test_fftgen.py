"""PSD-resynthesis baseline generator."""

import numpy as np
import pytest

from vrmotion.core import TimeSeries, stream_rng
from vrmotion.fftgen import PsdModel, fft_baseline_fit, fft_baseline_generate


def noise_series(seed, n=2000, rate=10.0):
    rng = stream_rng(seed, "fft-test")
    t = np.arange(n) / rate
    x = (np.sin(2 * np.pi * 0.5 * t) + 0.5 * np.sin(2 * np.pi * 1.5 * t)
         + 0.2 * rng.standard_normal(n))
    return TimeSeries(rate=rate, values={"yaw": x, "pitch": 0.5 * x,
                                         "roll": 0.1 * x})


class TestFit:
    def test_model_stats_nonnegative(self):
        model = fft_baseline_fit([noise_series(i) for i in range(4)])
        for c in ("yaw", "pitch", "roll"):
            assert np.all(model.mean[c] >= 0)
            assert np.all(model.std[c] >= 0)

    def test_single_series_warns(self):
        with pytest.warns(UserWarning):
            model = fft_baseline_fit([noise_series(0)])
        assert all(np.all(model.std[c] == 0) for c in model.std)

    def test_serialization_round_trip(self):
        model = fft_baseline_fit([noise_series(i) for i in range(3)])
        clone = PsdModel.from_dict(model.to_dict())
        a = fft_baseline_generate(model, length=500, seed=3)
        b = fft_baseline_generate(clone, length=500, seed=3)
        for c in a.values:
            assert np.array_equal(a.values[c], b.values[c])


class TestGenerate:
    def test_default_length_30000(self):
        model = fft_baseline_fit([noise_series(i) for i in range(2)])
        out = fft_baseline_generate(model, seed=0)
        assert out.n_samples == 30_000

    def test_real_output_and_determinism(self):
        model = fft_baseline_fit([noise_series(i) for i in range(2)])
        a = fft_baseline_generate(model, length=1000, seed=1)
        b = fft_baseline_generate(model, length=1000, seed=1)
        for c in a.values:
            assert np.isrealobj(a.values[c])
            assert np.array_equal(a.values[c], b.values[c])

    def test_constant_series_resynthesis(self):
        s = TimeSeries(rate=10.0, values={"yaw": np.full(1000, 4.2),
                                          "pitch": np.full(1000, -1.0),
                                          "roll": np.zeros(1000)})
        with pytest.warns(UserWarning):
            model = fft_baseline_fit([s])
        out = fft_baseline_generate(model, length=1000, seed=0)
        # all energy sits in the zero-frequency bin, which carries zero
        # phase, so the output is constant; the DC sign is not recoverable
        # from a power spectrum
        assert np.allclose(out.values["yaw"], 4.2, atol=1e-9)
        assert np.allclose(np.abs(out.values["pitch"]), 1.0, atol=1e-9)
        assert np.ptp(out.values["pitch"]) < 1e-9

    def test_mean_psd_matches_model(self):
        model = fft_baseline_fit([noise_series(i) for i in range(6)])
        n = 2000
        acc = np.zeros(n // 2 + 1)
        runs = 100
        for s in range(runs):
            out = fft_baseline_generate(model, length=n, seed=s)
            acc += np.abs(np.fft.rfft(out.values["yaw"])) ** 2
        acc /= runs
        mean = model.mean["yaw"]
        strong = mean > 0.05 * mean.max()
        ratio = acc[strong] / mean[strong]
        assert np.all(ratio > 0.75)
        assert np.all(ratio < 1.25)
