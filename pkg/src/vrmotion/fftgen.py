"""FFT power-spectral-density resynthesis baseline.

Each input rotation series is converted to a per-channel power spectrum;
the model keeps per-bin mean and std across the inputs.  Generation samples
a perturbed power spectrum (Gaussian per bin, clamped at zero), attaches
uniform random phases with Hermitian symmetry (DC and Nyquist stay real),
and inverse-transforms to a real series of the requested length.  Yaw is
rewrapped to [-180, 180) on output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import TimeSeries, stream_rng, unwrap_series, wrap_angle
from .preprocess import CHANNELS

DEFAULT_LENGTH = 30_000


@dataclass
class PsdModel:
    rate: float
    fit_length: int
    freqs: np.ndarray  # (K,)
    mean: dict  # channel -> (K,) mean |rfft|^2
    std: dict  # channel -> (K,) std of |rfft|^2

    def to_dict(self):
        return {
            "format_version": 1,
            "rate": self.rate,
            "fit_length": self.fit_length,
            "freqs": self.freqs.tolist(),
            "mean": {c: v.tolist() for c, v in self.mean.items()},
            "std": {c: v.tolist() for c, v in self.std.items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != 1:
            raise ValueError("unsupported PSD model format version")
        return cls(rate=d["rate"], fit_length=d["fit_length"],
                   freqs=np.asarray(d["freqs"]),
                   mean={c: np.asarray(v) for c, v in d["mean"].items()},
                   std={c: np.asarray(v) for c, v in d["std"].items()})


def fft_baseline_fit(series_list):
    """Fit per-channel per-bin mean/std of the power spectrum over a list of
    rotation TimeSeries.  Series are trimmed to the shortest length.  A
    single series degenerates to zero std (mean-PSD resynthesis) with a
    warning.  Yaw is unwrapped before the transform."""
    if not series_list:
        raise ValueError("fft_baseline_fit needs at least one series")
    if len(series_list) == 1:
        warnings.warn("single input series: PSD std is zero, generation "
                      "degenerates to mean-PSD resynthesis")
    rate = series_list[0].rate
    n = min(s.n_samples for s in series_list)
    mean, std = {}, {}
    for c in CHANNELS:
        powers = []
        for s in series_list:
            if abs(s.rate - rate) > 1e-9:
                raise ValueError("all series must share one sample rate")
            x = np.asarray(s.values[c], dtype=float)[:n]
            if c == "yaw":
                x = unwrap_series(wrap_angle(x))
            spec = np.fft.rfft(x)
            powers.append(np.abs(spec) ** 2)
        powers = np.stack(powers)
        mean[c] = powers.mean(axis=0)
        std[c] = powers.std(axis=0)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    return PsdModel(rate=rate, fit_length=n, freqs=freqs, mean=mean, std=std)


def fft_baseline_generate(model, length=DEFAULT_LENGTH, seed=0):
    """Generate one synthetic rotation TimeSeries of the requested length.

    Per-bin power ~ Normal(mean, std) clamped at zero; phases uniform with
    Hermitian symmetry.  When the requested length differs from the fit
    length, the per-bin statistics are interpolated onto the new frequency
    grid and rescaled (|rfft|^2 scales linearly with the series length for a
    fixed spectral density)."""
    rng = stream_rng(seed, "fft-baseline")
    k_out = length // 2 + 1
    f_out = np.fft.rfftfreq(length, d=1.0 / model.rate)
    scale = length / model.fit_length
    values = {}
    for c in CHANNELS:
        if length == model.fit_length:
            mean, std = model.mean[c], model.std[c]
        else:
            mean = np.interp(f_out, model.freqs, model.mean[c]) * scale
            std = np.interp(f_out, model.freqs, model.std[c]) * scale
        power = np.clip(rng.normal(mean, std), 0.0, None)
        mag = np.sqrt(power)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=k_out)
        phase[0] = 0.0  # DC carries zero phase
        if length % 2 == 0:
            phase[-1] = 0.0  # Nyquist bin must stay real
        x = np.fft.irfft(mag * np.exp(1j * phase), n=length)
        values[c] = x
    values["yaw"] = wrap_angle(values["yaw"])
    return TimeSeries(rate=model.rate, values=values)
