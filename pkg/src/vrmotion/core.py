"""Angle arithmetic, time-series container, and deterministic random streams.

All angles are kept in degrees; radians appear only transiently inside
trigonometric calls.  The canonical wrapped interval is the half-open
[-180, 180) so every real angle has a unique wrapped representative.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a):
    """Wrap an angle (or array of angles) in degrees to [-180, 180).

    Raises ValueError on non-finite input.
    """
    if isinstance(a, float) or isinstance(a, int):
        # scalar fast path: the simulator wraps headings every tick
        if not math.isfinite(a):
            raise ValueError("wrap_angle: non-finite angle")
        return (a + 180.0) % 360.0 - 180.0
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap_angle: non-finite angle")
    out = (arr + 180.0) % 360.0 - 180.0
    if out.ndim == 0:
        return float(out)
    return out


def unwrap_series(s):
    """Remove +/-180 degree discontinuities from a wrapped angle sequence.

    Every element of the input must already lie in [-180, 180).  The output
    is congruent to the input mod 360 per element, the first element is
    unchanged, and no consecutive difference exceeds 180 degrees in
    magnitude.  An empty sequence unwraps to an empty sequence.
    """
    arr = np.asarray(s, dtype=float)
    if arr.size == 0:
        return arr.copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError("unwrap_series: non-finite angle")
    if np.any(arr < -180.0) or np.any(arr >= 180.0):
        raise ValueError("unwrap_series: input outside [-180, 180)")
    return np.unwrap(arr, period=360.0)


def rewrap_series(s):
    """Wrap every element of an angle sequence back to [-180, 180).

    Inverse of unwrap_series on wrapped inputs.
    """
    arr = np.asarray(s, dtype=float)
    if arr.size == 0:
        return arr.copy()
    return (arr + 180.0) % 360.0 - 180.0


def heading_unit(deg):
    """Unit vector (x, y) for a heading in degrees (0 = +x, CCW positive)."""
    r = np.deg2rad(deg)
    return np.cos(r), np.sin(r)


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel series.

    values maps channel name -> 1-D float64 array; all channels must have
    equal length and the rate must be strictly positive.
    """

    rate: float
    values: dict = field(default_factory=dict)
    start_time: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("TimeSeries rate must be > 0")
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        lengths = {v.shape[0] for v in self.values.values()}
        if len(lengths) > 1:
            raise ValueError("TimeSeries channels must have equal length")

    @property
    def channels(self):
        return list(self.values.keys())

    @property
    def n_samples(self):
        if not self.values:
            return 0
        return next(iter(self.values.values())).shape[0]

    @property
    def duration(self):
        return self.n_samples / self.rate

    def times(self):
        return self.start_time + np.arange(self.n_samples) / self.rate


def stream_rng(seed, *labels):
    """Deterministic, independent random stream for a (seed, labels) pair.

    Every stochastic operation in the package takes an explicit 64-bit seed;
    named sub-streams are derived here so consumption in one stage never
    perturbs another.
    """
    seed = int(seed)
    if seed < 0 or seed > 2**64 - 1:
        raise ValueError("seed must be an unsigned 64-bit integer")
    key = tuple(zlib.crc32(str(lab).encode("utf-8")) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
