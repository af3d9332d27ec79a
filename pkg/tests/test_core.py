"""Angle arithmetic, the TimeSeries container, and seeded random streams."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vrmotion.core import (TimeSeries, heading_unit, rewrap_series, stream_rng,
                           unwrap_series, wrap_angle)


class TestWrapAngle:
    def test_identity_inside_range(self):
        assert wrap_angle(0.0) == 0.0
        assert wrap_angle(-180.0) == -180.0
        assert wrap_angle(179.5) == 179.5

    def test_wraps_half_open(self):
        assert wrap_angle(180.0) == -180.0
        assert wrap_angle(360.0) == 0.0
        assert wrap_angle(-181.0) == 179.0
        assert wrap_angle(541.0) == pytest.approx(-179.0)

    def test_array_input(self):
        out = wrap_angle([0.0, 190.0, -190.0])
        assert np.allclose(out, [0.0, -170.0, 170.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            wrap_angle(np.nan)
        with pytest.raises(ValueError):
            wrap_angle([0.0, np.inf])

    @given(st.floats(-1e6, 1e6))
    def test_congruent_mod_360(self, a):
        w = wrap_angle(a)
        assert -180.0 <= w < 180.0
        assert abs((a - w) % 360.0) < 1e-6 or abs((a - w) % 360.0 - 360.0) < 1e-6


class TestUnwrapSeries:
    def test_empty(self):
        assert unwrap_series([]).size == 0

    def test_removes_discontinuity(self):
        s = wrap_angle(np.array([170.0, 185.0, 200.0]))
        u = unwrap_series(s)
        assert np.allclose(u, [170.0, 185.0, 200.0])
        assert np.all(np.abs(np.diff(u)) <= 180.0)

    def test_first_element_unchanged(self):
        s = np.array([-90.0, 90.0, -90.0])
        assert unwrap_series(s)[0] == -90.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            unwrap_series([180.0])
        with pytest.raises(ValueError):
            unwrap_series([-181.0])

    @given(st.lists(st.floats(-180.0, 179.999), min_size=1, max_size=50))
    def test_rewrap_round_trip(self, s):
        u = unwrap_series(np.asarray(s))
        back = rewrap_series(u)
        assert np.allclose(back, s, atol=1e-9)

    @given(st.lists(st.floats(-180.0, 179.999), min_size=2, max_size=50))
    def test_no_large_consecutive_difference(self, s):
        u = unwrap_series(np.asarray(s))
        assert np.all(np.abs(np.diff(u)) <= 180.0 + 1e-9)


class TestHeadingUnit:
    def test_cardinal_directions(self):
        assert np.allclose(heading_unit(0.0), (1.0, 0.0))
        assert np.allclose(heading_unit(90.0), (0.0, 1.0), atol=1e-15)
        assert np.allclose(heading_unit(180.0), (-1.0, 0.0), atol=1e-15)


class TestTimeSeries:
    def test_basic_properties(self):
        ts = TimeSeries(rate=10.0, values={"a": np.arange(5.0)})
        assert ts.n_samples == 5
        assert ts.duration == 0.5
        assert np.allclose(ts.times(), [0.0, 0.1, 0.2, 0.3, 0.4])

    def test_rejects_unequal_lengths(self):
        with pytest.raises(ValueError):
            TimeSeries(rate=10.0, values={"a": np.arange(5.0), "b": np.arange(4.0)})

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            TimeSeries(rate=0.0, values={})


class TestStreamRng:
    def test_deterministic(self):
        a = stream_rng(7, "x").standard_normal(4)
        b = stream_rng(7, "x").standard_normal(4)
        assert np.array_equal(a, b)

    def test_labels_independent(self):
        a = stream_rng(7, "x").standard_normal(4)
        b = stream_rng(7, "y").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_seeds_independent(self):
        a = stream_rng(1, "x").standard_normal(4)
        b = stream_rng(2, "x").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_rejects_bad_seed(self):
        with pytest.raises(ValueError):
            stream_rng(-1)
        with pytest.raises(ValueError):
            stream_rng(2 ** 64)
