"""Bucketed histograms, KL divergence, and the beam-coverage proxy."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vrmotion.metrics import (Histogram, align_histograms, beam_coverage,
                              histogram_pdf, kl_divergence)


def brute_force_kl(p_masses, q_masses, eps=1e-9):
    """Independent plain-Python oracle for KL(p || q) in nats."""
    qs = [q + eps for q in q_masses]
    total = sum(qs)
    qs = [q / total for q in qs]
    out = 0.0
    for p, q in zip(p_masses, qs):
        if p > 0:
            out += p * math.log(p / q)
    return out


class TestHistogramPdf:
    def test_all_zero_samples(self):
        h = histogram_pdf([0.0, 0.0, 0.0])
        assert h.centers.tolist() == [0.0]
        assert h.masses.tolist() == [1.0]

    def test_bucket_edges(self):
        # bucket k covers [10k - 5, 10k + 5): 4.9 -> 0, 5.0 -> 10, -5.0 -> 0
        h = histogram_pdf([4.9, 5.0, -5.0])
        assert h.centers.tolist() == [0.0, 10.0]
        assert h.counts.tolist() == [2, 1]

    def test_masses_sum_to_one(self):
        rng = np.random.default_rng(0)
        h = histogram_pdf(rng.normal(0, 50, 1000))
        assert abs(h.masses.sum() - 1.0) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            histogram_pdf([])

    def test_bad_width_rejected(self):
        with pytest.raises(ValueError):
            histogram_pdf([1.0], bucket_width=0.0)

    @given(st.lists(st.floats(-500, 500), min_size=1, max_size=200),
           st.sampled_from([1.0, 5.0, 10.0]))
    def test_counts_conserved(self, samples, width):
        h = histogram_pdf(samples, bucket_width=width)
        assert int(h.counts.sum()) == len(samples)
        assert abs(h.masses.sum() - 1.0) < 1e-9


class TestKlDivergence:
    def _hist(self, masses, width=10.0):
        masses = np.asarray(masses, dtype=float)
        centers = np.arange(masses.size) * width
        counts = (masses * 1000).astype(int)
        return Histogram(bucket_width=width, centers=centers, masses=masses,
                         counts=counts)

    def test_identical_is_zero(self):
        p = self._hist([0.25, 0.75])
        assert kl_divergence(p, p) < 1e-7

    def test_hand_example(self):
        p = self._hist([0.5, 0.5])
        q = self._hist([0.25, 0.75])
        expected = 0.5 * math.log(2) + 0.5 * math.log(2.0 / 3.0)
        assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-6)
        assert kl_divergence(p, q) == pytest.approx(0.14384, abs=1e-4)

    def test_grid_mismatch_rejected(self):
        p = self._hist([0.5, 0.5])
        q = self._hist([0.5, 0.5], width=5.0)
        with pytest.raises(ValueError):
            kl_divergence(p, q)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = rng.integers(2, 30)
            pm = rng.random(n)
            pm /= pm.sum()
            qm = rng.random(n)
            qm /= qm.sum()
            p = self._hist(pm)
            q = self._hist(qm)
            assert kl_divergence(p, q) == pytest.approx(
                brute_force_kl(pm, qm), abs=1e-12)

    def test_empty_q_bucket_stays_finite(self):
        p = self._hist([0.5, 0.5])
        q = self._hist([1.0, 0.0])
        assert np.isfinite(kl_divergence(p, q))


class TestAlignHistograms:
    def test_union_grid(self):
        p = histogram_pdf([0.0, 10.0])
        q = histogram_pdf([20.0, 30.0])
        pa, qa = align_histograms(p, q)
        assert pa.centers.tolist() == [0.0, 10.0, 20.0, 30.0]
        assert qa.centers.tolist() == [0.0, 10.0, 20.0, 30.0]
        assert pa.masses.tolist() == [0.5, 0.5, 0.0, 0.0]
        assert qa.masses.tolist() == [0.0, 0.0, 0.5, 0.5]

    def test_counts_preserved(self):
        p = histogram_pdf([0.0, 10.0, 10.0])
        q = histogram_pdf([-40.0])
        pa, qa = align_histograms(p, q)
        assert int(pa.counts.sum()) == 3
        assert int(qa.counts.sum()) == 1


class TestBeamCoverage:
    def test_exact_prediction(self):
        out = beam_coverage((3.0, 4.0), (3.0, 4.0), (0.0, 0.0), 1.0)
        assert out["misalignment"] == 0.0
        assert out["covered"]

    def test_perpendicular(self):
        out = beam_coverage((1.0, 0.0), (0.0, 1.0), (0.0, 0.0), 20.0)
        assert out["misalignment"] == pytest.approx(90.0)
        assert not out["covered"]

    def test_small_offset_example(self):
        mis = beam_coverage((1.0, 0.0), (1.0, 0.1), (0.0, 0.0), 11.42)
        assert mis["misalignment"] == pytest.approx(math.degrees(math.atan2(0.1, 1.0)))
        assert mis["misalignment"] == pytest.approx(5.71, abs=0.01)
        assert beam_coverage((1.0, 0.0), (1.0, 0.1), (0.0, 0.0), 11.43)["covered"]
        assert not beam_coverage((1.0, 0.0), (1.0, 0.1), (0.0, 0.0), 11.41)["covered"]

    def test_true_position_at_ap_rejected(self):
        with pytest.raises(ValueError):
            beam_coverage((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), 20.0)
