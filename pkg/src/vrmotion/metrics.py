"""Distribution metrics and the beam-coverage proxy.

Histograms use fixed-width buckets centered on multiples of the bucket
width (bucket k covers [k*w - w/2, k*w + w/2)), matching the 10-degree
bucketing used for angle distributions.  KL divergence is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import wrap_angle


@dataclass
class Histogram:
    bucket_width: float
    centers: np.ndarray  # ascending, multiples of bucket_width
    masses: np.ndarray  # probabilities, sum 1
    counts: np.ndarray  # raw sample counts

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        self.counts = np.asarray(self.counts)
        if abs(self.masses.sum() - 1.0) > 1e-9:
            raise ValueError("histogram masses must sum to 1")
        if np.any(self.masses < 0):
            raise ValueError("histogram masses must be non-negative")

    def to_dict(self):
        return {
            "bucket_width": self.bucket_width,
            "centers": self.centers.tolist(),
            "masses": self.masses.tolist(),
            "counts": self.counts.tolist(),
        }


def histogram_pdf(samples, bucket_width=10.0):
    """Bucketed PDF of a sample set; bucket k covers
    [k*w - w/2, k*w + w/2)."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("histogram_pdf needs at least one sample")
    if bucket_width <= 0:
        raise ValueError("bucket_width must be > 0")
    k = np.floor((samples + bucket_width / 2.0) / bucket_width).astype(int)
    kmin, kmax = int(k.min()), int(k.max())
    counts = np.bincount(k - kmin, minlength=kmax - kmin + 1)
    centers = np.arange(kmin, kmax + 1) * bucket_width
    return Histogram(bucket_width=bucket_width, centers=centers,
                     masses=counts / samples.size, counts=counts)


def align_histograms(p, q):
    """Re-grid two same-width histograms onto their union bucket range
    (zero mass where a histogram had no samples)."""
    if abs(p.bucket_width - q.bucket_width) > 1e-12:
        raise ValueError("bucket widths differ")
    w = p.bucket_width
    kp = np.round(p.centers / w).astype(int)
    kq = np.round(q.centers / w).astype(int)
    kmin = min(kp.min(), kq.min())
    kmax = max(kp.max(), kq.max())
    centers = np.arange(kmin, kmax + 1) * w

    def regrid(h, ks):
        masses = np.zeros(kmax - kmin + 1)
        counts = np.zeros(kmax - kmin + 1, dtype=h.counts.dtype)
        masses[ks - kmin] = h.masses
        counts[ks - kmin] = h.counts
        return Histogram(bucket_width=w, centers=centers, masses=masses,
                         counts=counts)

    return regrid(p, kp), regrid(q, kq)


def kl_divergence(p, q, eps=1e-9):
    """KL(p || q) in nats over a shared bucket grid; q is smoothed by eps
    and renormalized so empty buckets stay finite."""
    if abs(p.bucket_width - q.bucket_width) > 1e-12 or \
            p.centers.shape != q.centers.shape or \
            not np.allclose(p.centers, q.centers):
        raise ValueError("histograms are on different bucket grids")
    qs = q.masses + eps
    qs = qs / qs.sum()
    mask = p.masses > 0
    return float(np.sum(p.masses[mask] * np.log(p.masses[mask] / qs[mask])))


def beam_coverage(pred, true_pos, ap, beamwidth):
    """Misalignment between the access-point rays toward the predicted and
    the true position, and whether a beam of the given width covers it."""
    px, py = float(pred[0]) - float(ap[0]), float(pred[1]) - float(ap[1])
    tx, ty = float(true_pos[0]) - float(ap[0]), float(true_pos[1]) - float(ap[1])
    if tx == 0.0 and ty == 0.0:
        raise ValueError("true position coincides with the access point")
    ang_p = math.degrees(math.atan2(py, px))
    ang_t = math.degrees(math.atan2(ty, tx))
    mis = abs(wrap_angle(ang_p - ang_t))
    return {"covered": bool(mis <= beamwidth / 2.0), "misalignment": mis}
