"""Diagnosis of periodic artifacts in noise residuals."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import as_array, tile_average
from .errors import DegenerateInputError, InsufficientSizeError

PERIODICITY_THRESHOLD = 5.0


@dataclass(frozen=True)
class PeriodicityReport:
    period: int
    grid_energy_ratio: float
    n_grid_peaks_detected: int
    decision: bool
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def autocorrelation(res) -> np.ndarray:
    """Circular autocorrelation of the mean-removed residual, normalized to 1 at lag (0, 0)."""
    x = as_array(res)
    x = x - x.mean()
    f = np.fft.fft2(x)
    ac = np.fft.ifft2(f * np.conj(f)).real
    if ac[0, 0] <= 0:
        raise DegenerateInputError("autocorrelation of a constant residual is undefined")
    return ac / ac[0, 0]


def _cyclic_offsets(size: int, center: int, radius: int) -> np.ndarray:
    return (center + np.arange(-radius, radius + 1)) % size


def grid_peak_score(ac: np.ndarray, p: int, exclusion: int = 4, threshold: float = PERIODICITY_THRESHOLD) -> PeriodicityReport:
    """Score how strongly an autocorrelation surface peaks on the lattice of multiples of ``p``.

    Each lattice lag other than the origin is read as the largest |ac| within
    +-1 lag. The score is the mean of those values over the RMS of |ac| at
    all other lags, excluding the lattice neighborhoods and lags within
    ``exclusion`` of the origin.

    An individual lattice lag counts as detected when it exceeds
    ``threshold`` times the background RMS.
    """
    a = np.abs(np.asarray(ac, dtype=np.float64))
    m, n = a.shape
    if p < 1 or 2 * p > min(m, n):
        raise InsufficientSizeError(f"period {p} needs at least {2 * p} samples per axis, got {a.shape}")
    rows = np.arange(0, m, p)
    cols = np.arange(0, n, p)
    lattice = [(r, c) for r in rows for c in cols if (r, c) != (0, 0)]
    if len(lattice) < 3:
        raise InsufficientSizeError(f"only {len(lattice)} lattice lags available")

    background = np.ones(a.shape, dtype=bool)
    peaks = []
    for r, c in lattice + [(0, 0)]:
        ix = np.ix_(_cyclic_offsets(m, r, 1), _cyclic_offsets(n, c, 1))
        if (r, c) != (0, 0):
            peaks.append(a[ix].max())
        background[ix] = False
    dr = np.minimum(np.arange(m), m - np.arange(m))
    dc = np.minimum(np.arange(n), n - np.arange(n))
    background &= (dr[:, None] ** 2 + dc[None, :] ** 2) > exclusion ** 2

    rms = float(np.sqrt(np.mean(a[background] ** 2)))
    peaks = np.array(peaks)
    ratio = float(peaks.mean() / rms) if rms > 0 else float("inf")
    detected = int(np.sum(peaks > threshold * rms))
    return PeriodicityReport(int(p), ratio, detected, ratio > threshold, float(threshold))


def average_patch_view(res, p: int) -> np.ndarray:
    """Average non-overlapping p x p patch of a residual, for visual inspection."""
    return tile_average(res, p)
