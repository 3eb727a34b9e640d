"""Normalized cross-correlation over cyclic shifts and the PCE decision statistic."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import ImageLike, as_array, as_gray
from .denoise import DenoiseConfig, residual
from .errors import DegenerateInputError, DimensionError
from .fingerprint import Fingerprint

PCE_THRESHOLD = 60.0
NEIGHBORHOOD = (2, 2)


@dataclass(frozen=True)
class PceReport:
    pce: float
    peak_shift: tuple[int, int]
    peak_ncc: float
    threshold: float
    matched: bool
    neighborhood: tuple[int, int]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["peak_shift"] = list(self.peak_shift)
        d["neighborhood"] = list(self.neighborhood)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def ncc_surface(test_residual, signal) -> np.ndarray:
    """NCC(s1, s2) between the residual cyclically shifted by (s1, s2) and ``signal``.

    Entry [s1, s2] correlates ``W[i + s1, j + s2]`` with ``S[i, j]``. Both inputs
    are mean-subtracted first. Computed with FFTs.
    """
    w = as_array(test_residual)
    s = as_array(signal)
    if w.shape != s.shape:
        raise DimensionError(f"residual {w.shape} and signal {s.shape} differ in shape")
    w = w - w.mean()
    s = s - s.mean()
    norm = np.linalg.norm(w) * np.linalg.norm(s)
    if norm == 0:
        raise DegenerateInputError("NCC of a zero-norm input is undefined")
    cc = np.fft.ifft2(np.fft.fft2(w) * np.conj(np.fft.fft2(s))).real
    return cc / norm


def pce(surface: np.ndarray, neighborhood: tuple[int, int] = NEIGHBORHOOD, threshold: float = PCE_THRESHOLD) -> PceReport:
    """Peak-to-correlation-energy of an NCC surface.

    The excluded neighborhood is the h x w block of shifts starting at the
    peak and extending forward (cyclically) along both axes.
    """
    cc = np.asarray(surface, dtype=np.float64)
    if cc.ndim != 2 or cc.size == 0:
        raise DimensionError(f"expected a non-empty 2-D surface, got shape {cc.shape}")
    m, n = cc.shape
    h, w = neighborhood
    if h < 1 or w < 1 or h > m or w > n or h * w >= m * n:
        raise DimensionError(f"neighborhood {neighborhood} does not fit surface {cc.shape}")
    r, c = np.unravel_index(int(np.argmax(cc)), cc.shape)
    peak = cc[r, c]
    mask = np.ones(cc.shape, dtype=bool)
    mask[np.ix_((r + np.arange(h)) % m, (c + np.arange(w)) % n)] = False
    energy = np.sum(cc[mask] ** 2) / (m * n - h * w)
    if energy == 0:
        raise DegenerateInputError("correlation energy outside the peak neighborhood is zero")
    value = float(peak ** 2 / energy)
    return PceReport(
        pce=value,
        peak_shift=(int(r), int(c)),
        peak_ncc=float(peak),
        threshold=float(threshold),
        matched=value > threshold,
        neighborhood=(int(h), int(w)),
    )


def attribute(
    test_img: ImageLike,
    f: Fingerprint,
    cfg: DenoiseConfig = DenoiseConfig(),
    threshold: float = PCE_THRESHOLD,
    neighborhood: tuple[int, int] = NEIGHBORHOOD,
    *,
    test_residual=None,
) -> PceReport:
    """Decide whether ``test_img`` was taken by the sensor behind ``f``.

    The residual of the test image is correlated with K * I_test. A
    precomputed ``test_residual`` may be passed to avoid re-denoising.
    """
    img = as_gray(test_img)
    if img.shape != f.shape:
        raise DimensionError(f"test image {img.shape} and fingerprint {f.shape} differ in shape")
    w = residual(img, cfg) if test_residual is None else test_residual
    cc = ncc_surface(w, f.k_hat * img.data)
    return pce(cc, neighborhood, threshold)
