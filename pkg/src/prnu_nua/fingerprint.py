"""Maximum-likelihood PRNU fingerprint estimation."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Depth, as_array, as_gray, prnf_bytes, parse_prnf
from .denoise import DenoiseConfig, residual
from .errors import DimensionError, PrnuError


@dataclass(frozen=True)
class Fingerprint:
    """Estimated multiplicative PRNU factor.

    :param k_hat: per-pixel estimate, same shape as the reference images
    :param source_count: number of reference images N
    :param postprocessed: True once row/column means were removed
    :param dark_pixels: entries left at 0 because every reference was 0 there
    """

    k_hat: np.ndarray
    source_count: int
    postprocessed: bool = False
    dark_pixels: int = 0
    depth: Depth = Depth.BITS8

    @property
    def shape(self) -> tuple[int, int]:
        return self.k_hat.shape

    def to_bytes(self) -> bytes:
        return prnf_bytes(self.k_hat, self.depth)

    @classmethod
    def from_bytes(cls, buf: bytes, source_count: int = 0) -> "Fingerprint":
        k, depth, _ = parse_prnf(buf)
        return cls(k, source_count, depth=depth)


class FingerprintAccumulator:
    """Running sums of W*I and I**2, so estimation can stream over images.

    Two accumulators over disjoint batches can be merged; the merged result
    equals a single pass up to floating point reassociation.
    """

    def __init__(self, shape: tuple[int, int] | None = None):
        self.numerator = None if shape is None else np.zeros(shape)
        self.denominator = None if shape is None else np.zeros(shape)
        self.count = 0
        self.depth = Depth.BITS8

    def _ensure(self, shape):
        if self.numerator is None:
            self.numerator = np.zeros(shape)
            self.denominator = np.zeros(shape)
        elif self.numerator.shape != tuple(shape):
            raise DimensionError(f"shape mismatch: accumulator {self.numerator.shape}, image {shape}")

    def add(self, w, img, denominator_img=None) -> None:
        """Add one residual ``w`` and its image. ``denominator_img`` defaults to ``img``."""
        w = as_array(w)
        i = as_array(img)
        d = i if denominator_img is None else as_array(denominator_img)
        if w.shape != i.shape or d.shape != i.shape:
            raise DimensionError(f"residual {w.shape} and image {i.shape} differ in shape")
        self._ensure(i.shape)
        self.numerator += w * i
        self.denominator += d * d
        self.count += 1

    def merge(self, other: "FingerprintAccumulator") -> "FingerprintAccumulator":
        out = FingerprintAccumulator()
        if self.numerator is None:
            src = [other]
        elif other.numerator is None:
            src = [self]
        else:
            if self.numerator.shape != other.numerator.shape:
                raise DimensionError("cannot merge accumulators of different shapes")
            src = [self, other]
        out.numerator = sum(a.numerator for a in src)
        out.denominator = sum(a.denominator for a in src)
        out.count = self.count + other.count
        out.depth = self.depth
        return out

    def finalize(self) -> Fingerprint:
        if self.count == 0:
            raise PrnuError("no images were accumulated")
        dark = self.denominator == 0
        n_dark = int(dark.sum())
        if n_dark:
            warnings.warn(f"{n_dark} pixels are zero in every reference image; fingerprint set to 0 there")
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(dark, 0.0, self.numerator / np.where(dark, 1.0, self.denominator))
        return Fingerprint(k, self.count, dark_pixels=n_dark, depth=self.depth)


def canonical_order(images: Sequence) -> list[int]:
    """Indices sorting images by a digest of their pixels, so results do not depend on input order."""
    keys = [hashlib.sha256(np.ascontiguousarray(as_array(im)).tobytes()).digest() for im in images]
    return sorted(range(len(images)), key=lambda i: keys[i])


def _check_shapes(images: Sequence) -> tuple[int, int]:
    if len(images) == 0:
        raise PrnuError("at least one reference image is required")
    shape = as_array(images[0]).shape
    for k, im in enumerate(images):
        if as_array(im).shape != shape:
            raise DimensionError(f"image {k} has shape {as_array(im).shape}, expected {shape}")
    return shape


def estimate_fingerprint(images: Sequence, cfg: DenoiseConfig = DenoiseConfig(), *, residuals: Sequence | None = None) -> Fingerprint:
    """K = sum(W_i * I_i) / sum(I_i ** 2), entrywise.

    :param images: reference images (GrayImage or arrays), all the same shape
    :param cfg: denoiser configuration used for the residuals
    :param residuals: precomputed residuals matching ``images``; computed when omitted
    """
    _check_shapes(images)
    if residuals is not None and len(residuals) != len(images):
        raise DimensionError("residuals and images differ in length")
    images = [as_gray(im) for im in images]
    acc = FingerprintAccumulator()
    acc.depth = images[0].depth
    for i in canonical_order(images):
        w = residual(images[i], cfg) if residuals is None else residuals[i]
        acc.add(w, images[i])
    return acc.finalize()


def postprocess_fingerprint(f: Fingerprint) -> Fingerprint:
    """Subtract row means, then column means, from the fingerprint."""
    k = f.k_hat - f.k_hat.mean(axis=1, keepdims=True)
    k = k - k.mean(axis=0, keepdims=True)
    return Fingerprint(k, f.source_count, postprocessed=True, dark_pixels=f.dark_pixels, depth=f.depth)
