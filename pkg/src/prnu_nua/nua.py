"""Estimation and cancellation of non-unique artifacts.

Two periodic artifacts are handled: 8x8 JPEG dimples and the 128x128
dither watermark. Cancellation is available in the residual domain and in
the pixel domain; both feed the ML fingerprint estimator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .core import (
    GrayImage,
    ImageLike,
    Residual,
    as_array,
    as_gray,
    blocks,
    parse_prnf,
    prnf_bytes,
    save_png8,
    subtract_tiled,
    tile_average,
    tile_sum,
)
from .denoise import DenoiseConfig, residual
from .errors import DegenerateInputError, DimensionError, FormatError, StateError
from .fingerprint import Fingerprint, FingerprintAccumulator, _check_shapes, canonical_order, estimate_fingerprint

DIMPLE_SIZE = 8
WATERMARK_SIZE = 128
# a watermark tile with L2 norm below this many units per entry counts as absent
NORM_FLOOR_PER_ENTRY = 1e-6

PRNW_MAGIC = b"PRNW"


@dataclass
class WatermarkEstimate:
    """Average watermark tile and the clipped projection strength of every patch seen."""

    average: np.ndarray
    per_patch_strength: list[float] = field(default_factory=list)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.average))

    @property
    def present(self) -> bool:
        return watermark_present(self.average)

    def to_bytes(self) -> bytes:
        s = np.asarray(self.per_patch_strength, dtype="<f8")
        return PRNW_MAGIC + prnf_bytes(self.average) + struct.pack("<I", s.size) + s.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "WatermarkEstimate":
        if buf[:4] != PRNW_MAGIC:
            raise FormatError(f"bad magic {buf[:4]!r}")
        tile, _, off = parse_prnf(buf, 4)
        if len(buf) < off + 4:
            raise FormatError("truncated strength count")
        (count,) = struct.unpack_from("<I", buf, off)
        if len(buf) < off + 4 + 8 * count:
            raise FormatError("truncated strength list")
        strengths = np.frombuffer(buf, dtype="<f8", count=count, offset=off + 4)
        return cls(tile, [float(v) for v in strengths])

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "WatermarkEstimate":
        return cls.from_bytes(Path(path).read_bytes())


def watermark_present(w_hat: np.ndarray) -> bool:
    w_hat = np.asarray(w_hat)
    return bool(np.linalg.norm(w_hat) >= NORM_FLOOR_PER_ENTRY * w_hat.size)


# --- dimples ----------------------------------------------------------------


def estimate_dimples(img: ImageLike) -> np.ndarray:
    """Mean 8x8 patch of the image with its own mean removed.

    Removing the tile mean keeps the image's DC level when the tile is
    subtracted; only the periodic bias remains.
    """
    d = tile_average(img, DIMPLE_SIZE)
    return d - d.mean()


def remove_dimples(img: ImageLike) -> GrayImage:
    """Dimple-free image: the zero-mean dimple estimate subtracted from every 8x8 patch."""
    img = as_gray(img)
    return subtract_tiled(img, estimate_dimples(img))


def dimple_free_residual(img: ImageLike, cfg: DenoiseConfig = DenoiseConfig()) -> Residual:
    return residual(remove_dimples(img), cfg, dimple_free=True)


# --- watermark --------------------------------------------------------------


def estimate_average_watermark(res, p: int = WATERMARK_SIZE) -> np.ndarray:
    """Average p x p patch over one residual or a collection of residuals from one source.

    Patches from all residuals are pooled: the sum of all patch sums divided
    by the total patch count.
    """
    items = [res] if isinstance(res, Residual) else list(res)
    if not items:
        raise StateError("no residuals given")
    for r in items:
        if not isinstance(r, Residual) or not r.dimple_free:
            raise StateError("watermark estimation needs dimple-free residuals")
    return _pooled_tile(items, p)


def _pooled_tile(items, p: int) -> np.ndarray:
    total, count = None, 0
    for r in items:
        s, c = tile_sum(r, p)
        total = s if total is None else total + s
        count += c
    return total / count


def patch_strengths(x, w_hat: np.ndarray) -> np.ndarray:
    """Clipped projection coefficient of every complete patch of ``x`` onto ``w_hat``.

    :return: (rows, cols) array of max(0, <patch, w> / |w|^2)
    """
    w_hat = np.asarray(w_hat, dtype=np.float64)
    energy = float(np.sum(w_hat * w_hat))
    if energy == 0:
        raise DegenerateInputError("projection onto a zero watermark is undefined")
    b = blocks(as_array(x), w_hat.shape[0])
    return np.maximum(0.0, np.einsum("rcij,ij->rc", b, w_hat) / energy)


def clipped_projection(x, w_hat: np.ndarray) -> float:
    """max(0, <x, w> / |w|^2) for a single patch ``x`` shaped like ``w_hat``."""
    x = as_array(x)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if x.shape != w_hat.shape:
        raise DimensionError(f"patch {x.shape} and watermark {w_hat.shape} differ in shape")
    return float(patch_strengths(x, w_hat)[0, 0])


def _subtract_projected(x: np.ndarray, w_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    strengths = patch_strengths(x, w_hat)
    out = np.array(x, dtype=np.float64, copy=True)
    blocks(out, w_hat.shape[0])[...] -= strengths[:, :, None, None] * w_hat
    return out, strengths


def cancel_watermark_in_residual(res: Residual, w_hat: np.ndarray, estimate: WatermarkEstimate | None = None) -> Residual:
    """Remove the clipped projection onto ``w_hat`` from every 128x128 residual patch.

    Margins outside complete patches are left untouched. When ``estimate`` is
    given, the per-patch strengths are appended to it.
    """
    if not res.dimple_free:
        raise StateError("watermark cancellation needs a dimple-free residual")
    out, strengths = _subtract_projected(res.data, w_hat)
    if estimate is not None:
        estimate.per_patch_strength.extend(strengths.ravel().tolist())
    return Residual(out, dimple_free=True, watermark_free=True)


def clean_image(img: ImageLike, w_hat: np.ndarray, estimate: WatermarkEstimate | None = None) -> GrayImage:
    """Dimple-free, watermark-free image.

    Dimples are removed first; then each 128x128 patch of the dimple-free
    image loses its clipped projection onto ``w_hat``.
    """
    img = as_gray(img)
    if min(img.shape) < WATERMARK_SIZE:
        raise DimensionError(f"image {img.shape} smaller than a watermark tile")
    if not watermark_present(w_hat):
        raise DegenerateInputError("watermark estimate is below the norm floor; nothing to remove")
    dfree = remove_dimples(img)
    out, strengths = _subtract_projected(dfree.data, np.asarray(w_hat, dtype=np.float64))
    if estimate is not None:
        estimate.per_patch_strength.extend(strengths.ravel().tolist())
    return dfree.replace(out)


# --- fingerprints with cancellation -----------------------------------------


@dataclass
class SourceModel:
    """Everything estimated from one source's reference set."""

    fingerprint: Fingerprint
    watermark: WatermarkEstimate
    dimple_norm: float
    mode: str

    def report(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.fingerprint.source_count,
            "shape": list(self.fingerprint.shape),
            "w_hat_norm": self.watermark.norm,
            "watermark_present": self.watermark.present,
            "d_hat_norm": self.dimple_norm,
            "dark_pixels": self.fingerprint.dark_pixels,
        }


def fit_source(images: Sequence, cfg: DenoiseConfig = DenoiseConfig(), mode: str = "residual_cancel") -> SourceModel:
    """Estimate dimples, average watermark and fingerprint for one source.

    :param mode: ``plain``, ``residual_cancel`` or ``spatial_cancel``
    """
    if mode not in ("plain", "residual_cancel", "spatial_cancel"):
        raise ValueError(f"unknown mode {mode!r}")
    shape = _check_shapes(images)
    images = [as_gray(im) for im in images]
    order = canonical_order(images)
    images = [images[i] for i in order]

    dimple_norm = float(np.sqrt(np.mean([np.sum(estimate_dimples(im) ** 2) for im in images])))
    if mode == "plain":
        plain_res = [residual(im, cfg) for im in images]
        # diagnostic only: the plain estimator does not use it
        if min(shape) >= WATERMARK_SIZE:
            w_hat = _pooled_tile(plain_res, WATERMARK_SIZE)
        else:
            w_hat = np.zeros((WATERMARK_SIZE, WATERMARK_SIZE))
        fp = estimate_fingerprint(images, cfg, residuals=plain_res)
        return SourceModel(fp, WatermarkEstimate(w_hat), dimple_norm, mode)

    if min(shape) < WATERMARK_SIZE:
        raise DimensionError(f"images {shape} smaller than a watermark tile")
    dfree = [remove_dimples(im) for im in images]
    res = [residual(im, cfg, dimple_free=True) for im in dfree]
    w_hat = estimate_average_watermark(res)
    est = WatermarkEstimate(w_hat)
    if not watermark_present(w_hat):
        return SourceModel(estimate_fingerprint(images, cfg), est, dimple_norm, mode)

    acc = FingerprintAccumulator()
    acc.depth = images[0].depth
    if mode == "residual_cancel":
        for im, r in zip(images, res):
            acc.add(cancel_watermark_in_residual(r, w_hat, est), im)
    else:
        for im in images:
            cleaned = clean_image(im, w_hat, est)
            acc.add(residual(cleaned, cfg), cleaned)
    return SourceModel(acc.finalize(), est, dimple_norm, mode)


def estimate_fingerprint_residual_cancel(images: Sequence, cfg: DenoiseConfig = DenoiseConfig()) -> Fingerprint:
    """K = sum((W_i - w_i) * I_i) / sum(I_i ** 2), with W_i the dimple-free residual
    and w_i its per-patch clipped projection onto the pooled average watermark.

    Falls back to the plain estimate when no watermark is detected.
    """
    return fit_source(images, cfg, "residual_cancel").fingerprint


def estimate_fingerprint_spatial_cancel(images: Sequence, cfg: DenoiseConfig = DenoiseConfig()) -> Fingerprint:
    """K = sum(W''_i * I''_i) / sum(I''_i ** 2) on images cleaned with :func:`clean_image`.

    The watermark tile comes from the dimple-free residual pool, as in the
    residual variant; cleaned images are denoised again.
    """
    return fit_source(images, cfg, "spatial_cancel").fingerprint


def export_tile_png(path: Union[str, Path], tile: np.ndarray) -> None:
    """Save a tile as an 8-bit PNG, linearly stretched to [0, 255] for inspection."""
    tile = np.asarray(tile, dtype=np.float64)
    lo, hi = tile.min(), tile.max()
    scaled = np.zeros_like(tile) if hi == lo else (tile - lo) / (hi - lo) * 255.0
    save_png8(path, scaled)
