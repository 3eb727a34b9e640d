"""Wavelet-domain local Wiener denoiser used to form noise residuals.

The transform is an orthogonal, periodized 2-D DWT with the 8-tap Daubechies
filter, applied to a symmetrically extended copy of the image. Detail
coefficients are shrunk with a locally adaptive Wiener gain; the coarsest
approximation band is kept as is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import Depth, GrayImage, ImageLike, Residual, as_gray
from .errors import DimensionError

# Daubechies scaling filter with 4 vanishing moments (8 taps)
DB8_TAPS = np.array([
    0.23037781330885523,
    0.7148465705525415,
    0.6308807679295904,
    -0.02798376941698385,
    -0.18703481171888114,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
])


def quadrature_mirror(h: np.ndarray) -> np.ndarray:
    """High-pass filter g[j] = (-1)^j h[L-1-j] paired with the scaling filter h."""
    L = len(h)
    return np.array([(-1) ** j * h[L - 1 - j] for j in range(L)])


_FILTER_BANK = np.stack([DB8_TAPS, quadrature_mirror(DB8_TAPS)], axis=1)  # (L, 2)


def _positions(n: int, taps: int) -> np.ndarray:
    return (2 * np.arange(n // 2)[:, None] + np.arange(taps)[None, :]) % n


def dwt_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """One periodized analysis step along ``axis``.

    lo[k] = sum_j h[j] x[(2k + j) mod N], likewise for hi with g.
    """
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    if n % 2:
        raise DimensionError(f"axis length must be even, got {n}")
    out = x[..., _positions(n, _FILTER_BANK.shape[0])] @ _FILTER_BANK
    return np.moveaxis(out[..., 0], -1, axis), np.moveaxis(out[..., 1], -1, axis)


def idwt_axis(lo: np.ndarray, hi: np.ndarray, axis: int) -> np.ndarray:
    """Inverse of :func:`dwt_axis` (its transpose, since the transform is orthogonal)."""
    lo = np.moveaxis(lo, axis, -1)
    hi = np.moveaxis(hi, axis, -1)
    half = lo.shape[-1]
    n = 2 * half
    contrib = lo[..., None] * _FILTER_BANK[:, 0] + hi[..., None] * _FILTER_BANK[:, 1]
    out = np.zeros(lo.shape[:-1] + (n,))
    pos = _positions(n, _FILTER_BANK.shape[0])
    for j in range(pos.shape[1]):
        out[..., pos[:, j]] += contrib[..., j]
    return np.moveaxis(out, -1, axis)


def dwt2(x: np.ndarray):
    """Single-level 2-D transform -> (approx, (row-detail, col-detail, diagonal))."""
    lo, hi = dwt_axis(x, 1)
    ll, lh = dwt_axis(lo, 0)
    hl, hh = dwt_axis(hi, 0)
    return ll, (lh, hl, hh)


def idwt2(ll: np.ndarray, details) -> np.ndarray:
    lh, hl, hh = details
    lo = idwt_axis(ll, lh, 0)
    hi = idwt_axis(hl, hh, 0)
    return idwt_axis(lo, hi, 1)


def wavedec2(x: np.ndarray, levels: int):
    """Multi-level decomposition. Returns [approx, details_coarsest, ..., details_finest]."""
    details = []
    approx = np.asarray(x, dtype=np.float64)
    for _ in range(levels):
        approx, d = dwt2(approx)
        details.append(d)
    return [approx] + details[::-1]


def waverec2(coeffs) -> np.ndarray:
    approx = coeffs[0]
    for d in coeffs[1:]:
        approx = idwt2(approx, d)
    return approx


@dataclass(frozen=True)
class DenoiseConfig:
    """Parameters of the residual filter.

    :param noise_sigma: assumed noise std-dev on the 8-bit scale
    :param levels: wavelet decomposition depth
    :param windows: odd window sizes for local variance estimation
    """

    noise_sigma: float = 5.0
    levels: int = 4
    windows: tuple[int, ...] = (3, 5, 7, 9)

    def __post_init__(self):
        if not self.noise_sigma > 0:
            raise ValueError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if not self.windows or any(w < 3 or w % 2 == 0 for w in self.windows):
            raise ValueError(f"windows must be odd and >= 3, got {self.windows}")


def wiener_shrink(coeff: np.ndarray, noise_var: float, windows) -> np.ndarray:
    """Local Wiener gain: coeff * v / (v + noise_var).

    v is the minimum over windows of the windowed mean of coeff**2 - noise_var,
    clamped at zero.
    """
    energy = coeff * coeff
    local = None
    for w in windows:
        v = np.maximum(uniform_filter(energy, w, mode="reflect") - noise_var, 0.0)
        local = v if local is None else np.minimum(local, v)
    return coeff * local / (local + noise_var)


def _extension(n: int, levels: int) -> tuple[int, int]:
    """Symmetric padding (before, after) so the extended length is a multiple of 2**levels."""
    block = 2 ** levels
    margin = 4 * block
    total = n + 2 * margin
    return margin, margin + (-total) % block


def _denoise_array(arr: np.ndarray, cfg: DenoiseConfig) -> np.ndarray:
    m, n = arr.shape
    if min(m, n) < 2 ** cfg.levels:
        raise DimensionError(
            f"image {arr.shape} too small for {cfg.levels} decomposition levels (need >= {2 ** cfg.levels})"
        )
    pr, pc = _extension(m, cfg.levels), _extension(n, cfg.levels)
    ext = np.pad(arr, (pr, pc), mode="symmetric")
    coeffs = wavedec2(ext, cfg.levels)
    noise_var = cfg.noise_sigma ** 2
    for k in range(1, len(coeffs)):
        coeffs[k] = tuple(wiener_shrink(d, noise_var, cfg.windows) for d in coeffs[k])
    out = waverec2(coeffs)
    return out[pr[0]: pr[0] + m, pc[0]: pc[0] + n]


def denoise(img: ImageLike, cfg: DenoiseConfig = DenoiseConfig()) -> GrayImage:
    """Denoised image f(I), same shape and depth tag as ``img``.

    16-bit inputs are rescaled to the 8-bit range for filtering, since
    ``cfg.noise_sigma`` is expressed in 8-bit units.
    """
    img = as_gray(img)
    scale = 257.0 if img.depth == Depth.BITS16 else 1.0
    out = _denoise_array(img.data / scale, cfg) * scale
    return img.replace(out)


def residual(img: ImageLike, cfg: DenoiseConfig = DenoiseConfig(), *, dimple_free: bool = False) -> Residual:
    """Noise residual W = I - f(I).

    ``dimple_free`` only tags the result; use :func:`prnu_nua.nua.dimple_free_residual`
    to actually remove dimples first.
    """
    img = as_gray(img)
    return Residual(img.data - denoise(img, cfg).data, dimple_free=dimple_free)
