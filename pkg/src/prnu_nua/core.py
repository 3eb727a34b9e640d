"""Image containers, grayscale conversion, tiled patch arithmetic and file I/O."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import DimensionError, FormatError

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

PRNF_MAGIC = b"PRNF"
PRNF_VERSION = 1
_PRNF_HEADER = struct.Struct("<4sBBII")


class Depth(enum.IntEnum):
    """Bit depth tag of a grayscale image. The value is the bit count."""

    BITS8 = 8
    BITS16 = 16

    @property
    def max_value(self) -> int:
        return (1 << int(self)) - 1


def _frozen_float(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image stored as float64, with its nominal bit depth.

    The array is copied and made read-only on construction.
    """

    data: np.ndarray
    depth: Depth = Depth.BITS8

    def __post_init__(self):
        arr = _frozen_float(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "depth", Depth(self.depth))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def replace(self, data: np.ndarray) -> "GrayImage":
        return GrayImage(data, self.depth)


@dataclass(frozen=True)
class Residual:
    """Noise residual W = I - f(I), with flags recording which artifacts were removed.

    Flags are monotone: operations produce new residuals that keep any flag
    already set.
    """

    data: np.ndarray
    dimple_free: bool = False
    watermark_free: bool = False

    def __post_init__(self):
        arr = _frozen_float(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("residual contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


ImageLike = Union[GrayImage, np.ndarray]


def as_array(x) -> np.ndarray:
    """Return the float64 pixel array behind a GrayImage, Residual or ndarray."""
    if isinstance(x, (GrayImage, Residual)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def as_gray(x: ImageLike, depth: Depth | None = None) -> GrayImage:
    """Coerce an array to GrayImage. Integer arrays pick their depth from the dtype."""
    if isinstance(x, GrayImage):
        return x
    arr = np.asarray(x)
    if depth is None:
        depth = Depth.BITS16 if arr.dtype == np.uint16 else Depth.BITS8
    return GrayImage(arr, depth)


def to_grayscale(rgb, depth: Depth | None = None) -> GrayImage:
    """Convert an (m, n, 3) RGB array to grayscale with BT.601 weights.

    No rounding is applied; the result stays on the input's scale.
    """
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected an (m, n, 3) array, got shape {arr.shape}")
    if depth is None:
        depth = Depth.BITS16 if arr.dtype == np.uint16 else Depth.BITS8
    gray = arr[..., 0] * GRAY_WEIGHTS[0] + arr[..., 1] * GRAY_WEIGHTS[1] + arr[..., 2] * GRAY_WEIGHTS[2]
    return GrayImage(gray, depth)


# --- tiled patch arithmetic -------------------------------------------------


def _check_patch(shape: tuple[int, int], p: int) -> None:
    if p < 1:
        raise DimensionError(f"patch size must be positive, got {p}")
    if p > min(shape):
        raise DimensionError(f"patch size {p} exceeds image shape {shape}")


def blocks(arr: np.ndarray, p: int) -> np.ndarray:
    """View the covered region of ``arr`` as (rows, cols, p, p) non-overlapping patches.

    The covered region is the top-left ``(m//p)*p x (n//p)*p`` corner.
    """
    _check_patch(arr.shape, p)
    r, c = arr.shape[0] // p, arr.shape[1] // p
    return arr[: r * p, : c * p].reshape(r, p, c, p).swapaxes(1, 2)


def unblocks(b: np.ndarray) -> np.ndarray:
    """Inverse of :func:`blocks` for the covered region."""
    r, c, p, _ = b.shape
    return b.swapaxes(1, 2).reshape(r * p, c * p)


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping p x p patches of an image, in row-major patch order."""

    source: np.ndarray = field(repr=False)
    patch_size: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.source.shape[0] // self.patch_size, self.source.shape[1] // self.patch_size

    @property
    def count(self) -> int:
        r, c = self.grid_shape
        return r * c

    @property
    def patches(self) -> list[np.ndarray]:
        b = blocks(self.source, self.patch_size)
        return [b[i, j] for i in range(b.shape[0]) for j in range(b.shape[1])]


def patch_grid(img: ImageLike, p: int) -> PatchGrid:
    arr = as_array(img)
    _check_patch(arr.shape, p)
    return PatchGrid(arr, p)


def tile_sum(img, p: int) -> tuple[np.ndarray, int]:
    """Entrywise sum of all p x p patches and the number of patches summed."""
    b = blocks(as_array(img), p)
    # reduction order: patch rows, then patch columns
    return b.sum(axis=(0, 1)), b.shape[0] * b.shape[1]


def tile_average(img, p: int) -> np.ndarray:
    """Mean p x p patch over all complete non-overlapping patches.

    Rows and columns beyond the last complete patch are ignored.
    """
    total, count = tile_sum(img, p)
    return total / count


def subtract_tiled(img, tile: np.ndarray):
    """Subtract ``tile`` from every complete patch; margins pass through.

    Returns the same container type as ``img`` (GrayImage keeps its depth tag).
    Values are not clipped.
    """
    arr = as_array(img)
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 2 or tile.shape[0] != tile.shape[1]:
        raise DimensionError(f"tile must be square, got shape {tile.shape}")
    p = tile.shape[0]
    _check_patch(arr.shape, p)
    out = np.array(arr, dtype=np.float64, copy=True)
    blocks(out, p)[...] -= tile
    if isinstance(img, GrayImage):
        return img.replace(out)
    if isinstance(img, Residual):
        return Residual(out, img.dimple_free, img.watermark_free)
    return out


def tile_image(tile: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Periodically repeat ``tile`` to cover ``shape``; margins get partial tiles."""
    tile = np.asarray(tile, dtype=np.float64)
    reps = (-(-shape[0] // tile.shape[0]), -(-shape[1] // tile.shape[1]))
    return np.tile(tile, reps)[: shape[0], : shape[1]]


def normalized_correlation(a, b) -> float:
    """Pearson correlation of two equally shaped arrays (means removed)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        return 0.0
    return float(np.dot(a, b) / den)


# --- PRNF binary matrices ---------------------------------------------------


def prnf_bytes(arr: np.ndarray, depth: Depth = Depth.BITS8) -> bytes:
    """Serialize a real matrix: magic, version u8, depth u8, rows u32, cols u32, float64 LE."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
    header = _PRNF_HEADER.pack(PRNF_MAGIC, PRNF_VERSION, int(depth), arr.shape[0], arr.shape[1])
    return header + arr.astype("<f8").tobytes(order="C")


def parse_prnf(buf: bytes, offset: int = 0) -> tuple[np.ndarray, Depth, int]:
    """Parse a PRNF blob starting at ``offset``.

    :return: (matrix, depth, offset just past the blob)
    """
    if len(buf) - offset < _PRNF_HEADER.size:
        raise FormatError("truncated PRNF header")
    magic, version, depth, rows, cols = _PRNF_HEADER.unpack_from(buf, offset)
    if magic != PRNF_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != PRNF_VERSION:
        raise FormatError(f"unsupported PRNF version {version}")
    try:
        depth = Depth(depth)
    except ValueError:
        raise FormatError(f"unknown depth tag {depth}") from None
    start = offset + _PRNF_HEADER.size
    end = start + 8 * rows * cols
    if len(buf) < end:
        raise FormatError("truncated PRNF payload")
    arr = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start).reshape(rows, cols)
    return arr.astype(np.float64), depth, end


def write_prnf(path: Union[str, Path, BinaryIO], arr: np.ndarray, depth: Depth = Depth.BITS8) -> None:
    data = prnf_bytes(arr, depth)
    if hasattr(path, "write"):
        path.write(data)
    else:
        Path(path).write_bytes(data)


def read_prnf(path: Union[str, Path]) -> tuple[np.ndarray, Depth]:
    arr, depth, end = parse_prnf(Path(path).read_bytes())
    return arr, depth


# --- image files ------------------------------------------------------------


def load_image(path: Union[str, Path]) -> GrayImage:
    """Load an 8-bit PNG/TIFF/JPEG or a 16-bit TIFF as a grayscale image.

    RGB inputs are converted with :func:`to_grayscale`.
    """
    path = Path(path)
    if path.suffix.lower() in (".tif", ".tiff"):
        import tifffile

        arr = tifffile.imread(path)
    else:
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB", "I;16"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    if arr.dtype == np.uint8:
        depth = Depth.BITS8
    elif arr.dtype == np.uint16:
        depth = Depth.BITS16
    else:
        raise FormatError(f"{path}: unsupported sample type {arr.dtype}")
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[..., :3]
        return to_grayscale(arr, depth)
    return GrayImage(arr, depth)


def save_png8(path: Union[str, Path], img: ImageLike) -> None:
    """Write an 8-bit grayscale PNG. Values are rounded and clipped to [0, 255]."""
    from PIL import Image

    arr = np.clip(np.rint(as_array(img)), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def save_tiff16(path: Union[str, Path], img: ImageLike) -> None:
    """Write a 16-bit grayscale TIFF. Values are rounded and clipped to [0, 65535]."""
    import tifffile

    arr = np.clip(np.rint(as_array(img)), 0, 65535).astype(np.uint16)
    tifffile.imwrite(path, arr)
