"""Synthetic sensor and development pipeline.

A sensor multiplies the scene by (1 + K) and adds read noise in the 16-bit
domain. Development adds a periodic dither tile (and optional 8x8 dimples)
before quantizing to 8 bits, optionally followed by a JPEG round trip.

Random streams are keyed by integer tuples passed to ``numpy.random.default_rng``:

    (seed, 0)                     sensor PRNU
    (seed, 1, index)              read noise of exposure ``index``
    (seed, 2)                     watermark tile
    (seed, 3)                     dimple tile
    (seed, 4)                     watermark drift
    (scenario_seed, 5, s, kind, i) scene of image ``i`` of sensor ``s``; kind 0 = reference, 1 = test
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from .core import Depth, GrayImage, ImageLike, as_array, as_gray, save_png8, save_tiff16, tile_image
from .errors import DimensionError, RangeError

MAX16 = 65535
LSB8_IN_16 = 257.0

# ITU-T T.81 Annex K, table K.1
LUMINANCE_QTABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in keys])


@dataclass(frozen=True)
class SensorModel:
    k: np.ndarray = field(repr=False)
    k_strength: float = 0.02
    read_noise_sigma: float = 2.0
    seed: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.k.shape


@dataclass(frozen=True)
class PipelineModel:
    """Development parameters.

    :param watermark16: 128x128 dither tile in 16-bit units
    :param dimples: 8x8 dimple tile in 8-bit units (scaled by 257 when applied)
    :param jpeg_quality: JPEG quality factor, or None for lossless 8-bit output
    """

    watermark16: np.ndarray = field(repr=False)
    dimples: np.ndarray = field(default_factory=lambda: np.zeros((8, 8)), repr=False)
    jpeg_quality: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.watermark16, dtype=np.float64)
        if np.max(np.abs(w)) >= LSB8_IN_16:
            raise RangeError("watermark amplitude must stay below one 8-bit step (257 in 16-bit units)")
        if self.jpeg_quality is not None and not 1 <= self.jpeg_quality <= 100:
            raise RangeError(f"jpeg_quality must be in [1, 100], got {self.jpeg_quality}")


def gen_sensor(shape: tuple[int, int], k_strength: float = 0.02, seed: int = 0, read_noise_sigma: float = 2.0) -> SensorModel:
    """Sensor with i.i.d. Gaussian PRNU of std ``k_strength``, mean removed."""
    if not 0 < k_strength <= 0.1:
        raise RangeError(f"k_strength must be in (0, 0.1], got {k_strength}")
    if read_noise_sigma < 0:
        raise RangeError("read_noise_sigma must be non-negative")
    k = _rng(seed, 0).normal(0.0, k_strength, size=tuple(shape))
    k -= k.mean()
    return SensorModel(k, k_strength, read_noise_sigma, seed)


def gen_watermark(seed: int = 0, amplitude: float = 128.0, size: int = 128) -> np.ndarray:
    """Random dither tile with values in [-amplitude, amplitude] (16-bit units).

    Magnitudes are amplitude * sqrt(U) with U uniform, and signs are random.
    The density of |w| rises linearly toward the bound, so the tile has most
    of its energy near the amplitude while still reaching every magnitude.
    """
    rng = _rng(seed, 2)
    mag = np.sqrt(rng.random((size, size))) * amplitude
    sign = np.where(rng.random((size, size)) < 0.5, -1.0, 1.0)
    return sign * mag


def gen_dimples(seed: int = 0, amplitude: float = 1.0) -> np.ndarray:
    """Zero-mean 8x8 tile scaled so its largest magnitude equals ``amplitude`` (8-bit units)."""
    d = _rng(seed, 3).normal(size=(8, 8))
    d -= d.mean()
    return d * (amplitude / np.max(np.abs(d)))


def make_pipeline(seed: int = 0, amplitude: float = 128.0, jpeg_quality: Optional[int] = None,
                  dimple_amplitude: float = 0.0, drift: float = 0.0) -> PipelineModel:
    """Pipeline with a seeded watermark.

    :param drift: relative std of a Gaussian perturbation applied to the tile,
        mimicking the watermark changing across CPU architectures
    """
    w = gen_watermark(seed, amplitude) if amplitude > 0 else np.zeros((128, 128))
    if drift:
        w = drift_watermark(w, drift, seed)
    d = gen_dimples(seed, dimple_amplitude) if dimple_amplitude > 0 else np.zeros((8, 8))
    return PipelineModel(w, d, jpeg_quality, seed)


def drift_watermark(w: np.ndarray, relative: float, seed: int = 0) -> np.ndarray:
    """w + relative * rms(w) * N(0, 1), clipped to stay inside one 8-bit step."""
    w = np.asarray(w, dtype=np.float64)
    noise = _rng(seed, 4).normal(size=w.shape)
    out = w + relative * np.sqrt(np.mean(w * w)) * noise
    return np.clip(out, -LSB8_IN_16 + 1, LSB8_IN_16 - 1)


def capture(scene, s: SensorModel, index: int = 0) -> GrayImage:
    """I = I0 (1 + K) + Theta in the 16-bit domain, clamped to [0, 65535].

    Theta is Gaussian with std ``read_noise_sigma`` 8-bit steps.
    """
    i0 = as_array(scene)
    if i0.shape != s.shape:
        raise DimensionError(f"scene {i0.shape} and sensor {s.shape} differ in shape")
    out = i0 * (1.0 + s.k)
    if s.read_noise_sigma > 0:
        out = out + _rng(s.seed, 1, index).normal(0.0, s.read_noise_sigma * LSB8_IN_16, size=i0.shape)
    return GrayImage(np.clip(out, 0, MAX16), Depth.BITS16)


def quantize16to8(v):
    """round(v * 255 / 65535), halves rounded away from zero."""
    arr = np.asarray(v, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > MAX16) or not np.all(np.isfinite(arr)):
        raise RangeError("16-bit values must lie in [0, 65535]")
    q = np.floor(arr * 255.0 / MAX16 + 0.5).astype(np.int64)
    return int(q) if q.ndim == 0 else q


def jpeg_qtable(quality: int) -> np.ndarray:
    """Annex K luminance table scaled with the IJG quality convention."""
    if not 1 <= quality <= 100:
        raise RangeError(f"quality must be in [1, 100], got {quality}")
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((LUMINANCE_QTABLE * scale + 50) / 100), 1, 255)


def jpeg_roundtrip(img8: ImageLike, quality: int) -> GrayImage:
    """Blockwise 8x8 DCT quantization round trip of an 8-bit grayscale image.

    Edges are padded by replication to a multiple of 8 and cropped afterwards.
    """
    q = jpeg_qtable(quality)
    x = as_array(img8)
    m, n = x.shape
    pad = ((0, (-m) % 8), (0, (-n) % 8))
    xp = np.pad(x, pad, mode="edge") - 128.0
    b = xp.reshape(xp.shape[0] // 8, 8, xp.shape[1] // 8, 8).swapaxes(1, 2)
    coef = dctn(b, axes=(2, 3), norm="ortho")
    coef = np.round(coef / q) * q
    rec = idctn(coef, axes=(2, 3), norm="ortho")
    rec = rec.swapaxes(1, 2).reshape(xp.shape)[:m, :n] + 128.0
    return GrayImage(np.clip(np.round(rec), 0, 255), Depth.BITS8)


def develop(img16: ImageLike, p: PipelineModel) -> GrayImage:
    """Add the tiled watermark and dimples in 16 bits, quantize to 8 bits, optionally JPEG."""
    x = as_array(img16)
    v = x + tile_image(p.watermark16, x.shape)
    if np.any(p.dimples):
        v = v + tile_image(p.dimples, x.shape) * LSB8_IN_16
    out = GrayImage(quantize16to8(np.clip(v, 0, MAX16)).astype(np.float64), Depth.BITS8)
    if p.jpeg_quality is not None:
        out = jpeg_roundtrip(out, p.jpeg_quality)
    return out


# --- scenes -----------------------------------------------------------------


def flat_field(shape: tuple[int, int], level16: float, vignetting: float = 0.1) -> np.ndarray:
    """Constant 16-bit level with radial falloff to (1 - vignetting) in the corners."""
    m, n = shape
    y = (np.arange(m) - (m - 1) / 2) / ((m - 1) / 2 or 1)
    x = (np.arange(n) - (n - 1) / 2) / ((n - 1) / 2 or 1)
    r2 = (y[:, None] ** 2 + x[None, :] ** 2) / 2
    return level16 * (1.0 - vignetting * r2)


def textured_scene(shape: tuple[int, int], rng: np.random.Generator, mean16: float, std16: float,
                   smoothing: float = 6.0) -> np.ndarray:
    """Smoothed Gaussian noise rescaled to the given mean and std, clipped to 16 bits."""
    z = gaussian_filter(rng.normal(size=shape), smoothing, mode="wrap")
    z = (z - z.mean()) / z.std()
    return np.clip(mean16 + std16 * z, 0, MAX16)


# --- scenarios and corpora --------------------------------------------------


@dataclass
class PipelineSpec:
    seed: int = 0
    amplitude: float = 128.0
    jpeg_quality: Optional[int] = None
    dimple_amplitude: float = 0.0
    drift: float = 0.0

    def build(self) -> PipelineModel:
        return make_pipeline(self.seed, self.amplitude, self.jpeg_quality, self.dimple_amplitude, self.drift)


@dataclass
class SensorSpec:
    name: str
    seed: int
    pipeline: str = "default"
    k_strength: float = 0.02
    read_noise_sigma: float = 2.0


@dataclass
class Scenario:
    """Description of a synthetic corpus. Levels are on the 8-bit scale."""

    sensors: list[SensorSpec]
    pipelines: dict[str, PipelineSpec]
    shape: tuple[int, int] = (512, 512)
    n_ref: int = 20
    n_test: int = 10
    flat_level: float = 64.0
    vignetting: float = 0.1
    test_mean: float = 96.0
    test_std: float = 24.0
    test_smoothing: float = 6.0
    seed: int = 0

    def __post_init__(self):
        self.shape = tuple(int(v) for v in self.shape)
        self.sensors = [s if isinstance(s, SensorSpec) else SensorSpec(**s) for s in self.sensors]
        self.pipelines = {k: v if isinstance(v, PipelineSpec) else PipelineSpec(**v) for k, v in self.pipelines.items()}
        for s in self.sensors:
            if s.pipeline not in self.pipelines:
                raise ValueError(f"sensor {s.name!r} refers to unknown pipeline {s.pipeline!r}")
        if len({s.name for s in self.sensors}) != len(self.sensors):
            raise ValueError("sensor names must be unique")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SensorData:
    spec: SensorSpec
    sensor: SensorModel
    pipeline: PipelineModel
    references: list[GrayImage]
    tests: list[GrayImage]
    references16: list[GrayImage]
    tests16: list[GrayImage]


def render_scenario(scn: Scenario) -> list[SensorData]:
    """Generate all images of a scenario in memory."""
    out = []
    pipelines = {name: spec.build() for name, spec in scn.pipelines.items()}
    for si, spec in enumerate(scn.sensors):
        sensor = gen_sensor(scn.shape, spec.k_strength, spec.seed, spec.read_noise_sigma)
        pipe = pipelines[spec.pipeline]
        flat = flat_field(scn.shape, scn.flat_level * LSB8_IN_16, scn.vignetting)
        refs16, tests16 = [], []
        exposure = 0
        for _ in range(scn.n_ref):
            refs16.append(capture(flat, sensor, exposure))
            exposure += 1
        for ti in range(scn.n_test):
            scene = textured_scene(scn.shape, _rng(scn.seed, 5, si, 1, ti), scn.test_mean * LSB8_IN_16,
                                   scn.test_std * LSB8_IN_16, scn.test_smoothing)
            tests16.append(capture(scene, sensor, exposure))
            exposure += 1
        out.append(SensorData(
            spec=spec,
            sensor=sensor,
            pipeline=pipe,
            references=[develop(im, pipe) for im in refs16],
            tests=[develop(im, pipe) for im in tests16],
            references16=refs16,
            tests16=tests16,
        ))
    return out


def shares_watermark(scn: Scenario, a: SensorSpec, b: SensorSpec) -> bool:
    pa, pb = scn.pipelines[a.pipeline], scn.pipelines[b.pipeline]
    if pa.amplitude <= 0 or pb.amplitude <= 0:
        return False
    return a.pipeline == b.pipeline or (pa.seed == pb.seed and pa.amplitude == pb.amplitude and pa.drift == pb.drift)


def make_corpus(scn: Scenario, out_dir: Union[str, Path]) -> dict:
    """Write a scenario to disk and return its manifest.

    Layout: ``<sensor>/reference/*.png``, ``<sensor>/test/*.png`` for developed
    8-bit images, ``<sensor>/raw16/*.tif`` for the 16-bit captures, and
    ``manifest.json`` at the root.
    """
    out_dir = Path(out_dir)
    data = render_scenario(scn)
    sensors = []
    for sd in data:
        base = out_dir / sd.spec.name
        entry = {"name": sd.spec.name, "seed": sd.spec.seed, "pipeline": sd.spec.pipeline,
                 "k_strength": sd.spec.k_strength, "references": [], "tests": []}
        for kind, imgs, raws in (("reference", sd.references, sd.references16), ("test", sd.tests, sd.tests16)):
            (base / kind).mkdir(parents=True, exist_ok=True)
            (base / "raw16").mkdir(parents=True, exist_ok=True)
            for i, (im, raw) in enumerate(zip(imgs, raws)):
                stem = f"{sd.spec.name}__{kind}_{i:03d}"
                save_png8(base / kind / f"{stem}.png", im)
                save_tiff16(base / "raw16" / f"{stem}.tif", raw)
                entry["references" if kind == "reference" else "tests"].append(f"{sd.spec.name}/{kind}/{stem}.png")
        sensors.append(entry)
    pairs = []
    for fa in scn.sensors:
        for sb, entry in zip(scn.sensors, sensors):
            for t in entry["tests"]:
                pairs.append({"fingerprint": fa.name, "test": t, "match": fa.name == sb.name,
                              "shares_watermark": shares_watermark(scn, fa, sb)})
    manifest = {"format": "prnu_nua-corpus/1", "scenario": scn.to_dict(), "sensors": sensors, "pairs": pairs}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def two_sensor_scenario(shared_watermark: bool = True, amplitude: float = 128.0, **kwargs) -> Scenario:
    """Two sensors A and B developed with the same watermark (or none)."""
    pipes = {"default": PipelineSpec(seed=7, amplitude=amplitude if shared_watermark else 0.0)}
    sensors = [SensorSpec("A", seed=101), SensorSpec("B", seed=202)]
    return Scenario(sensors=sensors, pipelines=pipes, **kwargs)
