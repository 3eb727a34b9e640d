"""Command line front end.

Reports are written as JSON lines (one object per input, in input order) or
as CSV with ``--csv``. The exit status is 0 only when every input was
processed without error.

The default worker count for ``--jobs`` comes from the ``PRNU_NUA_JOBS``
environment variable (1 when unset).
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from functools import partial, wraps
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import NEIGHBORHOOD, PCE_THRESHOLD, attribute
from .core import Depth, load_image, read_prnf, prnf_bytes, tile_average, save_png8, save_tiff16
from .denoise import DenoiseConfig, residual
from .detect import PERIODICITY_THRESHOLD, autocorrelation, grid_peak_score
from .errors import PrnuError
from .exif import read_software_tag
from .fingerprint import Fingerprint
from .nua import WATERMARK_SIZE, WatermarkEstimate, clean_image, dimple_free_residual, estimate_average_watermark, export_tile_png, fit_source
from .synth import Scenario, make_corpus

JOBS_ENV = "PRNU_NUA_JOBS"


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def expand_inputs(patterns: list[str]) -> list[str]:
    """Expand glob patterns; literal paths are kept even if missing so they get reported."""
    out = []
    for pat in patterns:
        matches = sorted(glob.glob(pat))
        out.extend(matches if matches else [pat])
    return out


@contextmanager
def atomic_open(path):
    """Binary handle on a temporary file in the target directory; renamed over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write(path, data: bytes) -> None:
    with atomic_open(path) as fh:
        fh.write(data)


def _run(fn, items, jobs: int):
    """Yield ``fn(item)`` for every item, in input order, using up to ``jobs`` processes."""
    if jobs <= 1 or len(items) <= 1:
        for it in items:
            yield fn(it)
        return
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(fn, items)


def _safe(fn):
    """Wrap a per-file worker so failures become ``{"file": ..., "error": ...}`` records."""
    @wraps(fn)
    def wrapped(path, *args, **kwargs):
        try:
            return fn(path, *args, **kwargs)
        except (OSError, PrnuError, ValueError) as exc:
            return {"file": path, "error": f"{type(exc).__name__}: {exc}"}
    return wrapped


def _flatten(rec: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in rec.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)) and any(isinstance(x, dict) for x in v):
            for i, x in enumerate(v):
                flat.update(_flatten(x, f"{key}.{i}."))
        elif isinstance(v, (list, tuple)):
            flat[key] = " ".join(str(x) for x in v)
        else:
            flat[key] = v
    return flat


def _write_records(records, fh, as_csv: bool) -> int:
    errors = 0
    if as_csv:
        # the header is the union of all fields, so CSV output is assembled in memory
        rows = []
        for r in records:
            errors += "error" in r
            rows.append(_flatten(r))
        fields = []
        for r in rows:
            fields.extend(k for k in r if k not in fields)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        fh.write(buf.getvalue().encode())
        return errors
    for r in records:
        errors += "error" in r
        fh.write((json.dumps(r, sort_keys=True) + "\n").encode())
        fh.flush()
    return errors


def emit(records, out, as_csv: bool) -> int:
    """Write records as JSON lines (streamed) or as a CSV table.

    :param out: report path, or None for stdout
    :return: number of error records
    """
    if out is None:
        sys.stdout.flush()
        n = _write_records(records, sys.stdout.buffer, as_csv)
        sys.stdout.buffer.flush()
        return n
    with atomic_open(out) as fh:
        return _write_records(records, fh, as_csv)


def _cfg(args) -> DenoiseConfig:
    return DenoiseConfig(noise_sigma=args.sigma, levels=args.levels)


# --- workers (module level so they can be pickled) ---------------------------


@_safe
def _attribute_one(path, k_hat, cfg, threshold, neighborhood):
    img = load_image(path)
    rep = attribute(img, Fingerprint(k_hat, 0), cfg, threshold, neighborhood)
    return {"file": path, **rep.to_dict()}


@_safe
def _detect_one(path, cfg, periods, threshold, exclusion, tile_dir, ac_dir):
    img = load_image(path)
    res = residual(img, cfg)
    ac = autocorrelation(res)
    reports = []
    stem = Path(path).stem
    for p in periods:
        rep = grid_peak_score(ac, p, exclusion, threshold)
        reports.append(rep.to_dict())
        if tile_dir is not None:
            tile = tile_average(res, p)
            atomic_write(Path(tile_dir) / f"{stem}_p{p}.prnf", prnf_bytes(tile, img.depth))
            export_tile_png(Path(tile_dir) / f"{stem}_p{p}.png", tile)
    if ac_dir is not None:
        atomic_write(Path(ac_dir) / f"{stem}_ac.prnf", prnf_bytes(ac, img.depth))
    return {"file": path, "reports": reports}


@_safe
def _exif_one(path):
    tag = read_software_tag(Path(path).read_bytes())
    return {"file": path, "software": None if tag is None else tag.to_dict()}


@_safe
def _clean_one(path, w_hat, out_dir, fmt):
    img = load_image(path)
    est = WatermarkEstimate(w_hat)
    cleaned = clean_image(img, w_hat, est)
    stem = Path(path).stem
    if fmt == "prnf":
        target = Path(out_dir) / f"{stem}.prnf"
        atomic_write(target, prnf_bytes(cleaned.data, cleaned.depth))
    elif fmt == "tiff16":
        target = Path(out_dir) / f"{stem}.tif"
        scale = 257.0 if cleaned.depth == Depth.BITS8 else 1.0
        buf = io.BytesIO()
        save_tiff16(buf, cleaned.data * scale)
        atomic_write(target, buf.getvalue())
    else:
        target = Path(out_dir) / f"{stem}.png"
        buf = io.BytesIO()
        save_png8(buf, cleaned.data)
        atomic_write(target, buf.getvalue())
    strengths = est.per_patch_strength
    return {"file": path, "output": str(target), "mean_strength": float(np.mean(strengths)) if strengths else 0.0}


@_safe
def _load_one(path):
    return load_image(path)


# --- commands ---------------------------------------------------------------


def _load_all(paths, jobs):
    """Load images; files that fail to load or differ in shape from the first good one are errors."""
    loaded = list(_run(_load_one, paths, jobs))
    images, errors = [], []
    for path, r in zip(paths, loaded):
        if isinstance(r, dict):
            errors.append(r)
        elif images and r.shape != images[0].shape:
            errors.append({"file": path, "error": f"DimensionError: shape {r.shape} differs from {images[0].shape}"})
        else:
            images.append(r)
    return images, errors


def cmd_fingerprint(args) -> int:
    paths = expand_inputs(args.inputs)
    images, errors = _load_all(paths, args.jobs)
    if errors or not images:
        for e in errors:
            print(f"{e['file']}: {e['error']}", file=sys.stderr)
        if not images:
            print("no usable input images", file=sys.stderr)
        return 1
    model = fit_source(images, _cfg(args), args.mode)
    fp = model.fingerprint
    atomic_write(args.out, prnf_bytes(fp.k_hat, fp.depth))
    report = {"fingerprint": str(args.out), "inputs": paths, **model.report()}
    if args.watermark_out:
        atomic_write(args.watermark_out, model.watermark.to_bytes())
        report["watermark"] = str(args.watermark_out)
    if args.watermark_png:
        export_tile_png(args.watermark_png, model.watermark.average)
    report_path = args.report or str(args.out) + ".json"
    atomic_write(report_path, (json.dumps(report, indent=2, sort_keys=True) + "\n").encode())
    return 0


def cmd_attribute(args) -> int:
    k_hat, _ = read_prnf(args.fingerprint)
    paths = expand_inputs(args.inputs)
    fn = partial(_attribute_one, k_hat=k_hat, cfg=_cfg(args), threshold=args.threshold,
                 neighborhood=tuple(args.neighborhood))
    return int(emit(_run(fn, paths, args.jobs), args.out, args.csv) > 0)


def cmd_detect(args) -> int:
    paths = expand_inputs(args.inputs)
    fn = partial(_detect_one, cfg=_cfg(args), periods=args.periods, threshold=args.threshold,
                 exclusion=args.exclusion, tile_dir=args.tile_dir, ac_dir=args.ac_dir)
    return int(emit(_run(fn, paths, args.jobs), args.out, args.csv) > 0)


def cmd_clean(args) -> int:
    paths = expand_inputs(args.inputs)
    ref_paths = expand_inputs(args.reference) if args.reference else paths
    refs, errors = _load_all(ref_paths, args.jobs)
    if errors or not refs:
        for e in errors:
            print(f"{e['file']}: {e['error']}", file=sys.stderr)
        return 1
    cfg = _cfg(args)
    pool = list(_run(partial(dimple_free_residual, cfg=cfg), refs, args.jobs))
    w_hat = estimate_average_watermark(pool, WATERMARK_SIZE)
    fn = partial(_clean_one, w_hat=w_hat, out_dir=args.out_dir, fmt=args.format)
    return int(emit(_run(fn, paths, args.jobs), args.out, args.csv) > 0)


def cmd_simulate(args) -> int:
    scn = Scenario.load(args.scenario)
    manifest = make_corpus(scn, args.out_dir)
    print(json.dumps({"out_dir": str(args.out_dir), "sensors": len(manifest["sensors"]),
                      "pairs": len(manifest["pairs"])}))
    return 0


def cmd_exif(args) -> int:
    paths = expand_inputs(args.inputs)
    return int(emit(_run(_exif_one, paths, args.jobs), args.out, args.csv) > 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prnu-nua", description="PRNU attribution with periodic artifact removal")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, denoise=True, report=True):
        p.add_argument("--jobs", type=int, default=_default_jobs(), help=f"worker processes (env {JOBS_ENV})")
        if denoise:
            p.add_argument("--sigma", type=float, default=5.0, help="denoiser noise std on the 8-bit scale")
            p.add_argument("--levels", type=int, default=4, help="wavelet decomposition levels")
        if report:
            p.add_argument("--out", default=None, help="report file (default: stdout)")
            p.add_argument("--csv", action="store_true", help="write CSV instead of JSON lines")

    p = sub.add_parser("fingerprint", help="estimate a sensor fingerprint from reference images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--mode", choices=["plain", "residual_cancel", "spatial_cancel"], default="plain")
    p.add_argument("--out", required=True, help="fingerprint file (PRNF)")
    p.add_argument("--report", default=None, help="JSON report path (default: <out>.json)")
    p.add_argument("--watermark-out", default=None, help="write the watermark estimate (PRNW)")
    p.add_argument("--watermark-png", default=None, help="write the average watermark as a stretched PNG")
    common(p, report=False)
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("attribute", help="PCE of test images against a fingerprint")
    p.add_argument("--fingerprint", required=True)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--threshold", type=float, default=PCE_THRESHOLD)
    p.add_argument("--neighborhood", type=int, nargs=2, default=list(NEIGHBORHOOD), metavar=("H", "W"))
    common(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("detect", help="periodicity diagnosis of image residuals")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--periods", type=int, nargs="+", default=[128])
    p.add_argument("--threshold", type=float, default=PERIODICITY_THRESHOLD)
    p.add_argument("--exclusion", type=int, default=4)
    p.add_argument("--tile-dir", default=None, help="export the average patch per period (PRNF + PNG)")
    p.add_argument("--ac-dir", default=None, help="export the autocorrelation surface (PRNF)")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("clean", help="remove dimples and watermark from images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--reference", nargs="+", default=None, help="images of the same source used to estimate the watermark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["prnf", "tiff16", "png"], default="prnf")
    common(p)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("simulate", help="generate a synthetic corpus from a scenario file")
    p.add_argument("scenario")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("exif", help="read the Software tag of JPEG/TIFF files")
    p.add_argument("inputs", nargs="+")
    common(p, denoise=False)
    p.set_defaults(func=cmd_exif)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, PrnuError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
