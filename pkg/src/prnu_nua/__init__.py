"""PRNU sensor attribution with detection and removal of periodic non-unique artifacts."""

__version__ = "0.1.0"

from .attribution import PceReport, attribute, ncc_surface, pce
from .core import Depth, GrayImage, Residual, load_image, subtract_tiled, tile_average, to_grayscale
from .denoise import DenoiseConfig, denoise, residual
from .detect import PeriodicityReport, autocorrelation, average_patch_view, grid_peak_score
from .exif import SoftwareTag, read_software_tag
from .fingerprint import Fingerprint, estimate_fingerprint, postprocess_fingerprint
from .nua import (
    WatermarkEstimate,
    clean_image,
    clipped_projection,
    estimate_average_watermark,
    estimate_dimples,
    estimate_fingerprint_residual_cancel,
    estimate_fingerprint_spatial_cancel,
    fit_source,
    remove_dimples,
)
