"""Toolkit for aligning, converting, resampling, and evaluating
heterogeneous-sensor satellite raster imagery."""

from .align import AlignmentTransform, apply_fdm, fit_fdm, histogram_match
from .dataset import (
    BandStatistics,
    PatchGrid,
    compute_stats,
    denormalize,
    extract_patches,
    minmax_normalize,
)
from .errors import ConfigError, DataError, DomainError, RasterFormatError, SatalignError
from .metrics import (
    MetricReport,
    diff_map,
    evaluate_prediction_set,
    histogram_compare,
    metric_report,
    pixel_errors,
    psnr,
    ssim,
)
from .radiometry import (
    RadiometricParams,
    dn_to_radiance,
    dn_to_surface,
    load_radiometric_params,
    radiance_to_toa,
    toa_to_surface,
)
from .raster import ENCODING_FLOAT32, ENCODING_INT16, MultiBandRaster
from .raster_io import export_png, read_raster, write_raster
from .resample import ResampleSpec, resample
from .synth import DistortionSpec, RecoveryReport, make_pair, verify_recovery

__version__ = "0.1.0"

__all__ = [
    "AlignmentTransform",
    "BandStatistics",
    "ConfigError",
    "DataError",
    "DistortionSpec",
    "DomainError",
    "ENCODING_FLOAT32",
    "ENCODING_INT16",
    "MetricReport",
    "MultiBandRaster",
    "PatchGrid",
    "RadiometricParams",
    "RasterFormatError",
    "RecoveryReport",
    "ResampleSpec",
    "SatalignError",
    "apply_fdm",
    "compute_stats",
    "denormalize",
    "diff_map",
    "dn_to_radiance",
    "dn_to_surface",
    "evaluate_prediction_set",
    "export_png",
    "extract_patches",
    "fit_fdm",
    "histogram_compare",
    "histogram_match",
    "load_radiometric_params",
    "make_pair",
    "metric_report",
    "minmax_normalize",
    "pixel_errors",
    "psnr",
    "radiance_to_toa",
    "read_raster",
    "resample",
    "ssim",
    "toa_to_surface",
    "verify_recovery",
    "write_raster",
]
