"""Separable classical resampling (Lanczos-3 and Catmull-Rom bicubic).

Coordinates are center-aligned: output pixel i samples source coordinate
(i + 0.5) * (src / dst) - 0.5. When downscaling, the kernel is stretched by
the scale factor so it acts as an anti-aliasing filter. Tap weights are
renormalized to sum to one for every output sample, which preserves constant
images exactly, and edges are handled by clamping tap indices to the image.
The horizontal pass runs first, then the vertical pass. All arithmetic is
float64; results are stored as float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import MultiBandRaster

# Weight mass below this is treated as "no valid taps" when nodata pixels are
# excluded from the weighted sum.
_MIN_VALID_WEIGHT = 1e-6


def _lanczos3(x: np.ndarray) -> np.ndarray:
    out = np.sinc(x) * np.sinc(x / 3.0)
    out[np.abs(x) >= 3.0] = 0.0
    return out


def _catmull_rom(x: np.ndarray) -> np.ndarray:
    # Keys cubic with a = -0.5
    ax = np.abs(x)
    out = np.zeros_like(ax)
    near = ax <= 1.0
    mid = (ax > 1.0) & (ax < 2.0)
    a = ax[near]
    out[near] = (1.5 * a - 2.5) * a * a + 1.0
    a = ax[mid]
    out[mid] = ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0
    return out


_KERNELS = {
    "lanczos3": (_lanczos3, 3.0),
    "bicubic": (_catmull_rom, 2.0),
}


@dataclass(frozen=True)
class ResampleSpec:
    """Target geometry and kernel for one resampling operation."""

    target_width: int
    target_height: int
    kernel: str = "lanczos3"
    edge_policy: str = "clamp"

    def __post_init__(self) -> None:
        if self.target_width < 1 or self.target_height < 1:
            raise DataError(
                f"target dimensions must be positive, got "
                f"{self.target_width}x{self.target_height}"
            )
        if self.kernel not in _KERNELS:
            raise DataError(f"unknown kernel {self.kernel!r}; expected one of {sorted(_KERNELS)}")
        if self.edge_policy != "clamp":
            raise DataError(f"unsupported edge policy {self.edge_policy!r}")


def _axis_taps(src: int, dst: int, kernel: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-pixel tap indices (clamped) and normalized weights."""
    kernel_fn, support = _KERNELS[kernel]
    scale = src / dst
    stretch = max(scale, 1.0)  # widen kernel when downscaling (anti-alias)
    radius = support * stretch
    centers = (np.arange(dst, dtype=np.float64) + 0.5) * scale - 0.5
    first = np.ceil(centers - radius).astype(np.int64)
    tap_count = int(np.floor(2.0 * radius)) + 2
    taps = first[:, None] + np.arange(tap_count)[None, :]
    weights = kernel_fn((taps - centers[:, None]) / stretch)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.clip(taps, 0, src - 1), weights


def _pass_plain(values: np.ndarray, taps: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """One separable pass along `axis` (1=rows, 2=columns) of (b, h, w) data."""
    dst, tap_count = taps.shape
    shape = list(values.shape)
    shape[axis] = dst
    out = np.zeros(shape, dtype=np.float64)
    for t in range(tap_count):  # summed in tap order: deterministic
        idx = taps[:, t]
        w = weights[:, t]
        if axis == 2:
            out += values[:, :, idx] * w[None, None, :]
        else:
            out += values[:, idx, :] * w[None, :, None]
    return out


def _pass_masked(
    values: np.ndarray,
    valid: np.ndarray,
    taps: np.ndarray,
    weights: np.ndarray,
    axis: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Like _pass_plain, but excludes invalid samples and renormalizes."""
    dst, tap_count = taps.shape
    shape = list(values.shape)
    shape[axis] = dst
    acc = np.zeros(shape, dtype=np.float64)
    mass = np.zeros(shape, dtype=np.float64)
    filled = np.where(valid, values, 0.0)
    for t in range(tap_count):
        idx = taps[:, t]
        w = weights[:, t]
        if axis == 2:
            acc += filled[:, :, idx] * w[None, None, :]
            mass += valid[:, :, idx] * w[None, None, :]
        else:
            acc += filled[:, idx, :] * w[None, :, None]
            mass += valid[:, idx, :] * w[None, :, None]
    ok = mass > _MIN_VALID_WEIGHT
    out = np.divide(acc, mass, out=np.zeros_like(acc), where=ok)
    return out, ok


def resample(raster: MultiBandRaster, spec: ResampleSpec) -> MultiBandRaster:
    """Resample every band to the spec's target size (output float32).

    Nodata samples are excluded from the weighted sums with renormalization
    over the remaining weights; output samples with no usable support become
    nodata again.
    """
    h_taps, h_weights = _axis_taps(raster.width, spec.target_width, spec.kernel)
    v_taps, v_weights = _axis_taps(raster.height, spec.target_height, spec.kernel)
    values = raster.pixels.astype(np.float64)

    if raster.has_nodata_samples():
        valid = ~raster.sample_invalid_mask()
        mid, mid_valid = _pass_masked(values, valid, h_taps, h_weights, axis=2)
        out, out_valid = _pass_masked(mid, mid_valid, v_taps, v_weights, axis=1)
        result = out.astype(np.float32)
        nodata = float(raster.nodata)
        result[~out_valid] = nodata
    else:
        mid = _pass_plain(values, h_taps, h_weights, axis=2)
        out = _pass_plain(mid, v_taps, v_weights, axis=1)
        result = out.astype(np.float32)
        nodata = None if raster.nodata is None else float(raster.nodata)

    return raster.with_pixels(result, nodata=nodata)
