"""Spectral alignment: per-band histogram matching and feature distribution
matching (mean/covariance transfer in c-dimensional pixel space).

Histogram matching maps each source pixel to the reference quantile value at
its own quantile, where the quantile of a pixel is its average rank among the
source samples divided by (N - 1), and reference quantiles are evaluated by
linear interpolation between the sorted reference samples. The mapping is
monotone, and for equal-size tie-free inputs it reproduces the reference
histogram exactly.

Feature distribution matching fits y = A (x - mu_src) + mu_ref with
A = Cov_ref^(1/2) . Cov_src^(-1/2) built from symmetric eigendecomposition
roots, so the transformed pixels carry the reference mean and covariance
while each output pixel depends only on its own input pixel.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import MultiBandRaster, invalid_mask

DEFAULT_REGULARIZATION = 1e-8


@dataclass(frozen=True)
class FitDiagnostics:
    source_covariance: np.ndarray
    target_covariance: np.ndarray
    eigenvalue_floors_applied: int


@dataclass(frozen=True)
class AlignmentTransform:
    """Fitted affine map carrying a reference's color mean and covariance."""

    source_mean: np.ndarray
    target_mean: np.ndarray
    matrix: np.ndarray
    regularization_epsilon: float
    diagnostics: FitDiagnostics

    def __post_init__(self) -> None:
        if not np.isfinite(self.matrix).all():
            raise DataError("alignment matrix has non-finite entries")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {
            "source_mean": self.source_mean.tolist(),
            "target_mean": self.target_mean.tolist(),
            "matrix": self.matrix.tolist(),
            "regularization_epsilon": self.regularization_epsilon,
            "diagnostics": {
                "source_covariance": self.diagnostics.source_covariance.tolist(),
                "target_covariance": self.diagnostics.target_covariance.tolist(),
                "eigenvalue_floors_applied": self.diagnostics.eigenvalue_floors_applied,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AlignmentTransform":
        diag = doc["diagnostics"]
        return cls(
            source_mean=np.asarray(doc["source_mean"], dtype=np.float64),
            target_mean=np.asarray(doc["target_mean"], dtype=np.float64),
            matrix=np.asarray(doc["matrix"], dtype=np.float64),
            regularization_epsilon=float(doc["regularization_epsilon"]),
            diagnostics=FitDiagnostics(
                source_covariance=np.asarray(diag["source_covariance"], dtype=np.float64),
                target_covariance=np.asarray(diag["target_covariance"], dtype=np.float64),
                eigenvalue_floors_applied=int(diag["eigenvalue_floors_applied"]),
            ),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AlignmentTransform":
        with open(os.fspath(path), "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Histogram matching
# ---------------------------------------------------------------------------


def _match_band(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Map 1-D source values onto the reference distribution."""
    n_src = source.size
    n_ref = reference.size
    # Average 0-based rank per distinct value: occurrences of the k-th unique
    # value occupy sorted positions [start, start + count), so their shared
    # rank is start + (count - 1) / 2.
    unique, inverse, counts = np.unique(source, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts[:-1])))
    average_rank = starts + (counts - 1) / 2.0
    # Position in the sorted reference; the (n_ref-1)/(n_src-1) factor is 1.0
    # exactly for equal-size inputs, keeping integer ranks on grid points.
    positions = average_rank * ((n_ref - 1) / (n_src - 1))
    sorted_ref = np.sort(reference.astype(np.float64))
    mapped = np.interp(positions, np.arange(n_ref, dtype=np.float64), sorted_ref)
    return mapped[inverse]


def histogram_match(
    source: MultiBandRaster, reference: MultiBandRaster
) -> MultiBandRaster:
    """Per-band histogram specification of source onto reference (float32)."""
    if source.band_count != reference.band_count:
        raise DataError(
            f"band count mismatch: source {source.band_count}, "
            f"reference {reference.band_count}"
        )
    out = np.empty(source.pixels.shape, dtype=np.float64)
    src_invalid = source.sample_invalid_mask()
    for b in range(source.band_count):
        src_band = source.band(b)
        ref_band = reference.band(b)
        src_ok = ~src_invalid[b]
        ref_values = ref_band[~invalid_mask(ref_band, reference.nodata)]
        src_values = src_band[src_ok]
        if src_values.size < 2 or ref_values.size < 2:
            raise DataError(
                f"band {source.band_names[b]!r} needs at least 2 valid samples "
                "in source and reference"
            )
        out[b][src_ok] = _match_band(src_values, ref_values)
    result = out.astype(np.float32)
    nodata = None
    if source.nodata is not None:
        nodata = float(source.nodata)
        result[src_invalid] = nodata
    return source.with_pixels(result, nodata=nodata)


# ---------------------------------------------------------------------------
# Feature distribution matching
# ---------------------------------------------------------------------------


def _valid_pixel_matrix(raster: MultiBandRaster) -> np.ndarray:
    """(bands, n_valid) float64 matrix of pixels valid in every band."""
    ok = ~raster.pixel_invalid_mask()
    return raster.pixels[:, ok].astype(np.float64)


def _moments(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = pixels.mean(axis=1)
    centered = pixels - mean[:, None]
    covariance = centered @ centered.T / pixels.shape[1]  # population
    return mean, covariance


def _psd_power(
    covariance: np.ndarray, exponent: float, epsilon: float
) -> tuple[np.ndarray, int]:
    """Symmetric PSD matrix power via eigendecomposition with eigenvalue floor."""
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    floor = epsilon * float(np.trace(covariance)) / covariance.shape[0]
    floored = int((eigenvalues < floor).sum())
    eigenvalues = np.maximum(eigenvalues, floor)
    if (eigenvalues <= 0).any():
        raise DataError("covariance is entirely degenerate (zero variance)")
    powered = (eigenvectors * eigenvalues**exponent) @ eigenvectors.T
    return powered, floored


def fit_fdm(
    source: MultiBandRaster,
    reference: MultiBandRaster,
    epsilon: float = DEFAULT_REGULARIZATION,
) -> AlignmentTransform:
    """Fit the affine map transporting source moments onto reference moments."""
    if source.band_count != reference.band_count:
        raise DataError(
            f"band count mismatch: source {source.band_count}, "
            f"reference {reference.band_count}"
        )
    c = source.band_count
    src = _valid_pixel_matrix(source)
    ref = _valid_pixel_matrix(reference)
    for label, mat in (("source", src), ("reference", ref)):
        if mat.shape[1] < c + 1:
            raise DataError(
                f"{label} has {mat.shape[1]} valid pixels; need at least {c + 1}"
            )
    source_mean, source_cov = _moments(src)
    target_mean, target_cov = _moments(ref)
    if not (np.isfinite(source_cov).all() and np.isfinite(target_cov).all()):
        raise DataError("non-finite covariance entries")
    target_root, floors_t = _psd_power(target_cov, 0.5, epsilon)
    source_inv_root, floors_s = _psd_power(source_cov, -0.5, epsilon)
    matrix = target_root @ source_inv_root
    return AlignmentTransform(
        source_mean=source_mean,
        target_mean=target_mean,
        matrix=matrix,
        regularization_epsilon=epsilon,
        diagnostics=FitDiagnostics(
            source_covariance=source_cov,
            target_covariance=target_cov,
            eigenvalue_floors_applied=floors_t + floors_s,
        ),
    )


def apply_fdm(raster: MultiBandRaster, transform: AlignmentTransform) -> MultiBandRaster:
    """Apply a fitted transform pixel-wise: y = A (x - mu_src) + mu_ref."""
    if raster.band_count != transform.dimension:
        raise DataError(
            f"raster has {raster.band_count} bands but transform is "
            f"{transform.dimension}-dimensional"
        )
    c, h, w = raster.pixels.shape
    flat = raster.pixels.reshape(c, h * w).astype(np.float64)
    shifted = flat - transform.source_mean[:, None]
    mapped = transform.matrix @ shifted + transform.target_mean[:, None]
    result = mapped.reshape(c, h, w).astype(np.float32)
    nodata = None
    if raster.nodata is not None:
        nodata = float(raster.nodata)
        # Mixing spreads any invalid band into the whole pixel vector.
        result[:, raster.pixel_invalid_mask()] = nodata
    return raster.with_pixels(result, nodata=nodata)
