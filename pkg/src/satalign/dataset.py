"""Patch-grid extraction, dataset statistics, and min-max normalization.

Tiling is non-overlapping, anchored at the upper-left corner, emitted in
row-major order; excess pixels on the right/bottom edges are discarded.
Statistics stream through the data once with a numerically stable merge of
partial (count, mean, M2, min, max) states, then histograms are filled over
the global [min, max] range so per-band counts add up to the overall counts.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import raster_io
from .errors import DataError
from .raster import MultiBandRaster, invalid_mask

DEFAULT_HISTOGRAM_BINS = 256


@dataclass(frozen=True)
class PatchGrid:
    """Geometry of a non-overlapping patch tiling."""

    patch_size: int
    rows: int
    cols: int
    discarded_right: int
    discarded_bottom: int

    @property
    def patch_count(self) -> int:
        return self.rows * self.cols

    @classmethod
    def for_size(cls, width: int, height: int, patch_size: int) -> "PatchGrid":
        if patch_size < 1:
            raise DataError(f"patch size must be positive, got {patch_size}")
        if patch_size > width or patch_size > height:
            raise DataError(
                f"patch size {patch_size} exceeds raster dimensions {width}x{height}"
            )
        cols = width // patch_size
        rows = height // patch_size
        return cls(
            patch_size=patch_size,
            rows=rows,
            cols=cols,
            discarded_right=width - cols * patch_size,
            discarded_bottom=height - rows * patch_size,
        )


def extract_patches(
    raster: MultiBandRaster, patch_size: int
) -> tuple[PatchGrid, list[MultiBandRaster]]:
    """Crop a raster into patch_size x patch_size windows (row-major).

    Patch pixels are zero-copy views of the source raster. Each patch carries
    the parent geo metadata plus its grid position and pixel offset.
    """
    grid = PatchGrid.for_size(raster.width, raster.height, patch_size)
    patches: list[MultiBandRaster] = []
    for row in range(grid.rows):
        y = row * patch_size
        for col in range(grid.cols):
            x = col * patch_size
            meta = dict(raster.geo_meta)
            meta.update(
                patch_row=row,
                patch_col=col,
                patch_x_offset=x,
                patch_y_offset=y,
            )
            window = raster.pixels[:, y : y + patch_size, x : x + patch_size]
            patches.append(raster.with_pixels(window, geo_meta=meta))
    return grid, patches


class RunningStats:
    """Streaming count/mean/M2/min/max over one value stream.

    Batches fold in through the parallel variance-combination rule, so
    partial accumulators can merge in any grouping (associative up to
    floating-point rounding).
    """

    __slots__ = ("count", "mean", "m2", "minimum", "maximum")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.minimum = math.inf
        self.maximum = -math.inf

    def add_values(self, values: np.ndarray) -> None:
        values = values.reshape(-1)
        if values.size == 0:
            return
        batch = RunningStats()
        batch.count = int(values.size)
        batch.mean = float(values.mean(dtype=np.float64))
        batch.m2 = float(
            np.square(values.astype(np.float64) - batch.mean).sum(dtype=np.float64)
        )
        batch.minimum = float(values.min())
        batch.maximum = float(values.max())
        self.merge(batch)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean
            self.m2 = other.m2
            self.minimum = other.minimum
            self.maximum = other.maximum
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        self.mean = self.mean + delta * other.count / total
        self.count = total
        self.minimum = min(self.minimum, other.minimum)
        self.maximum = max(self.maximum, other.maximum)
        return self

    @property
    def variance(self) -> float:
        """Population variance (divide by N)."""
        if self.count == 0:
            raise DataError("no samples accumulated")
        return self.m2 / self.count

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class BandSummary:
    name: str
    minimum: float
    maximum: float
    mean: float
    std: float
    sample_count: int
    histogram_counts: tuple[int, ...] = ()
    bin_edges: tuple[float, ...] = ()


@dataclass(frozen=True)
class BandStatistics:
    """Per-band and overall dataset statistics (the stats manifest)."""

    per_band: tuple[BandSummary, ...]
    overall: BandSummary
    bins: int = DEFAULT_HISTOGRAM_BINS

    @property
    def sample_count(self) -> int:
        return self.overall.sample_count

    @property
    def band_count(self) -> int:
        return len(self.per_band)

    def to_dict(self) -> dict:
        def entry(s: BandSummary) -> dict:
            return {
                "name": s.name,
                "min": s.minimum,
                "max": s.maximum,
                "mean": s.mean,
                "std": s.std,
                "sample_count": s.sample_count,
                "histogram": {
                    "counts": list(s.histogram_counts),
                    "bin_edges": list(s.bin_edges),
                },
            }

        return {
            "bins": self.bins,
            "sample_count": self.sample_count,
            "overall": entry(self.overall),
            "per_band": [entry(s) for s in self.per_band],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BandStatistics":
        def entry(d: dict) -> BandSummary:
            hist = d.get("histogram", {})
            return BandSummary(
                name=d["name"],
                minimum=d["min"],
                maximum=d["max"],
                mean=d["mean"],
                std=d["std"],
                sample_count=d["sample_count"],
                histogram_counts=tuple(hist.get("counts", ())),
                bin_edges=tuple(hist.get("bin_edges", ())),
            )

        return cls(
            per_band=tuple(entry(d) for d in doc["per_band"]),
            overall=entry(doc["overall"]),
            bins=doc.get("bins", DEFAULT_HISTOGRAM_BINS),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BandStatistics":
        with open(os.fspath(path), "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _valid_band_values(raster: MultiBandRaster, band: int) -> np.ndarray:
    values = raster.band(band)
    if raster.nodata is None:
        return values.reshape(-1)
    return values[~invalid_mask(values, raster.nodata)]


def compute_stats(
    rasters: Sequence[MultiBandRaster], bins: int = DEFAULT_HISTOGRAM_BINS
) -> BandStatistics:
    """Min/max/mean/std and histograms per band and over all bands.

    Nodata samples are excluded everywhere. Histograms for every entry share
    the overall [min, max] range, so per-band counts sum to the overall
    histogram. Requires a materialized sequence (two sweeps: moments, bins).
    """
    rasters = list(rasters)
    if not rasters:
        raise DataError("compute_stats needs at least one raster")
    if bins < 1:
        raise DataError(f"bins must be positive, got {bins}")
    band_count = rasters[0].band_count
    names = rasters[0].band_names
    for r in rasters:
        if r.band_count != band_count or r.encoding != rasters[0].encoding:
            raise DataError("all rasters must share band count and encoding")

    accumulators = [RunningStats() for _ in range(band_count)]
    for r in rasters:
        for b in range(band_count):
            accumulators[b].add_values(_valid_band_values(r, b))

    overall_acc = RunningStats()
    for acc in accumulators:
        overall_acc.merge(acc)
    if overall_acc.count == 0:
        raise DataError("no valid samples (all nodata)")

    global_range = (overall_acc.minimum, overall_acc.maximum)
    histograms = [np.zeros(bins, dtype=np.int64) for _ in range(band_count)]
    edges = np.histogram_bin_edges([], bins=bins, range=global_range)
    for r in rasters:
        for b in range(band_count):
            counts, _ = np.histogram(_valid_band_values(r, b), bins=edges)
            histograms[b] += counts

    def summary(name: str, acc: RunningStats, counts: np.ndarray) -> BandSummary:
        return BandSummary(
            name=name,
            minimum=acc.minimum,
            maximum=acc.maximum,
            mean=acc.mean,
            std=acc.std,
            sample_count=acc.count,
            histogram_counts=tuple(int(c) for c in counts),
            bin_edges=tuple(float(e) for e in edges),
        )

    per_band = tuple(
        summary(names[b], accumulators[b], histograms[b]) for b in range(band_count)
    )
    overall = summary("overall", overall_acc, sum(histograms))
    return BandStatistics(per_band=per_band, overall=overall, bins=bins)


def _scopes(
    raster: MultiBandRaster, stats: BandStatistics, mode: str
) -> list[tuple[float, float]]:
    if mode not in ("global", "per_band"):
        raise DataError(f"normalization mode must be 'global' or 'per_band', got {mode!r}")
    if stats.band_count != raster.band_count:
        raise DataError(
            f"statistics cover {stats.band_count} bands but raster has {raster.band_count}"
        )
    if mode == "global":
        entries = [stats.overall] * raster.band_count
    else:
        entries = list(stats.per_band)
    scopes = []
    for entry in entries:
        if not entry.maximum > entry.minimum:
            raise DataError(
                f"degenerate normalization scope for {entry.name!r}: "
                f"min == max == {entry.minimum}"
            )
        scopes.append((entry.minimum, entry.maximum))
    return scopes


def minmax_normalize(
    raster: MultiBandRaster, stats: BandStatistics, mode: str = "per_band"
) -> MultiBandRaster:
    """Map samples to [0, 1] via (x - min) / (max - min), clamping outliers.

    mode="per_band" scales each band by its own min/max (channel-wise);
    mode="global" uses the overall range for every band.
    """
    scopes = _scopes(raster, stats, mode)
    values = raster.pixels.astype(np.float64)
    out = np.empty_like(values)
    for b, (low, high) in enumerate(scopes):
        out[b] = np.clip((values[b] - low) / (high - low), 0.0, 1.0)
    result = out.astype(np.float32)
    nodata = raster.nodata
    if nodata is not None:
        nodata = float(nodata)
        result[raster.sample_invalid_mask()] = nodata
    return raster.with_pixels(result, nodata=nodata)


def denormalize(
    raster: MultiBandRaster, stats: BandStatistics, mode: str = "per_band"
) -> MultiBandRaster:
    """Exact affine inverse of minmax_normalize for unclamped values."""
    scopes = _scopes(raster, stats, mode)
    values = raster.pixels.astype(np.float64)
    out = np.empty_like(values)
    for b, (low, high) in enumerate(scopes):
        out[b] = values[b] * (high - low) + low
    result = out.astype(np.float32)
    nodata = raster.nodata
    if nodata is not None:
        nodata = float(nodata)
        result[raster.sample_invalid_mask()] = nodata
    return raster.with_pixels(result, nodata=nodata)


# ---------------------------------------------------------------------------
# Patch set persistence (TIFF files plus a JSON manifest)
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def patch_id(row: int, col: int, cols: int) -> str:
    return f"p{row * cols + col:05d}"


def write_patch_set(
    out_dir: str | os.PathLike,
    grid: PatchGrid,
    patches: Sequence[MultiBandRaster],
    source: str,
    compression: str | None = None,
) -> Path:
    """Write patches as TIFFs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, patch in enumerate(patches):
        row, col = divmod(index, grid.cols)
        pid = patch_id(row, col, grid.cols)
        filename = f"{pid}.tif"
        raster_io.write_raster(patch, out / filename, compression=compression)
        entries.append(
            {
                "id": pid,
                "row": row,
                "col": col,
                "x_offset": col * grid.patch_size,
                "y_offset": row * grid.patch_size,
                "file": filename,
            }
        )
    manifest = {
        "source": source,
        "patch_size": grid.patch_size,
        "grid": {
            "rows": grid.rows,
            "cols": grid.cols,
            "discarded_right": grid.discarded_right,
            "discarded_bottom": grid.discarded_bottom,
        },
        "band_names": list(patches[0].band_names) if patches else [],
        "patches": entries,
    }
    manifest_path = out / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def read_patch_manifest(patch_dir: str | os.PathLike) -> dict:
    path = Path(patch_dir) / MANIFEST_NAME
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"missing patch manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"invalid patch manifest {path}: {exc}") from exc


def iter_patch_files(
    patch_dir: str | os.PathLike, manifest: dict | None = None
) -> Iterator[tuple[dict, Path]]:
    """Yield (manifest entry, file path) ordered by patch id."""
    base = Path(patch_dir)
    manifest = manifest or read_patch_manifest(base)
    for entry in sorted(manifest["patches"], key=lambda e: e["id"]):
        yield entry, base / entry["file"]
