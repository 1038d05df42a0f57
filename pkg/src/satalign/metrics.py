"""Band-wise and aggregate image quality evaluation.

Provides MSE/RMSE/MAE, PSNR, Gaussian-window SSIM, signed difference maps,
multi-source histograms with shared binning, and directory-level evaluation
of predicted patch sets against reference patch sets (with an optional
lower-resolution baseline that is upscaled for comparison but binned at its
native resolution for histograms).

Pixels where either side is nodata are excluded from every statistic. PSNR of
a zero-error pair is +inf in memory and serialized as null plus an explicit
boolean flag.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import raster_io
from .dataset import iter_patch_files, read_patch_manifest
from .errors import DataError
from .raster import MultiBandRaster, invalid_mask
from .resample import ResampleSpec, resample

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


# ---------------------------------------------------------------------------
# Core pixel-wise errors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandMetrics:
    band_name: str
    mse: float
    rmse: float
    mae: float
    sample_count: int
    psnr: float | None = None
    ssim: float | None = None

    def to_dict(self) -> dict:
        doc = {
            "band": self.band_name,
            "mse": self.mse,
            "rmse": self.rmse,
            "mae": self.mae,
            "sample_count": self.sample_count,
        }
        if self.psnr is not None:
            infinite = math.isinf(self.psnr)
            doc["psnr_db"] = None if infinite else self.psnr
            doc["psnr_infinite"] = infinite
        if self.ssim is not None:
            doc["ssim"] = self.ssim
        return doc


@dataclass(frozen=True)
class MetricReport:
    """Per-band metrics plus an aggregate row pooling all bands' pixels."""

    per_band: tuple[BandMetrics, ...]
    aggregate: BandMetrics
    data_range: float | None = None

    def to_dict(self) -> dict:
        return {
            "data_range": self.data_range,
            "aggregate": self.aggregate.to_dict(),
            "per_band": [m.to_dict() for m in self.per_band],
        }


def _check_comparable(pred: MultiBandRaster, ref: MultiBandRaster) -> None:
    if pred.pixels.shape != ref.pixels.shape:
        raise DataError(
            f"dimension mismatch: prediction {pred.pixels.shape} vs "
            f"reference {ref.pixels.shape}"
        )


def _joint_valid(pred: MultiBandRaster, ref: MultiBandRaster) -> np.ndarray:
    return ~(pred.sample_invalid_mask() | ref.sample_invalid_mask())


def _errors_from_sums(
    name: str, sq_sum: float, abs_sum: float, count: int
) -> BandMetrics:
    if count == 0:
        raise DataError(f"no valid pixels to compare for {name!r}")
    mse = sq_sum / count
    return BandMetrics(
        band_name=name,
        mse=mse,
        rmse=math.sqrt(mse),
        mae=abs_sum / count,
        sample_count=count,
    )


def pixel_errors(pred: MultiBandRaster, ref: MultiBandRaster) -> MetricReport:
    """MSE, RMSE, and MAE per band and pooled over all bands."""
    _check_comparable(pred, ref)
    valid = _joint_valid(pred, ref)
    diff = pred.pixels.astype(np.float64) - ref.pixels.astype(np.float64)
    per_band = []
    total_sq = total_abs = 0.0
    total_n = 0
    for b in range(pred.band_count):
        err = diff[b][valid[b]]
        sq = float(np.square(err).sum())
        ab = float(np.abs(err).sum())
        per_band.append(_errors_from_sums(pred.band_names[b], sq, ab, err.size))
        total_sq += sq
        total_abs += ab
        total_n += err.size
    aggregate = _errors_from_sums("all", total_sq, total_abs, total_n)
    return MetricReport(per_band=tuple(per_band), aggregate=aggregate)


def psnr_from_mse(mse: float, data_range: float) -> float:
    if not data_range > 0:
        raise DataError(f"data_range must be positive, got {data_range}")
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def psnr(
    pred: MultiBandRaster, ref: MultiBandRaster, data_range: float
) -> MetricReport:
    """Peak signal-to-noise ratio in dB, per band and aggregate."""
    errors = pixel_errors(pred, ref)
    per_band = tuple(
        BandMetrics(
            band_name=m.band_name,
            mse=m.mse,
            rmse=m.rmse,
            mae=m.mae,
            sample_count=m.sample_count,
            psnr=psnr_from_mse(m.mse, data_range),
        )
        for m in errors.per_band
    )
    agg = errors.aggregate
    aggregate = BandMetrics(
        band_name=agg.band_name,
        mse=agg.mse,
        rmse=agg.rmse,
        mae=agg.mae,
        sample_count=agg.sample_count,
        psnr=psnr_from_mse(agg.mse, data_range),
    )
    return MetricReport(per_band=per_band, aggregate=aggregate, data_range=data_range)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def _filter_valid(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable windowed sum over fully-interior window positions."""
    size = kernel.size
    rows = sliding_window_view(image, size, axis=1) @ kernel
    return sliding_window_view(rows, size, axis=0) @ kernel


def ssim(
    pred: MultiBandRaster,
    ref: MultiBandRaster,
    data_range: float,
    window_size: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
) -> list[float]:
    """Mean structural similarity per band over valid window positions.

    Uses a Gaussian window (default 11x11, sigma 1.5), population local
    moments, and stabilizers C1 = (k1 * range)^2, C2 = (k2 * range)^2.
    Windows touching a nodata pixel on either side are excluded from the mean.
    """
    _check_comparable(pred, ref)
    if not data_range > 0:
        raise DataError(f"data_range must be positive, got {data_range}")
    if pred.height < window_size or pred.width < window_size:
        raise DataError(
            f"image {pred.width}x{pred.height} smaller than the "
            f"{window_size}x{window_size} SSIM window"
        )
    kernel = _gaussian_kernel(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    invalid = pred.sample_invalid_mask() | ref.sample_invalid_mask()
    results = []
    for b in range(pred.band_count):
        x = pred.band(b).astype(np.float64)
        y = ref.band(b).astype(np.float64)
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        var_x = _filter_valid(x * x, kernel) - mu_x * mu_x
        var_y = _filter_valid(y * y, kernel) - mu_y * mu_y
        cov = _filter_valid(x * y, kernel) - mu_x * mu_y
        score = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        )
        if invalid[b].any():
            bad_count = _filter_valid(invalid[b].astype(np.float64), np.ones(window_size))
            usable = bad_count == 0
            if not usable.any():
                raise DataError(
                    f"every SSIM window in band {pred.band_names[b]!r} touches nodata"
                )
            results.append(float(score[usable].mean()))
        else:
            results.append(float(score.mean()))
    return results


def metric_report(
    pred: MultiBandRaster,
    ref: MultiBandRaster,
    data_range: float,
    with_ssim: bool = True,
) -> MetricReport:
    """Full per-band and aggregate report: MSE/RMSE/MAE/PSNR and SSIM.

    Aggregate error rows pool every band's valid pixels; the aggregate SSIM
    is the mean of the per-band SSIM values (SSIM is defined per band).
    """
    report = psnr(pred, ref, data_range)
    if not with_ssim:
        return report
    ssim_values = ssim(pred, ref, data_range)
    per_band = tuple(
        BandMetrics(
            band_name=m.band_name,
            mse=m.mse,
            rmse=m.rmse,
            mae=m.mae,
            sample_count=m.sample_count,
            psnr=m.psnr,
            ssim=s,
        )
        for m, s in zip(report.per_band, ssim_values)
    )
    agg = report.aggregate
    aggregate = BandMetrics(
        band_name=agg.band_name,
        mse=agg.mse,
        rmse=agg.rmse,
        mae=agg.mae,
        sample_count=agg.sample_count,
        psnr=agg.psnr,
        ssim=float(np.mean(ssim_values)),
    )
    return MetricReport(per_band=per_band, aggregate=aggregate, data_range=data_range)


# ---------------------------------------------------------------------------
# Difference maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffSummary:
    band_name: str
    minimum: float
    maximum: float
    mean: float
    mean_abs: float

    def to_dict(self) -> dict:
        return {
            "band": self.band_name,
            "min": self.minimum,
            "max": self.maximum,
            "mean": self.mean,
            "mean_abs": self.mean_abs,
        }


def diff_map(
    pred: MultiBandRaster, ref: MultiBandRaster
) -> tuple[MultiBandRaster, list[DiffSummary]]:
    """Signed per-band difference raster (pred - ref) plus summaries.

    Invalid pixels become NaN in the output raster; summaries cover valid
    pixels only. The final summary entry pools all bands.
    """
    _check_comparable(pred, ref)
    valid = _joint_valid(pred, ref)
    diff = pred.pixels.astype(np.float64) - ref.pixels.astype(np.float64)
    summaries = []
    all_values = []
    for b in range(pred.band_count):
        values = diff[b][valid[b]]
        if values.size == 0:
            raise DataError(f"no valid pixels in band {pred.band_names[b]!r}")
        summaries.append(
            DiffSummary(
                band_name=pred.band_names[b],
                minimum=float(values.min()),
                maximum=float(values.max()),
                mean=float(values.mean()),
                mean_abs=float(np.abs(values).mean()),
            )
        )
        all_values.append(values)
    pooled = np.concatenate(all_values)
    summaries.append(
        DiffSummary(
            band_name="all",
            minimum=float(pooled.min()),
            maximum=float(pooled.max()),
            mean=float(pooled.mean()),
            mean_abs=float(np.abs(pooled).mean()),
        )
    )
    out = diff.astype(np.float32)
    nodata = None
    if not valid.all():
        nodata = float("nan")
        out[~valid] = nodata
    raster = pred.with_pixels(out, nodata=nodata)
    return raster, summaries


# ---------------------------------------------------------------------------
# Histogram comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistogramReport:
    """Per-source counts over one shared binning of a single band."""

    band_name: str
    bin_edges: tuple[float, ...]
    entries: tuple[tuple[str, tuple[int, ...]], ...]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            labels = [label for label, _ in self.entries]
            writer.writerow(["bin_low", "bin_high"] + [f"count_{l}" for l in labels])
            for i in range(len(self.bin_edges) - 1):
                row = [repr(self.bin_edges[i]), repr(self.bin_edges[i + 1])]
                row += [str(counts[i]) for _, counts in self.entries]
                writer.writerow(row)


def histogram_compare(
    sources: Sequence[tuple[str, MultiBandRaster]], band: int, bins: int = 256
) -> HistogramReport:
    """Histogram one band of several rasters over shared bin edges."""
    if not sources:
        raise DataError("histogram_compare needs at least one raster")
    if bins < 1:
        raise DataError(f"bins must be positive, got {bins}")
    values_per_source = []
    for label, raster in sources:
        band_values = raster.band(band)
        ok = ~invalid_mask(band_values, raster.nodata)
        values = band_values[ok].astype(np.float64)
        if values.size == 0:
            raise DataError(f"source {label!r} has no valid samples in band {band}")
        values_per_source.append((label, values))
    low = min(float(v.min()) for _, v in values_per_source)
    high = max(float(v.max()) for _, v in values_per_source)
    edges = np.histogram_bin_edges([], bins=bins, range=(low, high))
    entries = []
    for label, values in values_per_source:
        counts, _ = np.histogram(values, bins=edges)
        entries.append((label, tuple(int(c) for c in counts)))
    band_name = sources[0][1].band_names[band]
    return HistogramReport(
        band_name=band_name,
        bin_edges=tuple(float(e) for e in edges),
        entries=tuple(entries),
    )


# ---------------------------------------------------------------------------
# Patch set evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEvaluation:
    patch_ids: tuple[str, ...]
    patch_reports: dict[str, MetricReport]
    baseline_reports: dict[str, MetricReport]
    diff_summaries: dict[str, list[DiffSummary]]
    corpus: MetricReport
    baseline_corpus: MetricReport | None
    baseline_resampled: bool
    metrics_csv: Path
    summary_json: Path


class _CorpusAccumulator:
    """Pools per-patch error sums into corpus-level metrics per band."""

    def __init__(self) -> None:
        self.band_names: tuple[str, ...] = ()
        self.sums: dict[str, list[float]] = {}
        self.ssims: dict[str, list[float]] = {}

    def add(self, report: MetricReport) -> None:
        if not self.band_names:
            self.band_names = tuple(m.band_name for m in report.per_band)
            for name in self.band_names:
                self.sums[name] = [0.0, 0.0, 0]
                self.ssims[name] = []
        for m in report.per_band:
            entry = self.sums[m.band_name]
            entry[0] += m.mse * m.sample_count
            entry[1] += m.mae * m.sample_count
            entry[2] += m.sample_count
            if m.ssim is not None:
                self.ssims[m.band_name].append(m.ssim)

    def finish(self, data_range: float) -> MetricReport:
        per_band = []
        total_sq = total_abs = 0.0
        total_n = 0
        for name in self.band_names:
            sq_sum, abs_sum, count = self.sums[name]
            base = _errors_from_sums(name, sq_sum, abs_sum, count)
            per_band.append(
                BandMetrics(
                    band_name=name,
                    mse=base.mse,
                    rmse=base.rmse,
                    mae=base.mae,
                    sample_count=count,
                    psnr=psnr_from_mse(base.mse, data_range),
                    ssim=float(np.mean(self.ssims[name])) if self.ssims[name] else None,
                )
            )
            total_sq += sq_sum
            total_abs += abs_sum
            total_n += count
        agg = _errors_from_sums("all", total_sq, total_abs, total_n)
        band_ssims = [m.ssim for m in per_band if m.ssim is not None]
        return MetricReport(
            per_band=tuple(per_band),
            aggregate=BandMetrics(
                band_name="all",
                mse=agg.mse,
                rmse=agg.rmse,
                mae=agg.mae,
                sample_count=total_n,
                psnr=psnr_from_mse(agg.mse, data_range),
                ssim=float(np.mean(band_ssims)) if band_ssims else None,
            ),
            data_range=data_range,
        )


def _visual_range(values: np.ndarray) -> tuple[float, float]:
    low = float(values.min())
    high = float(values.max())
    if not high > low:
        high = low + 1.0
    return low, high


def _export_band_artifacts(
    out_dir: Path,
    band_index: int,
    band_name: str,
    pred: MultiBandRaster,
    ref: MultiBandRaster,
    baseline: MultiBandRaster | None,
    diff: MultiBandRaster,
    bins: int,
) -> None:
    ref_band = ref.band(band_index)
    ok = ~invalid_mask(ref_band, ref.nodata)
    clamp = _visual_range(ref_band[ok]) if ok.any() else (0.0, 1.0)
    trio = (band_index,) * 3
    safe = band_name.replace(os.sep, "_")
    raster_io.export_png(ref, trio, clamp, out_dir / f"{safe}_reference.png")
    raster_io.export_png(pred, trio, clamp, out_dir / f"{safe}_prediction.png")

    diff_band = diff.band(band_index)
    finite = diff_band[np.isfinite(diff_band)]
    radius = float(np.abs(finite).max()) if finite.size else 1.0
    if radius == 0.0:
        radius = 1.0
    raster_io.export_png(
        diff, trio, (-radius, radius), out_dir / f"{safe}_difference.png"
    )
    one_band = MultiBandRaster(
        pixels=diff.pixels[band_index : band_index + 1],
        band_names=(band_name,),
        nodata=diff.nodata,
        geo_meta=dict(diff.geo_meta),
    )
    raster_io.write_raster(one_band, out_dir / f"{safe}_difference.tif")

    histogram_sources = [("reference", ref), ("prediction", pred)]
    if baseline is not None:
        histogram_sources.append(("baseline", baseline))
    report = histogram_compare(histogram_sources, band_index, bins=bins)
    report.to_csv(out_dir / f"{safe}_histogram.csv")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def _metric_rows(patch: str, source: str, report: MetricReport) -> list[list[str]]:
    rows = []
    for m in list(report.per_band) + [report.aggregate]:
        infinite = m.psnr is not None and math.isinf(m.psnr)
        rows.append(
            [
                patch,
                source,
                m.band_name,
                str(m.sample_count),
                _fmt(m.mse),
                _fmt(m.rmse),
                _fmt(m.mae),
                "" if m.psnr is None or infinite else repr(m.psnr),
                str(infinite).lower(),
                _fmt(m.ssim),
            ]
        )
    return rows


def evaluate_prediction_set(
    pred_dir: str | os.PathLike,
    ref_dir: str | os.PathLike,
    baseline_dir: str | os.PathLike | None = None,
    *,
    data_range: float,
    out_dir: str | os.PathLike,
    bins: int = 256,
    kernel: str = "lanczos3",
    export_artifacts: bool = True,
    threads: int = 1,
) -> CorpusEvaluation:
    """Evaluate a directory of predicted patches against reference patches.

    Patch sets are paired through their manifests (matched by patch id, in
    deterministic id order). A baseline set at a coarser resolution is
    upscaled to the reference size with the classical resampler before being
    scored, but its histogram is taken at native resolution. Outputs: a CSV
    with one row per patch and band plus corpus rows, a JSON corpus summary,
    and per-patch/per-band artifact sets (reference and prediction PNGs,
    shared-bin histogram CSV, signed difference map PNG and TIFF).
    """
    if not data_range > 0:
        raise DataError(f"data_range must be positive, got {data_range}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    pred_manifest = read_patch_manifest(pred_dir)
    ref_manifest = read_patch_manifest(ref_dir)
    pred_files = dict(
        (e["id"], p) for e, p in iter_patch_files(pred_dir, pred_manifest)
    )
    ref_files = dict((e["id"], p) for e, p in iter_patch_files(ref_dir, ref_manifest))
    if set(pred_files) != set(ref_files):
        only_pred = sorted(set(pred_files) - set(ref_files))
        only_ref = sorted(set(ref_files) - set(pred_files))
        raise DataError(
            "patch manifests do not match: "
            f"prediction-only ids {only_pred}, reference-only ids {only_ref}"
        )
    baseline_files: dict[str, Path] = {}
    if baseline_dir is not None:
        baseline_manifest = read_patch_manifest(baseline_dir)
        baseline_files = dict(
            (e["id"], p) for e, p in iter_patch_files(baseline_dir, baseline_manifest)
        )
        missing_ids = sorted(set(pred_files) - set(baseline_files))
        if missing_ids:
            raise DataError(f"baseline manifest lacks patch ids: {missing_ids}")

    patch_ids = tuple(sorted(pred_files))
    missing = [
        str(path)
        for files in (pred_files, ref_files, baseline_files)
        for pid, path in sorted(files.items())
        if not path.exists()
    ]
    if missing:
        raise DataError(f"missing patch files: {missing}")

    def evaluate_one(pid: str):
        pred = raster_io.read_raster(pred_files[pid])
        ref = raster_io.read_raster(ref_files[pid])
        _check_comparable(pred, ref)
        baseline = None
        baseline_report = None
        resampled = False
        if baseline_files:
            baseline = raster_io.read_raster(baseline_files[pid])
            scored = baseline
            if (baseline.width, baseline.height) != (ref.width, ref.height):
                scored = resample(
                    baseline,
                    ResampleSpec(
                        target_width=ref.width,
                        target_height=ref.height,
                        kernel=kernel,
                    ),
                )
                resampled = True
            baseline_report = metric_report(scored, ref, data_range)
        report = metric_report(pred, ref, data_range)
        diff, summaries = diff_map(pred, ref)
        if export_artifacts:
            patch_out = out / "artifacts" / pid
            patch_out.mkdir(parents=True, exist_ok=True)
            for b, name in enumerate(pred.band_names):
                _export_band_artifacts(
                    patch_out, b, name, pred, ref, baseline, diff, bins
                )
        return pid, report, baseline_report, summaries, resampled

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate_one, patch_ids))
    else:
        results = [evaluate_one(pid) for pid in patch_ids]

    patch_reports: dict[str, MetricReport] = {}
    baseline_reports: dict[str, MetricReport] = {}
    diff_summaries: dict[str, list[DiffSummary]] = {}
    baseline_resampled = False
    pred_acc = _CorpusAccumulator()
    base_acc = _CorpusAccumulator()
    for pid, report, baseline_report, summaries, resampled in results:
        baseline_resampled = baseline_resampled or resampled
        patch_reports[pid] = report
        diff_summaries[pid] = summaries
        pred_acc.add(report)
        if baseline_report is not None:
            baseline_reports[pid] = baseline_report
            base_acc.add(baseline_report)

    corpus = pred_acc.finish(data_range)
    baseline_corpus = base_acc.finish(data_range) if baseline_reports else None

    metrics_csv = out / "metrics.csv"
    with open(metrics_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "patch_id",
                "source",
                "band",
                "sample_count",
                "mse",
                "rmse",
                "mae",
                "psnr_db",
                "psnr_infinite",
                "ssim",
            ]
        )
        for pid in patch_ids:
            writer.writerows(_metric_rows(pid, "prediction", patch_reports[pid]))
            if pid in baseline_reports:
                writer.writerows(_metric_rows(pid, "baseline", baseline_reports[pid]))
        writer.writerows(_metric_rows("__corpus__", "prediction", corpus))
        if baseline_corpus is not None:
            writer.writerows(_metric_rows("__corpus__", "baseline", baseline_corpus))

    summary_json = out / "summary.json"
    summary = {
        "data_range": data_range,
        "patch_count": len(patch_ids),
        "baseline_resampled": baseline_resampled,
        "corpus": corpus.to_dict(),
        "baseline_corpus": None if baseline_corpus is None else baseline_corpus.to_dict(),
        "diff_summaries": {
            pid: [s.to_dict() for s in diff_summaries[pid]] for pid in patch_ids
        },
    }
    with open(summary_json, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return CorpusEvaluation(
        patch_ids=patch_ids,
        patch_reports=patch_reports,
        baseline_reports=baseline_reports,
        diff_summaries=diff_summaries,
        corpus=corpus,
        baseline_corpus=baseline_corpus,
        baseline_resampled=baseline_resampled,
        metrics_csv=metrics_csv,
        summary_json=summary_json,
    )
