"""Command-line orchestration of the raster preparation pipeline.

Subcommands: tile, stats, reflectance, align, resample, evaluate, synth,
split, pipeline. Exit codes: 0 success, 2 configuration error, 3 data error,
4 internal error.

The pipeline command reads a plain ``key = value`` config file; values are
overridden first by SATALIGN_<KEY> environment variables and then by command
line flags. Reports and manifests never embed timestamps, so re-running with
the same inputs, config, and seed reproduces them byte for byte; wall-clock
information lives only in the run report's run_log block, which is excluded
from the config hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, raster_io
from .align import AlignmentTransform, apply_fdm, fit_fdm, histogram_match
from .dataset import (
    compute_stats,
    extract_patches,
    iter_patch_files,
    minmax_normalize,
    read_patch_manifest,
    write_patch_set,
)
from .errors import ConfigError, DataError, SatalignError
from .metrics import evaluate_prediction_set
from .radiometry import (
    dn_to_radiance,
    dn_to_surface,
    load_radiometric_params,
    radiance_to_toa,
)
from .raster import ENCODING_INT16
from .resample import ResampleSpec, resample
from .synth import DistortionSpec, make_pair


def _pmap(fn, items, threads: int) -> list:
    """Order-preserving map, optionally fanned out over worker threads."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Simple subcommands
# ---------------------------------------------------------------------------


def cmd_tile(args) -> int:
    raster = raster_io.read_raster(args.input)
    grid, patches = extract_patches(raster, args.patch_size)
    manifest = write_patch_set(
        args.output_dir, grid, patches, source=os.path.basename(args.input)
    )
    print(
        f"tiled {raster.width}x{raster.height} into {grid.rows}x{grid.cols} = "
        f"{grid.patch_count} patches of {args.patch_size}px "
        f"(discarded {grid.discarded_right}px right, {grid.discarded_bottom}px bottom)"
    )
    print(f"manifest: {manifest}")
    return 0


def _load_input_rasters(inputs: list[str]) -> list:
    rasters = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            for _, patch_path in iter_patch_files(path):
                rasters.append(raster_io.read_raster(patch_path))
        else:
            rasters.append(raster_io.read_raster(path))
    return rasters


def cmd_stats(args) -> int:
    rasters = _load_input_rasters(args.inputs)
    stats = compute_stats(rasters, bins=args.bins)
    stats.save(args.output)
    o = stats.overall
    print(
        f"{len(rasters)} raster(s), {o.sample_count} samples: "
        f"min {o.minimum:g} max {o.maximum:g} mean {o.mean:g} std {o.std:g}"
    )
    print(f"stats manifest: {args.output}")
    return 0


def cmd_reflectance(args) -> int:
    raster = raster_io.read_raster(args.input)
    params = load_radiometric_params(args.params, raster.band_names)
    if args.stage == "radiance":
        converted = dn_to_radiance(raster, params)
    elif args.stage == "toa":
        converted = radiance_to_toa(dn_to_radiance(raster, params), params)
    else:
        converted = dn_to_surface(raster, params)
    raster_io.write_raster(converted, args.output)
    print(f"wrote {args.stage} raster: {args.output}")
    return 0


def cmd_align(args) -> int:
    source = raster_io.read_raster(args.source)
    if args.apply_transform:
        transform = AlignmentTransform.load(args.apply_transform)
        aligned = apply_fdm(source, transform)
    else:
        if not args.reference:
            raise ConfigError("--reference is required unless --apply-transform is given")
        reference = raster_io.read_raster(args.reference)
        if args.method == "hm":
            aligned = histogram_match(source, reference)
        else:
            transform = fit_fdm(source, reference)
            if args.transform_out:
                transform.save(args.transform_out)
                print(f"transform: {args.transform_out}")
            aligned = apply_fdm(source, transform)
    raster_io.write_raster(aligned, args.output)
    print(f"aligned raster: {args.output}")
    return 0


def cmd_resample(args) -> int:
    raster = raster_io.read_raster(args.input)
    if args.scale is not None:
        if not args.scale > 0:
            raise ConfigError(f"--scale must be positive, got {args.scale}")
        width = max(1, round(raster.width * args.scale))
        height = max(1, round(raster.height * args.scale))
    elif args.width and args.height:
        width, height = args.width, args.height
    else:
        raise ConfigError("give either --scale or both --width and --height")
    spec = ResampleSpec(target_width=width, target_height=height, kernel=args.kernel)
    raster_io.write_raster(resample(raster, spec), args.output)
    print(f"resampled {raster.width}x{raster.height} -> {width}x{height}: {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    result = evaluate_prediction_set(
        args.predictions,
        args.references,
        args.baseline,
        data_range=args.data_range,
        out_dir=args.output_dir,
        bins=args.bins,
        kernel=args.kernel,
        export_artifacts=not args.no_artifacts,
        threads=args.threads,
    )
    agg = result.corpus.aggregate
    psnr_txt = "inf" if agg.psnr is None else f"{agg.psnr:.4f}"
    print(
        f"evaluated {len(result.patch_ids)} patches: "
        f"corpus MSE {agg.mse:.6g} PSNR {psnr_txt} dB SSIM {agg.ssim:.4f}"
    )
    print(f"metrics: {result.metrics_csv}")
    print(f"summary: {result.summary_json}")
    return 0


def cmd_synth(args) -> int:
    hr = raster_io.read_raster(args.input)
    mixing = None
    if args.mixing:
        with open(args.mixing, "r", encoding="utf-8") as fh:
            mixing = json.load(fh)
    spec = DistortionSpec(
        gain=_parse_float_list(args.gain),
        bias=_parse_float_list(args.bias),
        mixing=mixing,
        gamma=_parse_float_list(args.gamma) if args.gamma else None,
        noise_sigma=args.noise_sigma,
        scale_factor=args.scale_factor,
        seed=args.seed,
    )
    lr, manifest = make_pair(hr, spec)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest["source"] = os.path.basename(args.input)
    manifest["output"] = "distorted.tif"
    raster_io.write_raster(lr, out / "distorted.tif")
    _write_json(out / "manifest.json", manifest)
    print(f"synthetic pair: {out / 'distorted.tif'} ({lr.width}x{lr.height})")
    print(f"ground truth: {out / 'manifest.json'}")
    return 0


def cmd_split(args) -> int:
    manifest = read_patch_manifest(args.patch_dir)
    ids = sorted(entry["id"] for entry in manifest["patches"])
    if not 0.0 < args.val_fraction < 1.0:
        raise ConfigError(f"--val-fraction must be in (0, 1), got {args.val_fraction}")
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(ids))
    val_count = max(1, round(len(ids) * args.val_fraction))
    val = sorted(ids[i] for i in order[:val_count])
    train = sorted(ids[i] for i in order[val_count:])
    _write_json(
        Path(args.output),
        {"seed": args.seed, "val_fraction": args.val_fraction, "train": train, "val": val},
    )
    print(f"split {len(ids)} patches into {len(train)} train / {len(val)} val: {args.output}")
    return 0


# ---------------------------------------------------------------------------
# Pipeline config
# ---------------------------------------------------------------------------

ENV_PREFIX = "SATALIGN_"


@dataclass
class PipelineConfig:
    input_lo: str = ""
    input_hi: str = ""
    output_dir: str = ""
    data_range: float = 0.0
    patch_size_lo: int = 128
    patch_size_hi: int = 384
    radiometric_params: str = ""
    normalization: str = "per_band"
    alignment: str = "hm"
    kernel: str = "lanczos3"
    seed: int = 0
    threads: int = 1
    bins: int = 256
    predictions: str = ""
    write_normalized: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_CONFIG_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str, problems: list[str]):
    kind = _CONFIG_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as exc:
        problems.append(f"config key {key!r}: {exc}")
        return None


def _read_config_file(path: str, problems: list[str]) -> dict:
    values: dict[str, object] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        problems.append(f"cannot read config file {path}: {exc}")
        return values
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_TYPES:
            problems.append(f"{path}:{lineno}: unknown config key {key!r}")
            continue
        coerced = _coerce(key, raw.strip(), problems)
        if coerced is not None:
            values[key] = coerced
    return values


def load_pipeline_config(args) -> PipelineConfig:
    """Resolve config from file, SATALIGN_* environment, and flags.

    All validation failures are collected and reported together.
    """
    problems: list[str] = []
    values: dict[str, object] = {}
    if args.config:
        values.update(_read_config_file(args.config, problems))
    for key in _CONFIG_TYPES:
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            coerced = _coerce(key, env_value, problems)
            if coerced is not None:
                values[key] = coerced
    for key in _CONFIG_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value

    config = PipelineConfig(**{k: v for k, v in values.items() if v is not None})

    if not config.input_lo:
        problems.append("missing required setting: input_lo (low-resolution tile)")
    elif not os.path.exists(config.input_lo):
        problems.append(f"input_lo does not exist: {config.input_lo}")
    if not config.input_hi:
        problems.append("missing required setting: input_hi (high-resolution tile)")
    elif not os.path.exists(config.input_hi):
        problems.append(f"input_hi does not exist: {config.input_hi}")
    if not config.output_dir:
        problems.append("missing required setting: output_dir")
    if not config.data_range > 0:
        problems.append(f"data_range must be positive, got {config.data_range}")
    if config.patch_size_lo < 1:
        problems.append(f"patch_size_lo must be positive, got {config.patch_size_lo}")
    if config.patch_size_hi < 1:
        problems.append(f"patch_size_hi must be positive, got {config.patch_size_hi}")
    if config.normalization not in ("per_band", "global"):
        problems.append(f"normalization must be per_band or global, got {config.normalization!r}")
    if config.alignment not in ("hm", "fdm", "none"):
        problems.append(f"alignment must be hm, fdm, or none, got {config.alignment!r}")
    if config.kernel not in ("lanczos3", "bicubic"):
        problems.append(f"kernel must be lanczos3 or bicubic, got {config.kernel!r}")
    if config.threads < 1:
        problems.append(f"threads must be >= 1, got {config.threads}")
    if config.bins < 1:
        problems.append(f"bins must be >= 1, got {config.bins}")
    if config.radiometric_params and not os.path.exists(config.radiometric_params):
        problems.append(f"radiometric_params does not exist: {config.radiometric_params}")
    if config.predictions and not os.path.isdir(config.predictions):
        problems.append(f"predictions directory does not exist: {config.predictions}")

    if problems:
        raise ConfigError("invalid pipeline configuration:\n  - " + "\n  - ".join(problems))

    if config.patch_size_hi != 3 * config.patch_size_lo:
        print(
            f"warning: patch sizes {config.patch_size_lo}/{config.patch_size_hi} "
            "do not preserve the 3x sensor ratio",
            file=sys.stderr,
        )
    return config


# ---------------------------------------------------------------------------
# Pipeline command
# ---------------------------------------------------------------------------


def _maybe_convert(raster, params_path: str, label: str, out_dir: Path, notes: dict):
    if not params_path:
        return raster
    if raster.encoding != ENCODING_INT16:
        notes[label] = "already float32; radiometric conversion skipped"
        return raster
    params = load_radiometric_params(params_path, raster.band_names)
    converted = dn_to_surface(raster, params)
    out_dir.mkdir(parents=True, exist_ok=True)
    raster_io.write_raster(converted, out_dir / f"{label}_reflectance.tif")
    notes[label] = f"converted to surface reflectance ({label}_reflectance.tif)"
    return converted


def cmd_pipeline(args) -> int:
    config = load_pipeline_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage_seconds: dict[str, float] = {}
    stages: dict[str, dict] = {}
    started = time.time()

    def timed(name: str):
        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                stage_seconds[name] = time.perf_counter() - self.t0

        return _Timer()

    # Stage 1: read inputs and optional radiometric conversion
    with timed("reflectance"):
        lo = raster_io.read_raster(config.input_lo)
        hi = raster_io.read_raster(config.input_hi)
        notes: dict[str, str] = {}
        lo = _maybe_convert(lo, config.radiometric_params, "lo", out / "reflectance", notes)
        hi = _maybe_convert(hi, config.radiometric_params, "hi", out / "reflectance", notes)
        stages["reflectance"] = {
            "applied": bool(config.radiometric_params),
            "notes": notes,
        }

    # Stage 2: patch grids
    with timed("tile"):
        lo_grid, lo_patches = extract_patches(lo, config.patch_size_lo)
        hi_grid, hi_patches = extract_patches(hi, config.patch_size_hi)
        if (lo_grid.rows, lo_grid.cols) != (hi_grid.rows, hi_grid.cols):
            raise DataError(
                f"patch grids do not align: low {lo_grid.rows}x{lo_grid.cols} vs "
                f"high {hi_grid.rows}x{hi_grid.cols}; the tiles do not cover the "
                "same footprint at these patch sizes"
            )
        lo_dir = out / "patches" / "lo"
        hi_dir = out / "patches" / "hi"
        write_patch_set(lo_dir, lo_grid, lo_patches, source=os.path.basename(config.input_lo))
        write_patch_set(hi_dir, hi_grid, hi_patches, source=os.path.basename(config.input_hi))
        stages["tile"] = {
            "grid": [lo_grid.rows, lo_grid.cols],
            "lo_patches": lo_grid.patch_count,
            "hi_patches": hi_grid.patch_count,
        }

    # Stage 3: dataset statistics (and optional normalized copies)
    with timed("stats"):
        stats_dir = out / "stats"
        stats_dir.mkdir(parents=True, exist_ok=True)
        lo_stats = compute_stats(lo_patches, bins=config.bins)
        hi_stats = compute_stats(hi_patches, bins=config.bins)
        lo_stats.save(stats_dir / "lo_stats.json")
        hi_stats.save(stats_dir / "hi_stats.json")
        if config.write_normalized:
            for label, patches, grid, stats, src in (
                ("lo", lo_patches, lo_grid, lo_stats, config.input_lo),
                ("hi", hi_patches, hi_grid, hi_stats, config.input_hi),
            ):
                normalized = _pmap(
                    lambda p: minmax_normalize(p, stats, config.normalization),
                    patches,
                    config.threads,
                )
                write_patch_set(
                    out / "patches" / f"{label}_normalized",
                    grid,
                    normalized,
                    source=os.path.basename(src),
                )
        stages["stats"] = {
            "normalization": config.normalization,
            "lo_overall_range": [lo_stats.overall.minimum, lo_stats.overall.maximum],
            "hi_overall_range": [hi_stats.overall.minimum, hi_stats.overall.maximum],
        }

    # Stage 4: predictions (external ingestion or classical upscale baseline)
    with timed("predict"):
        if config.predictions:
            pred_dir = Path(config.predictions)
            stages["predict"] = {"source": "external", "directory": str(pred_dir)}
        else:
            pred_dir = out / "patches" / "predicted"
            spec = ResampleSpec(
                target_width=hi_grid.patch_size,
                target_height=hi_grid.patch_size,
                kernel=config.kernel,
            )
            upscaled = _pmap(lambda p: resample(p, spec), lo_patches, config.threads)
            write_patch_set(
                pred_dir, hi_grid, upscaled, source=os.path.basename(config.input_lo)
            )
            stages["predict"] = {
                "source": "classical_upscale",
                "kernel": config.kernel,
                "directory": str(pred_dir),
            }

    # Stage 5: spectral alignment of predictions against the references
    with timed("align"):
        if config.alignment == "none":
            eval_dir = pred_dir
            stages["align"] = {"method": "none"}
        else:
            aligned_dir = out / "patches" / "aligned"
            transforms_dir = out / "transforms"
            pred_manifest = read_patch_manifest(pred_dir)
            hi_manifest = read_patch_manifest(hi_dir)
            pred_files = dict(
                (e["id"], p) for e, p in iter_patch_files(pred_dir, pred_manifest)
            )
            hi_files = dict((e["id"], p) for e, p in iter_patch_files(hi_dir, hi_manifest))
            if set(pred_files) != set(hi_files):
                raise DataError("prediction and reference manifests disagree on patch ids")
            if config.alignment == "fdm":
                transforms_dir.mkdir(parents=True, exist_ok=True)

            def align_one(pid: str):
                pred = raster_io.read_raster(pred_files[pid])
                ref = raster_io.read_raster(hi_files[pid])
                if config.alignment == "hm":
                    return histogram_match(pred, ref)
                transform = fit_fdm(pred, ref)
                transform.save(transforms_dir / f"{pid}.json")
                return apply_fdm(pred, transform)

            ordered_ids = sorted(pred_files)
            aligned = _pmap(align_one, ordered_ids, config.threads)
            write_patch_set(
                aligned_dir, hi_grid, aligned, source=f"aligned_{config.alignment}"
            )
            eval_dir = aligned_dir
            stages["align"] = {
                "method": config.alignment,
                "directory": str(aligned_dir),
            }

    # Stage 6: evaluation against the high-resolution references
    with timed("evaluate"):
        evaluation = evaluate_prediction_set(
            eval_dir,
            hi_dir,
            lo_dir,
            data_range=config.data_range,
            out_dir=out / "evaluation",
            bins=config.bins,
            kernel=config.kernel,
            threads=config.threads,
        )
        agg = evaluation.corpus.aggregate
        stages["evaluate"] = {
            "patches": len(evaluation.patch_ids),
            "corpus_mse": agg.mse,
            "corpus_psnr_db": None if agg.psnr is None or agg.psnr == float("inf") else agg.psnr,
            "corpus_ssim": agg.ssim,
            "metrics_csv": str(evaluation.metrics_csv),
            "summary_json": str(evaluation.summary_json),
        }

    config_doc = config.to_dict()
    # Execution-only knobs do not change output content, so they stay out of
    # the reproducibility hash.
    hashed = {k: v for k, v in config_doc.items() if k not in ("threads", "output_dir")}
    config_hash = hashlib.sha256(
        json.dumps(hashed, sort_keys=True).encode("utf-8")
    ).hexdigest()
    report = {
        "config": config_doc,
        "config_hash": config_hash,
        "versions": {
            "satalign": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "stages": stages,
        "run_log": {
            "started_unix": started,
            "elapsed_seconds": time.time() - started,
            "stage_seconds": stage_seconds,
        },
    }
    _write_json(out / "run_report.json", report)
    agg = evaluation.corpus.aggregate
    psnr_txt = "inf" if agg.psnr is None else f"{agg.psnr:.4f}"
    print(
        f"pipeline complete: {len(evaluation.patch_ids)} patches, alignment="
        f"{config.alignment}, corpus PSNR {psnr_txt} dB, SSIM {agg.ssim:.4f}"
    )
    print(f"run report: {out / 'run_report.json'}")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satalign",
        description="Align, convert, resample, and evaluate heterogeneous satellite rasters.",
    )
    parser.add_argument("--version", action="version", version=f"satalign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", help="crop a raster into a non-overlapping patch grid")
    p.add_argument("--input", required=True, help="input TIFF")
    p.add_argument("--patch-size", type=int, required=True, help="patch edge length in pixels")
    p.add_argument("--output-dir", required=True, help="directory for patches and manifest")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("stats", help="dataset statistics over rasters or a patch directory")
    p.add_argument("inputs", nargs="+", help="TIFF files or patch directories")
    p.add_argument("--bins", type=int, default=256, help="histogram bin count (default 256)")
    p.add_argument("--output", required=True, help="stats manifest JSON path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("reflectance", help="convert digital numbers to reflectance")
    p.add_argument("--input", required=True, help="int16 DN TIFF")
    p.add_argument("--params", required=True, help="radiometric parameter JSON")
    p.add_argument(
        "--stage",
        choices=("radiance", "toa", "surface"),
        default="surface",
        help="conversion endpoint (default surface)",
    )
    p.add_argument("--output", required=True, help="output float32 TIFF")
    p.set_defaults(func=cmd_reflectance)

    p = sub.add_parser("align", help="histogram matching / feature distribution matching")
    p.add_argument("--source", required=True, help="raster to adjust")
    p.add_argument("--reference", help="raster providing the target distribution")
    p.add_argument("--method", choices=("hm", "fdm"), default="hm")
    p.add_argument("--transform-out", help="write the fitted FDM transform JSON here")
    p.add_argument("--apply-transform", help="apply a stored FDM transform instead of fitting")
    p.add_argument("--output", required=True, help="aligned output TIFF")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("resample", help="classical separable resampling")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--width", type=int, help="target width in pixels")
    p.add_argument("--height", type=int, help="target height in pixels")
    p.add_argument("--scale", type=float, help="scale factor (e.g. 3 for 3x magnification)")
    p.add_argument("--kernel", choices=("lanczos3", "bicubic"), default="lanczos3")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("evaluate", help="score predicted patches against references")
    p.add_argument("--predictions", required=True, help="predicted patch directory")
    p.add_argument("--references", required=True, help="reference patch directory")
    p.add_argument("--baseline", help="optional coarser baseline patch directory")
    p.add_argument("--data-range", type=float, required=True, help="dynamic range for PSNR/SSIM")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--kernel", choices=("lanczos3", "bicubic"), default="lanczos3")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-artifacts", action="store_true", help="skip PNG/histogram artifacts")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a ground-truthed distorted pair")
    p.add_argument("--input", required=True, help="high-resolution source TIFF")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--gain", default="1.0", help="per-band gains, comma separated")
    p.add_argument("--bias", default="0.0", help="per-band biases, comma separated")
    p.add_argument("--gamma", help="per-band gamma exponents, comma separated")
    p.add_argument("--mixing", help="JSON file holding a c x c mixing matrix")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--scale-factor", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="seeded shuffle split of a patch directory")
    p.add_argument("--patch-dir", required=True)
    p.add_argument("--val-fraction", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="split JSON path")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pipeline", help="run the full preparation and evaluation pipeline")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--input-lo", dest="input_lo", help="low-resolution (30 m class) tile")
    p.add_argument("--input-hi", dest="input_hi", help="high-resolution (10 m class) tile")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--data-range", dest="data_range", type=float)
    p.add_argument("--patch-size-lo", dest="patch_size_lo", type=int)
    p.add_argument("--patch-size-hi", dest="patch_size_hi", type=int)
    p.add_argument("--radiometric-params", dest="radiometric_params")
    p.add_argument("--normalization", dest="normalization", choices=("per_band", "global"))
    p.add_argument("--alignment", dest="alignment", choices=("hm", "fdm", "none"))
    p.add_argument("--kernel", dest="kernel", choices=("lanczos3", "bicubic"))
    p.add_argument("--seed", dest="seed", type=int)
    p.add_argument("--threads", dest="threads", type=int)
    p.add_argument("--bins", dest="bins", type=int)
    p.add_argument("--predictions", dest="predictions", help="externally generated patches")
    p.add_argument(
        "--write-normalized",
        dest="write_normalized",
        action="store_const",
        const=True,
        help="also write min-max normalized patch copies",
    )
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return 3
    except SatalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
