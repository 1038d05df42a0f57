"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

The paper-scale headline numbers require the proprietary corpus and trained
networks, so these criteria are property-based plus directional: exact
integer tiling parity, bit-level oracles for the radiometric chain and
histogram matching, moment tolerances for distribution matching, metric
identities, resampler contracts, byte-level pipeline determinism, and the
four-column evaluation artifact set.
"""

import csv
import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

from satalign import (
    DistortionSpec,
    MultiBandRaster,
    RadiometricParams,
    ResampleSpec,
    dn_to_surface,
    evaluate_prediction_set,
    extract_patches,
    fit_fdm,
    histogram_match,
    make_pair,
    metric_report,
    read_raster,
    resample,
    ssim,
    verify_recovery,
    write_raster,
)
from satalign.cli import main
from satalign.dataset import write_patch_set
from tests.conftest import lowpass, orthogonal_bands, smooth_bands, tie_free_raster


def _report(criterion: int, message: str) -> None:
    print(f"PASS [criterion {criterion:02d}] {message}")


# ---------------------------------------------------------------------------


def test_criterion_01_tiling_parity():
    """3660^2 six-band @128 and 10980^2 @384 both give 28x28 = 784 patches."""
    t0 = time.perf_counter()
    coarse_pixels = (np.arange(3660 * 3660, dtype=np.int32) % 17000 - 3000).astype(np.int16)
    coarse = MultiBandRaster.from_array(
        np.broadcast_to(coarse_pixels.reshape(1, 3660, 3660), (6, 3660, 3660)),
        band_names=("SWIR1", "SWIR2", "NIR", "Red", "Green", "Blue"),
    )
    grid30, patches30 = extract_patches(coarse, 128)
    assert (grid30.rows, grid30.cols) == (28, 28)
    assert len(patches30) == 784
    assert grid30.discarded_right == 76 and grid30.discarded_bottom == 76
    assert all(p.band_count == 6 for p in patches30[:3])
    assert patches30[0].pixels.shape == (6, 128, 128)

    fine_pixels = (np.arange(10980 * 10980, dtype=np.int32) % 17000 - 3000).astype(np.int16)
    fine = MultiBandRaster.from_array(fine_pixels.reshape(1, 10980, 10980))
    grid10, patches10 = extract_patches(fine, 384)
    assert (grid10.rows, grid10.cols) == (28, 28)
    assert len(patches10) == 784
    assert (grid10.rows, grid10.cols) == (grid30.rows, grid30.cols)

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _report(1, f"784 patches in a 28x28 grid at both scales ({elapsed:.1f}s)")


def test_criterion_02_radiometry_oracle():
    """1000 randomized conversions match the per-stage scalar oracle to 1e-9."""
    rng = np.random.default_rng(20240202)
    worst = 0.0
    for _ in range(1000):
        dn = int(rng.integers(-3000, 14000))
        gain = float(rng.uniform(1e-4, 0.05))
        bias = float(rng.uniform(-1.0, 1.0))
        esun = float(rng.uniform(500.0, 2500.0))
        distance = float(rng.uniform(0.98, 1.02))
        zenith = float(rng.uniform(0.0, 1.3))
        path = float(rng.uniform(0.0, 0.05))
        t_sun = float(rng.uniform(0.7, 1.0))
        t_view = float(rng.uniform(0.7, 1.0))
        params = RadiometricParams(
            gain=[gain], bias=[bias], solar_irradiance=[esun],
            earth_sun_distance=distance, solar_zenith=zenith,
            path_reflectance=[path], sun_transmittance=[t_sun],
            view_transmittance=[t_view],
        )
        raster = MultiBandRaster.from_array(np.array([[[dn]]], dtype=np.int16))
        out = float(dn_to_surface(raster, params).pixels[0, 0, 0])

        radiance = float(np.float32(gain * float(dn) + bias))
        toa = float(np.float32(
            math.pi * radiance * (distance * distance) / (esun * math.cos(zenith))
        ))
        surface = float(np.float32((toa - path) / (t_sun * t_view)))
        denom = max(abs(surface), 1e-30)
        worst = max(worst, abs(out - surface) / denom)
    assert worst <= 1e-9

    identity = RadiometricParams(
        gain=[1.0], bias=[0.0], solar_irradiance=[math.pi],
        earth_sun_distance=1.0, solar_zenith=0.0,
    )
    one = dn_to_surface(
        MultiBandRaster.from_array(np.array([[[1]]], dtype=np.int16)), identity
    )
    assert one.pixels[0, 0, 0] == 1.0
    _report(2, f"1000 randomized tuples, worst relative error {worst:.2e}; identity chain = 1.0")


def test_criterion_03_histogram_matching_exactness():
    """Equal-size tie-free HM transfers the reference histogram bit-exactly."""
    for seed in range(5):
        source = tie_free_raster(seed, bands=3, size=24)
        reference = tie_free_raster(100 + seed, bands=3, size=24)
        out = histogram_match(source, reference)
        for b in range(3):
            assert np.array_equal(
                np.sort(out.pixels[b].ravel()),
                np.sort(reference.pixels[b].ravel()),
            )

    for case in range(100):
        rng = np.random.default_rng(5000 + case)
        h_s, w_s = rng.integers(3, 12, 2)
        h_r, w_r = rng.integers(3, 12, 2)
        source = MultiBandRaster.from_array(
            rng.normal(0.0, 1.0, (1, h_s, w_s)).astype(np.float32)
        )
        reference = MultiBandRaster.from_array(
            rng.normal(3.0, 2.0, (1, h_r, w_r)).astype(np.float32)
        )
        out = histogram_match(source, reference)
        order = np.argsort(source.pixels[0].ravel(), kind="stable")
        mapped = out.pixels[0].ravel()[order].astype(np.float64)
        assert (np.diff(mapped) >= 0.0).all()
    _report(3, "sorted(output) == sorted(reference) bit-exactly; 100/100 monotone cases")


def test_criterion_04_fdm_moment_matching():
    """3-band Gaussian fixtures: mean to 1e-6 rel, covariance to 1e-5 Frobenius."""
    from satalign import apply_fdm

    rng = np.random.default_rng(404)
    mix_s = rng.normal(size=(3, 3)) * 0.1
    mix_t = rng.normal(size=(3, 3)) * 0.2
    source = MultiBandRaster.from_array(
        (mix_s @ rng.normal(size=(3, 120 * 120)) + np.array([[0.2], [0.3], [0.4]]))
        .reshape(3, 120, 120).astype(np.float32)
    )
    target = MultiBandRaster.from_array(
        (mix_t @ rng.normal(size=(3, 120 * 120)) + np.array([[0.5], [0.6], [0.7]]))
        .reshape(3, 120, 120).astype(np.float32)
    )
    assert source.width * source.height >= 10_000
    moved = apply_fdm(source, fit_fdm(source, target)).pixels.reshape(3, -1).astype(np.float64)
    target_values = target.pixels.reshape(3, -1).astype(np.float64)
    mean_rel = (
        np.linalg.norm(moved.mean(1) - target_values.mean(1))
        / np.linalg.norm(target_values.mean(1))
    )
    cov_rel = (
        np.linalg.norm(np.cov(moved, bias=True) - np.cov(target_values, bias=True))
        / np.linalg.norm(np.cov(target_values, bias=True))
    )
    assert mean_rel < 1e-6
    assert cov_rel < 1e-5

    # scalar case: A equals the population std ratio
    base = rng.normal(0.0, 1.0, 3600)
    base = (base - base.mean()) / base.std()
    source1 = MultiBandRaster.from_array((2.0 * base).reshape(1, 60, 60).astype(np.float32))
    target1 = MultiBandRaster.from_array((6.0 * base).reshape(1, 60, 60).astype(np.float32))
    transform = fit_fdm(source1, target1)
    std_ratio = (
        target1.pixels.astype(np.float64).std() / source1.pixels.astype(np.float64).std()
    )
    assert abs(transform.matrix[0, 0] - std_ratio) / std_ratio < 1e-10
    _report(
        4,
        f"mean rel {mean_rel:.2e} (<1e-6), cov rel Frobenius {cov_rel:.2e} (<1e-5), "
        f"scalar A = std ratio to 1e-10",
    )


def test_criterion_05_table_direction_on_synthetic_pairs():
    """HM and FDM beat the plain upscaled baseline on PSNR and SSIM, >=19/20."""
    t0 = time.perf_counter()
    wins = {"hm": 0, "fdm": 0}
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        hr = smooth_bands(seed, size=96)
        spec = DistortionSpec(
            gain=rng.uniform(0.75, 1.3, 3).tolist(),
            bias=rng.uniform(-0.12, 0.12, 3).tolist(),
            noise_sigma=float(rng.uniform(0.003, 0.01)),
            scale_factor=3,
            seed=seed,
        )
        for method in ("hm", "fdm"):
            report = verify_recovery(hr, spec, method)
            if report.post.psnr > report.pre.psnr and report.post.ssim > report.pre.ssim:
                wins[method] += 1
    elapsed = time.perf_counter() - t0
    assert wins["hm"] >= 19
    assert wins["fdm"] >= 19
    assert elapsed < 300.0
    _report(5, f"HM {wins['hm']}/20, FDM {wins['fdm']}/20 strict wins ({elapsed:.1f}s)")


def test_criterion_06_fdm_exact_recovery():
    """Affine-only distortion (sigma 0, scale 1) inverted to mse < 1e-8 range^2."""
    worst_ratio = 0.0
    for seed in (13, 14, 15):
        hr = orthogonal_bands(seed)
        spec = DistortionSpec(
            gain=[0.7, 1.3, 0.9], bias=[0.1, -0.2, 0.05], noise_sigma=0.0, scale_factor=1
        )
        report = verify_recovery(hr, spec, "fdm")
        limit = 1e-8 * report.data_range**2
        assert report.post.mse < limit
        worst_ratio = max(worst_ratio, report.post.mse / limit)
    _report(6, f"post-alignment mse at most {worst_ratio:.1e} of the 1e-8*range^2 limit")


def test_criterion_07_metric_identities():
    """rmse^2 = mse and psnr identity on every row; ssim self = 1; oracle match."""
    from skimage.metrics import structural_similarity

    rng = np.random.default_rng(707)
    pred = MultiBandRaster.from_array(rng.random((3, 32, 32), dtype=np.float32))
    ref = MultiBandRaster.from_array(rng.random((3, 32, 32), dtype=np.float32))
    report = metric_report(pred, ref, data_range=1.5)
    for row in list(report.per_band) + [report.aggregate]:
        assert abs(row.rmse * row.rmse - row.mse) <= 1e-12 * row.mse
        expected_psnr = 20.0 * math.log10(1.5) - 10.0 * math.log10(row.mse)
        assert abs(row.psnr - expected_psnr) <= 1e-12 * abs(expected_psnr)

    assert ssim(pred, pred, data_range=1.5) == [1.0, 1.0, 1.0]

    worst = 0.0
    for seed in range(5):
        case_rng = np.random.default_rng(seed)
        a = case_rng.random((64, 64))
        b = np.clip(a + case_rng.normal(0.0, 0.1, (64, 64)), 0.0, 1.0)
        ra = MultiBandRaster.from_array(a.astype(np.float32))
        rb = MultiBandRaster.from_array(b.astype(np.float32))
        mine = ssim(ra, rb, data_range=1.0)[0]
        oracle = structural_similarity(
            ra.pixels[0], rb.pixels[0],
            gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0,
        )
        worst = max(worst, abs(mine - oracle))
    assert worst < 1e-6
    _report(7, f"identities hold at 1e-12; ssim self-comparison exactly 1; oracle gap {worst:.1e}")


def test_criterion_08_resampler_contracts():
    """Constant exact; identity within 1e-6; 3x roundtrip MAE < 1% of range."""
    constant = MultiBandRaster.from_array(np.full((2, 16, 16), 0.6125, dtype=np.float32))
    for target in ((48, 48), (5, 9)):
        out = resample(constant, ResampleSpec(*target))
        assert (out.pixels == np.float32(0.6125)).all()

    rng = np.random.default_rng(808)
    image = MultiBandRaster.from_array(rng.random((1, 33, 41), dtype=np.float32))
    identity = resample(image, ResampleSpec(41, 33))
    identity_err = float(np.abs(identity.pixels - image.pixels).max())
    assert identity_err < 1e-6

    field = lowpass(rng.normal(0.0, 1.0, (128, 128)), 0.08)
    field = 0.5 + 0.2 * field / field.std()
    smooth = MultiBandRaster.from_array(field.astype(np.float32)[np.newaxis])
    up = resample(smooth, ResampleSpec(384, 384))
    back = resample(up, ResampleSpec(128, 128))
    dynamic_range = float(smooth.pixels.max() - smooth.pixels.min())
    mae = float(np.abs(back.pixels.astype(np.float64) - smooth.pixels).mean())
    assert mae < 0.01 * dynamic_range
    _report(
        8,
        f"constant exact, identity err {identity_err:.1e}, "
        f"3x roundtrip MAE {mae / dynamic_range:.3%} of range",
    )


def _digest_reports(root: Path) -> dict:
    digests = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.suffix in (".json", ".csv") and path.name != "run_report.json":
            digests[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests


def test_criterion_09_pipeline_determinism(tmp_path):
    """Fixed seed: byte-identical manifests/CSVs across reruns and thread counts."""
    hi = smooth_bands(3, size=144)
    lo, _ = make_pair(
        hi,
        DistortionSpec(gain=[0.85, 1.2, 0.95], bias=[0.05, -0.04, 0.02],
                       noise_sigma=0.005, scale_factor=3, seed=7),
    )
    lo_path, hi_path = tmp_path / "lo.tif", tmp_path / "hi.tif"
    write_raster(lo, lo_path)
    write_raster(hi, hi_path)

    def run(out: Path, threads: int):
        code = main([
            "pipeline",
            "--input-lo", str(lo_path), "--input-hi", str(hi_path),
            "--output-dir", str(out), "--data-range", "1.0",
            "--patch-size-lo", "16", "--patch-size-hi", "48",
            "--alignment", "hm", "--seed", "5", "--threads", str(threads),
        ])
        assert code == 0
        return _digest_reports(out)

    first = run(tmp_path / "run1", 1)
    second = run(tmp_path / "run2", 1)
    threaded = run(tmp_path / "run3", 8)
    assert first, "no report files produced"
    assert first == second
    assert first == threaded
    _report(9, f"{len(first)} manifests/CSVs byte-identical across reruns and threads 1 vs 8")


def test_criterion_10_evaluation_artifact_shape(tmp_path):
    """Per band: reference PNG, prediction PNG, three-source histogram CSV with
    shared bins, and a signed difference map whose mean_abs equals the MAE row."""
    hi = smooth_bands(11, size=96)
    lo, _ = make_pair(
        hi,
        DistortionSpec(gain=[0.9, 1.1, 1.0], bias=[0.03, -0.02, 0.01],
                       noise_sigma=0.004, scale_factor=3, seed=21),
    )
    hi_grid, hi_patches = extract_patches(hi, 48)
    lo_grid, lo_patches = extract_patches(lo, 16)
    upscaled = [resample(p, ResampleSpec(48, 48)) for p in lo_patches]
    predictions = [histogram_match(u, h) for u, h in zip(upscaled, hi_patches)]

    ref_dir, pred_dir, base_dir = tmp_path / "ref", tmp_path / "pred", tmp_path / "base"
    write_patch_set(ref_dir, hi_grid, hi_patches, source="hi.tif")
    write_patch_set(pred_dir, hi_grid, predictions, source="aligned.tif")
    write_patch_set(base_dir, lo_grid, lo_patches, source="lo.tif")

    result = evaluate_prediction_set(
        pred_dir, ref_dir, base_dir, data_range=1.0, out_dir=tmp_path / "out"
    )
    assert result.baseline_resampled is True

    checked_bands = 0
    for pid in result.patch_ids:
        report = result.patch_reports[pid]
        summaries = {s.band_name: s for s in result.diff_summaries[pid]}
        artifact_dir = tmp_path / "out" / "artifacts" / pid
        for band_row in report.per_band:
            band = band_row.band_name
            for suffix in ("reference.png", "prediction.png", "difference.png"):
                assert (artifact_dir / f"{band}_{suffix}").exists()

            with open(artifact_dir / f"{band}_histogram.csv", newline="") as fh:
                rows = list(csv.reader(fh))
            assert rows[0] == [
                "bin_low", "bin_high",
                "count_reference", "count_prediction", "count_baseline",
            ]
            # shared bins: every count column sums to that source's sample count
            counts = np.array([[int(v) for v in row[2:]] for row in rows[1:]])
            assert counts[:, 0].sum() == 48 * 48
            assert counts[:, 1].sum() == 48 * 48
            assert counts[:, 2].sum() == 16 * 16  # baseline binned at native size

            # signed difference map: summary mean_abs equals the MAE row
            assert summaries[band].mean_abs == pytest.approx(band_row.mae, rel=1e-9)
            # and the written float32 artifact reproduces it to storage precision
            diff = read_raster(artifact_dir / f"{band}_difference.tif")
            mean_abs = float(np.abs(diff.pixels.astype(np.float64)).mean())
            assert mean_abs == pytest.approx(band_row.mae, rel=1e-6)
            checked_bands += 1
    assert checked_bands == len(result.patch_ids) * 3
    _report(10, f"four-column artifact set verified for {checked_bands} band rows")
