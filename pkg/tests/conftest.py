"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from satalign import MultiBandRaster


def lowpass(field: np.ndarray, cutoff: float) -> np.ndarray:
    """Keep only spatial frequencies below `cutoff` (cycles per pixel)."""
    spectrum = np.fft.fft2(field)
    fy = np.fft.fftfreq(field.shape[0])[:, None]
    fx = np.fft.fftfreq(field.shape[1])[None, :]
    spectrum[np.sqrt(fx * fx + fy * fy) > cutoff] = 0.0
    return np.fft.ifft2(spectrum).real


def smooth_bands(
    seed: int,
    size: int = 96,
    bands: int = 3,
    cutoff: float = 0.12,
    shared_weight: float = 0.07,
    independent_weight: float = 0.07,
) -> MultiBandRaster:
    """Band-limited correlated multi-band fixture with float32 samples.

    Each band mixes one shared smooth field with its own independent smooth
    field, so the band covariance is well conditioned but clearly correlated,
    like co-registered spectral imagery.
    """
    rng = np.random.default_rng(seed)
    shared = lowpass(rng.normal(0.0, 1.0, (size, size)), cutoff)
    shared /= shared.std()
    stack = []
    for k in range(bands):
        own = lowpass(rng.normal(0.0, 1.0, (size, size)), cutoff)
        own /= own.std()
        stack.append(0.45 + 0.08 * k + shared_weight * shared + independent_weight * own)
    return MultiBandRaster.from_array(np.stack(stack).astype(np.float32))


def orthogonal_bands(
    seed: int,
    size: int = 64,
    means: tuple = (0.4, 0.5, 0.6),
    stds: tuple = (0.05, 0.07, 0.09),
) -> MultiBandRaster:
    """Multi-band fixture whose EMPIRICAL band covariance is exactly diagonal.

    The sample rows are orthogonalized (QR), re-centered, and rescaled; the
    off-diagonal sample covariances end up at the 1e-11 level, which is what
    moment-based alignment needs for exact affine recovery.
    """
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(len(means), size * size))
    raw -= raw.mean(axis=1, keepdims=True)
    q, _ = np.linalg.qr(raw.T)
    rows = q.T - q.T.mean(axis=1, keepdims=True)
    q2, _ = np.linalg.qr(rows.T)
    rows = q2.T - q2.T.mean(axis=1, keepdims=True)
    out = np.empty_like(rows)
    for k, (mean, std) in enumerate(zip(means, stds)):
        out[k] = mean + std * rows[k] / rows[k].std()
    pixels = out.reshape(len(means), size, size).astype(np.float32)
    return MultiBandRaster.from_array(pixels)


def tie_free_raster(seed: int, bands: int, size: int) -> MultiBandRaster:
    """Raster whose float32 samples are all distinct within each band."""
    rng = np.random.default_rng(seed)
    stack = []
    for _ in range(bands):
        n = size * size
        values = np.unique(rng.normal(0.5, 0.2, 2 * n).astype(np.float32))
        assert values.size >= n
        chosen = rng.choice(values, size=n, replace=False)
        stack.append(chosen.reshape(size, size))
    return MultiBandRaster.from_array(np.stack(stack))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
