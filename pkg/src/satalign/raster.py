"""In-memory multi-band raster model shared by every processing stage.

Pixel data is held as a single (bands, height, width) numpy array so that all
bands are guaranteed to share one sample encoding. Two encodings exist:
signed 16-bit digital numbers ("int16") and 32-bit float reflectance-domain
values ("float32"). Rasters are immutable once constructed and therefore safe
to share across worker threads; derived rasters are new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DataError

ENCODING_INT16 = "int16"
ENCODING_FLOAT32 = "float32"

_ENCODING_BY_DTYPE = {
    np.dtype(np.int16): ENCODING_INT16,
    np.dtype(np.float32): ENCODING_FLOAT32,
}


def default_band_names(count: int) -> tuple[str, ...]:
    return tuple(f"band_{i + 1}" for i in range(count))


def invalid_mask(values: np.ndarray, nodata: float | int | None) -> np.ndarray:
    """Boolean mask of samples equal to the nodata sentinel (NaN-aware)."""
    if nodata is None:
        return np.zeros(values.shape, dtype=bool)
    if isinstance(nodata, float) and np.isnan(nodata):
        return np.isnan(values)
    return values == nodata


@dataclass(frozen=True)
class MultiBandRaster:
    """Multi-band image grid with band labels, nodata sentinel, and metadata.

    pixels: (bands, height, width) array, int16 or float32.
    band_names: one label per band (free-form, e.g. SWIR1/NIR/Red).
    nodata: optional sentinel in the same numeric domain as the samples.
    geo_meta: opaque key-value metadata carried through unchanged on write.
    """

    pixels: np.ndarray
    band_names: tuple[str, ...]
    nodata: float | int | None = None
    geo_meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 3:
            raise DataError("raster pixels must be a (bands, height, width) array")
        if px.shape[0] < 1 or px.shape[1] < 1 or px.shape[2] < 1:
            raise DataError(f"raster has empty dimensions: {px.shape}")
        if px.dtype not in _ENCODING_BY_DTYPE:
            raise DataError(
                f"unsupported sample dtype {px.dtype}; expected int16 or float32"
            )
        names = tuple(str(n) for n in self.band_names)
        object.__setattr__(self, "band_names", names)
        if len(names) != px.shape[0]:
            raise DataError(
                f"{len(names)} band names for {px.shape[0]} bands"
            )
        if len(set(names)) != len(names):
            raise DataError(f"band names must be unique, got {names}")
        if px.dtype == np.float32:
            bad = ~(np.isfinite(px) | invalid_mask(px, self.nodata))
            if bad.any():
                raise DataError(
                    f"{int(bad.sum())} non-finite float samples that are not nodata"
                )
        # Shared rasters must not be mutated behind readers' backs.
        px.flags.writeable = False

    @property
    def band_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def encoding(self) -> str:
        return _ENCODING_BY_DTYPE[self.pixels.dtype]

    def band(self, index: int) -> np.ndarray:
        """Read-only (height, width) view of one band."""
        if not 0 <= index < self.band_count:
            raise DataError(
                f"band index {index} out of range for {self.band_count} bands"
            )
        return self.pixels[index]

    def sample_invalid_mask(self) -> np.ndarray:
        """(bands, height, width) bool mask, True where a sample is nodata."""
        return invalid_mask(self.pixels, self.nodata)

    def pixel_invalid_mask(self) -> np.ndarray:
        """(height, width) bool mask, True where any band is nodata."""
        return self.sample_invalid_mask().any(axis=0)

    def has_nodata_samples(self) -> bool:
        return self.nodata is not None and bool(self.sample_invalid_mask().any())

    def with_pixels(
        self,
        pixels: np.ndarray,
        nodata: float | int | None | str = "keep",
        geo_meta: dict[str, Any] | None = None,
    ) -> "MultiBandRaster":
        """New raster with replaced pixels, inheriting labels and metadata."""
        nd = self.nodata if nodata == "keep" else nodata
        return MultiBandRaster(
            pixels=pixels,
            band_names=self.band_names,
            nodata=nd,
            geo_meta=dict(self.geo_meta if geo_meta is None else geo_meta),
        )

    @classmethod
    def from_array(
        cls,
        pixels: np.ndarray,
        band_names: tuple[str, ...] | list[str] | None = None,
        nodata: float | int | None = None,
        geo_meta: dict[str, Any] | None = None,
    ) -> "MultiBandRaster":
        """Build a raster from a 2-D (single band) or 3-D array."""
        if pixels.ndim == 2:
            pixels = pixels[np.newaxis, :, :]
        names = tuple(band_names) if band_names else default_band_names(pixels.shape[0])
        return cls(
            pixels=pixels,
            band_names=names,
            nodata=nodata,
            geo_meta=dict(geo_meta or {}),
        )
