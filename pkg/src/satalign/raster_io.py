"""TIFF reading/writing and clamped 8-bit PNG export.

The TIFF container work is delegated to tifffile; this module owns the
contract: liberal reading (stripped or tiled layout, band-per-page or
samples-per-pixel multi-band files), strict writing (stripped,
band-interleaved-by-plane, uncompressed or deflate), lossless widening of
8/16-bit integer inputs into the signed 16-bit DN domain, and verbatim
passthrough of geospatial tags.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Sequence

import numpy as np
import tifffile
from PIL import Image

from .errors import DataError, RasterFormatError
from .raster import (
    ENCODING_FLOAT32,
    ENCODING_INT16,
    MultiBandRaster,
    default_band_names,
    invalid_mask,
)

# GeoTIFF / GDAL tags preserved verbatim between read_raster and write_raster.
# name -> (tag code, tifffile dtype char)
_GEO_TAGS = {
    "ModelPixelScaleTag": (33550, "d"),
    "ModelTiepointTag": (33922, "d"),
    "ModelTransformationTag": (34264, "d"),
    "GeoKeyDirectoryTag": (34735, "H"),
    "GeoDoubleParamsTag": (34736, "d"),
    "GeoAsciiParamsTag": (34737, "s"),
    "GDAL_METADATA": (42112, "s"),
    "DateTime": (306, "s"),
}
_GDAL_NODATA_CODE = 42113

_INT_WIDENABLE = (np.dtype(np.int16), np.dtype(np.int8), np.dtype(np.uint8), np.dtype(np.uint16))


def _collect_page_bands(page: "tifffile.TiffPage") -> list[np.ndarray]:
    arr = page.asarray()
    if arr.ndim == 2:
        return [arr]
    if arr.ndim == 3:
        if page.planarconfig == tifffile.PLANARCONFIG.SEPARATE:
            return [arr[i] for i in range(arr.shape[0])]
        return [arr[..., i] for i in range(arr.shape[-1])]
    raise RasterFormatError(f"unsupported page layout with shape {arr.shape}")


def _widen_to_internal(bands: list[np.ndarray], path: str) -> np.ndarray:
    dtype = bands[0].dtype
    stack = np.stack(bands)
    if dtype == np.float32:
        return stack
    if dtype in (np.dtype(np.int8), np.dtype(np.uint8)):
        return stack.astype(np.int16)
    if dtype == np.int16:
        return stack
    if dtype == np.uint16:
        top = int(stack.max()) if stack.size else 0
        if top > np.iinfo(np.int16).max:
            raise RasterFormatError(
                f"{path}: uint16 sample {top} exceeds the signed 16-bit DN domain"
            )
        return stack.astype(np.int16)
    raise RasterFormatError(
        f"{path}: unsupported sample type {dtype}; expected 8/16-bit integer or float32"
    )


def _parse_nodata(text: str, encoding: str) -> float | int | None:
    try:
        value = float(text.strip())
    except ValueError:
        return None
    if encoding == ENCODING_INT16:
        # NaN (or any non-integral sentinel) cannot mark int16 samples
        return int(value) if math.isfinite(value) and value.is_integer() else None
    return value


def _geo_meta_from_tags(page: "tifffile.TiffPage") -> dict[str, Any]:
    meta: dict[str, Any] = {}
    for name, (code, _) in _GEO_TAGS.items():
        tag = page.tags.get(code)
        if tag is not None:
            value = tag.value
            if isinstance(value, tuple):
                value = list(value)
            meta[name] = value
    description = page.tags.get(270)
    if description is not None and isinstance(description.value, str):
        try:
            extra = json.loads(description.value)
        except ValueError:
            extra = None
        if isinstance(extra, dict):
            # tifffile stores its own shape record in the description; skip it.
            extra.pop("shape", None)
            meta.update(extra)
    return meta


def read_raster(path: str | os.PathLike) -> MultiBandRaster:
    """Read a single- or multi-band TIFF into a MultiBandRaster.

    Bands are returned in file order. Unsigned/signed 8-bit and unsigned
    16-bit samples are widened losslessly to int16; float32 passes through.
    Sample values are never rescaled. Raises RasterFormatError for unreadable
    files, mixed sample types, band dimension mismatches, or sample types
    outside the supported set.
    """
    path = os.fspath(path)
    try:
        with tifffile.TiffFile(path) as tif:
            bands: list[np.ndarray] = []
            for page in tif.pages:
                bands.extend(_collect_page_bands(page))
            first_page = tif.pages[0]
            nodata_tag = first_page.tags.get(_GDAL_NODATA_CODE)
            geo_meta = _geo_meta_from_tags(first_page)
    except RasterFormatError:
        raise
    except (tifffile.TiffFileError, OSError, ValueError) as exc:
        raise RasterFormatError(f"cannot read TIFF {path}: {exc}") from exc

    if not bands:
        raise RasterFormatError(f"{path}: no image data")
    dtypes = {b.dtype for b in bands}
    if len(dtypes) > 1:
        raise RasterFormatError(
            f"{path}: mixed sample types across bands: {sorted(map(str, dtypes))}"
        )
    shapes = {b.shape for b in bands}
    if len(shapes) > 1:
        raise RasterFormatError(
            f"{path}: band dimension mismatch: {sorted(shapes)}"
        )
    dtype = bands[0].dtype
    if dtype not in _INT_WIDENABLE and dtype != np.float32:
        raise RasterFormatError(
            f"{path}: unsupported sample type {dtype}; "
            "expected 8/16-bit integer or float32"
        )
    pixels = _widen_to_internal(bands, path)

    encoding = ENCODING_INT16 if pixels.dtype == np.int16 else ENCODING_FLOAT32
    nodata = None
    if nodata_tag is not None and isinstance(nodata_tag.value, str):
        nodata = _parse_nodata(nodata_tag.value, encoding)

    band_names = geo_meta.pop("band_names", None)
    if not (isinstance(band_names, list) and len(band_names) == pixels.shape[0]):
        band_names = default_band_names(pixels.shape[0])

    return MultiBandRaster(
        pixels=pixels,
        band_names=tuple(band_names),
        nodata=nodata,
        geo_meta=geo_meta,
    )


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0, np.floor(values + 0.5), np.ceil(values - 0.5))


def _encode_pixels(raster: MultiBandRaster, encoding: str) -> np.ndarray:
    if encoding == raster.encoding:
        return raster.pixels
    if encoding == ENCODING_FLOAT32:
        return raster.pixels.astype(np.float32)
    # float -> int16 DN: round half away from zero, then range-check
    values = raster.pixels.astype(np.float64)
    if not np.isfinite(values).all():
        raise DataError("cannot encode non-finite samples as int16")
    rounded = _round_half_away(values)
    info = np.iinfo(np.int16)
    if rounded.min() < info.min or rounded.max() > info.max:
        offender = rounded.flat[int(np.argmax(np.abs(rounded)))]
        raise DataError(
            f"sample {offender} out of range for int16 encoding "
            f"[{info.min}, {info.max}]"
        )
    return rounded.astype(np.int16)


def write_raster(
    raster: MultiBandRaster,
    path: str | os.PathLike,
    encoding: str | None = None,
    compression: str | None = None,
) -> None:
    """Write a raster as a stripped, band-interleaved-by-plane TIFF.

    encoding: "int16" or "float32"; defaults to the raster's own encoding.
    compression: None (uncompressed) or "deflate".
    Geo metadata keys matching known GeoTIFF/GDAL tags are written as real
    tags; remaining keys (plus band names) travel in a JSON ImageDescription.
    """
    path = os.fspath(path)
    encoding = encoding or raster.encoding
    if encoding not in (ENCODING_INT16, ENCODING_FLOAT32):
        raise DataError(f"unknown encoding {encoding!r}")
    if compression not in (None, "deflate"):
        raise DataError(f"unsupported compression {compression!r}")
    data = _encode_pixels(raster, encoding)

    extratags = []
    extra_meta: dict[str, Any] = {}
    for key, value in raster.geo_meta.items():
        if key in _GEO_TAGS:
            code, kind = _GEO_TAGS[key]
            if kind == "s":
                extratags.append((code, "s", 0, str(value), True))
            else:
                seq = list(value) if isinstance(value, (list, tuple)) else [value]
                extratags.append((code, kind, len(seq), tuple(seq), True))
        else:
            extra_meta[key] = value
    if raster.nodata is not None:
        extratags.append((_GDAL_NODATA_CODE, "s", 0, repr(raster.nodata), True))
    extra_meta["band_names"] = list(raster.band_names)

    kwargs: dict[str, Any] = {
        "photometric": "minisblack",
        "description": json.dumps(extra_meta, sort_keys=True),
        "metadata": None,
        "extratags": extratags,
    }
    if data.shape[0] > 1:
        kwargs["planarconfig"] = "separate"
        payload = data
    else:
        payload = data[0]
    if compression == "deflate":
        kwargs["compression"] = "zlib"
    try:
        tifffile.imwrite(path, payload, **kwargs)
    except OSError as exc:
        raise DataError(f"cannot write TIFF {path}: {exc}") from exc


def export_png(
    raster: MultiBandRaster,
    band_selection: Sequence[int],
    clamp_range: tuple[float, float],
    path: str | os.PathLike,
) -> None:
    """Export three bands as an 8-bit RGB PNG.

    Each sample maps through round(255 * clamp((v - low) / (high - low), 0, 1))
    with ties rounded away from zero; nodata pixels map to byte 0.
    """
    low, high = float(clamp_range[0]), float(clamp_range[1])
    if not math.isfinite(low) or not math.isfinite(high) or not high > low:
        raise DataError(f"degenerate clamp range ({low}, {high})")
    if len(band_selection) != 3:
        raise DataError("band_selection must name exactly three bands")
    channels = []
    for index in band_selection:
        band = raster.band(int(index)).astype(np.float64)
        bad = invalid_mask(raster.band(int(index)), raster.nodata)
        unit = np.clip((band - low) / (high - low), 0.0, 1.0)
        scaled = np.floor(unit * 255.0 + 0.5)  # ties away from zero (values >= 0)
        scaled[bad] = 0.0
        channels.append(scaled.astype(np.uint8))
    rgb = np.stack(channels, axis=-1)
    Image.fromarray(rgb, mode="RGB").save(os.fspath(path), format="PNG")
