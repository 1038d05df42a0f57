"""Digital number to radiance / TOA reflectance / surface reflectance conversion.

Per band: radiance L = gain * DN + bias, TOA reflectance
rho = pi * L * d^2 / (E_sun * cos(zenith)), and surface reflectance
rho_surf = (rho - path_reflectance) / (T_sun * T_view). All arithmetic runs in
float64 and each stage output is stored as float32, so composing the stages
yields bit-identical results to running them one at a time.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .raster import ENCODING_INT16, MultiBandRaster


def _per_band(value, count: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1 and count > 1:
        arr = np.full(count, float(arr[0]))
    if arr.shape != (count,):
        raise ConfigError(f"{name} must have one value per band ({count}), got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class RadiometricParams:
    """Scene-constant calibration terms, one entry per raster band.

    gain/bias convert DN to spectral radiance; solar_irradiance, the
    earth-sun distance (astronomical units) and the solar zenith angle
    (radians) produce TOA reflectance; path_reflectance and the two
    transmittances perform the optional atmospheric correction. Transmittance
    and path terms default to the identity atmosphere (0, 1, 1), which makes
    dn_to_surface return plain TOA reflectance.
    """

    gain: np.ndarray
    bias: np.ndarray
    solar_irradiance: np.ndarray
    earth_sun_distance: float
    solar_zenith: float
    path_reflectance: np.ndarray | None = None
    sun_transmittance: np.ndarray | None = None
    view_transmittance: np.ndarray | None = None

    def __post_init__(self) -> None:
        count = np.atleast_1d(np.asarray(self.gain)).size
        object.__setattr__(self, "gain", _per_band(self.gain, count, "gain"))
        object.__setattr__(self, "bias", _per_band(self.bias, count, "bias"))
        object.__setattr__(
            self, "solar_irradiance", _per_band(self.solar_irradiance, count, "solar_irradiance")
        )
        path = 0.0 if self.path_reflectance is None else self.path_reflectance
        t_sun = 1.0 if self.sun_transmittance is None else self.sun_transmittance
        t_view = 1.0 if self.view_transmittance is None else self.view_transmittance
        object.__setattr__(self, "path_reflectance", _per_band(path, count, "path_reflectance"))
        object.__setattr__(self, "sun_transmittance", _per_band(t_sun, count, "sun_transmittance"))
        object.__setattr__(self, "view_transmittance", _per_band(t_view, count, "view_transmittance"))

        if not self.earth_sun_distance > 0:
            raise DomainError(f"earth_sun_distance must be > 0, got {self.earth_sun_distance}")
        if (self.solar_irradiance <= 0).any():
            raise DomainError("solar_irradiance must be > 0 for every band")
        if not 0.0 <= self.solar_zenith < math.pi / 2:
            raise DomainError(
                f"solar_zenith must lie in [0, pi/2) radians, got {self.solar_zenith}"
            )
        for name in ("sun_transmittance", "view_transmittance"):
            t = getattr(self, name)
            if ((t <= 0) | (t > 1)).any():
                raise DomainError(f"{name} must lie in (0, 1]")

    @property
    def band_count(self) -> int:
        return self.gain.size


def load_radiometric_params(
    source: str | os.PathLike | dict,
    band_names: tuple[str, ...] | list[str],
) -> RadiometricParams:
    """Load per-band calibration from a JSON parameter file.

    Schema: {"earth_sun_distance": d, "solar_zenith_degrees": deg,
    "bands": {"<band name>": {"gain": g, "bias": b, "solar_irradiance": e,
    "path_reflectance": p?, "sun_transmittance": t?, "view_transmittance": t?}}}.
    Band entries are matched to band_names in raster band order.
    """
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(os.fspath(source), "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read radiometric parameter file {source}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"invalid JSON in radiometric parameter file {source}: {exc}") from exc

    missing = [key for key in ("earth_sun_distance", "solar_zenith_degrees", "bands") if key not in doc]
    if missing:
        raise ConfigError(f"radiometric parameter file lacks keys: {missing}")
    entries = doc["bands"]
    absent = [name for name in band_names if name not in entries]
    if absent:
        raise ConfigError(f"radiometric parameters missing for bands: {absent}")

    def column(key: str, default=None):
        values = []
        for name in band_names:
            entry = entries[name]
            if key in entry:
                values.append(float(entry[key]))
            elif default is not None:
                values.append(default)
            else:
                raise ConfigError(f"band {name!r} lacks required key {key!r}")
        return np.asarray(values, dtype=np.float64)

    return RadiometricParams(
        gain=column("gain"),
        bias=column("bias"),
        solar_irradiance=column("solar_irradiance"),
        earth_sun_distance=float(doc["earth_sun_distance"]),
        solar_zenith=math.radians(float(doc["solar_zenith_degrees"])),
        path_reflectance=column("path_reflectance", default=0.0),
        sun_transmittance=column("sun_transmittance", default=1.0),
        view_transmittance=column("view_transmittance", default=1.0),
    )


def _check_band_count(raster: MultiBandRaster, params: RadiometricParams) -> None:
    if raster.band_count != params.band_count:
        raise DataError(
            f"raster has {raster.band_count} bands but parameters cover {params.band_count}"
        )


def _finish_stage(raster: MultiBandRaster, out64: np.ndarray) -> MultiBandRaster:
    out = out64.astype(np.float32)
    nodata = raster.nodata
    if nodata is not None:
        nodata = float(nodata)
        out[raster.sample_invalid_mask()] = nodata
    return raster.with_pixels(out, nodata=nodata)


def dn_to_radiance(raster: MultiBandRaster, params: RadiometricParams) -> MultiBandRaster:
    """Convert int16 digital numbers to spectral radiance (float32)."""
    if raster.encoding != ENCODING_INT16:
        raise DataError(f"dn_to_radiance expects int16 DN input, got {raster.encoding}")
    _check_band_count(raster, params)
    dn = raster.pixels.astype(np.float64)
    radiance = params.gain[:, None, None] * dn + params.bias[:, None, None]
    return _finish_stage(raster, radiance)


def radiance_to_toa(raster: MultiBandRaster, params: RadiometricParams) -> MultiBandRaster:
    """Convert spectral radiance to top-of-atmosphere reflectance."""
    _check_band_count(raster, params)
    cos_zenith = math.cos(params.solar_zenith)
    if cos_zenith <= 0:
        raise DomainError("sun at or below the horizon: cos(solar_zenith) <= 0")
    radiance = raster.pixels.astype(np.float64)
    distance_sq = params.earth_sun_distance * params.earth_sun_distance
    toa = (
        math.pi
        * radiance
        * distance_sq
        / (params.solar_irradiance[:, None, None] * cos_zenith)
    )
    return _finish_stage(raster, toa)


def toa_to_surface(raster: MultiBandRaster, params: RadiometricParams) -> MultiBandRaster:
    """Apply the optional atmospheric correction to TOA reflectance."""
    _check_band_count(raster, params)
    transmittance = params.sun_transmittance * params.view_transmittance
    if (transmittance <= 0).any():
        raise DomainError("transmittance product must be > 0 for every band")
    toa = raster.pixels.astype(np.float64)
    surface = (toa - params.path_reflectance[:, None, None]) / transmittance[:, None, None]
    return _finish_stage(raster, surface)


def dn_to_surface(raster: MultiBandRaster, params: RadiometricParams) -> MultiBandRaster:
    """Full DN -> radiance -> TOA -> surface reflectance chain.

    Composes the three stages with the same intermediate float32 storage, so
    the result is bit-identical to applying them sequentially.
    """
    return toa_to_surface(radiance_to_toa(dn_to_radiance(raster, params), params), params)
