"""Elevation rasters and patch extraction.

A raster is an EPSG:4326 grid of elevations with a north-up affine
transform. Patches are square windows resampled bilinearly around a center
coordinate; all meter offsets go through the equirectangular approximation
in :mod:`topoembed.geometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError, ContractError, DataQualityError, DomainError
from .geometry import AOIPolygon, GeoCoordinate, ScaleSpec, meters_per_degree

# Fractional pixel coordinates this close to an integer are snapped, so
# grid-aligned windows copy raster values bit-exactly instead of picking up
# float round-off from the interpolation weights.
_SNAP_EPS = 1e-6


@dataclass(frozen=True)
class GeoTransform:
    """North-up pixel<->(lon, lat) mapping.

    ``ul_lon``/``ul_lat`` are the outer corner of the upper-left pixel;
    pixel sizes are positive, rows increase southward. Fractional pixel
    coordinates are center-based: (row=0, col=0) is the center of the
    upper-left pixel.
    """

    ul_lon: float
    ul_lat: float
    px_deg_lon: float
    px_deg_lat: float

    def __post_init__(self):
        if self.px_deg_lon <= 0 or self.px_deg_lat <= 0:
            raise DomainError("pixel sizes must be positive")

    def pixel_to_geo(self, row, col):
        lon = self.ul_lon + (np.asarray(col) + 0.5) * self.px_deg_lon
        lat = self.ul_lat - (np.asarray(row) + 0.5) * self.px_deg_lat
        return lon, lat

    def geo_to_pixel(self, lon, lat):
        col = (np.asarray(lon) - self.ul_lon) / self.px_deg_lon - 0.5
        row = (self.ul_lat - np.asarray(lat)) / self.px_deg_lat - 0.5
        return row, col


@dataclass
class ElevationRaster:
    """Single-band elevation grid (meters above sea level)."""

    values: np.ndarray
    transform: GeoTransform
    nodata: float | None = None
    source_resolution: float = 30.0  # nominal meters/pixel at the native grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise DomainError("raster grid must be a non-empty 2-D array")
        if self.source_resolution <= 0:
            raise DomainError("source_resolution must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat) of the full pixel extent."""
        h, w = self.values.shape
        t = self.transform
        return (
            t.ul_lon,
            t.ul_lat - h * t.px_deg_lat,
            t.ul_lon + w * t.px_deg_lon,
            t.ul_lat,
        )

    @property
    def center(self) -> GeoCoordinate:
        min_lon, min_lat, max_lon, max_lat = self.bounds
        return GeoCoordinate((min_lon + max_lon) / 2, (min_lat + max_lat) / 2)

    def contains(self, coord: GeoCoordinate) -> bool:
        min_lon, min_lat, max_lon, max_lat = self.bounds
        return (min_lon <= coord.lon <= max_lon) and (min_lat <= coord.lat <= max_lat)

    def elevation_at(self, coord: GeoCoordinate) -> float:
        row, col = self.transform.geo_to_pixel(coord.lon, coord.lat)
        return float(
            _bilinear(self.values, np.asarray([row]), np.asarray([col]), self.nodata)[0]
        )

    def region(self, inset_m: float = 0.0) -> "AOIPolygon":
        """Rectangular footprint polygon, optionally shrunk by a meter inset
        so every contained point stays patch-extractable."""
        min_lon, min_lat, max_lon, max_lat = self.bounds
        m_lon, m_lat = meters_per_degree((min_lat + max_lat) / 2)
        dx, dy = inset_m / m_lon, inset_m / m_lat
        a, b = min_lon + dx, max_lon - dx
        c, d = min_lat + dy, max_lat - dy
        if a >= b or c >= d:
            raise DomainError(f"inset {inset_m} m leaves no raster area")
        wkt = (f"POLYGON (({a} {c}, {a} {d}, {b} {d}, {b} {c}, {a} {c}))")
        return AOIPolygon.from_wkt(wkt)


@dataclass
class ElevationPatch:
    """Square elevation window around a center coordinate."""

    values: np.ndarray
    center: GeoCoordinate
    scale: ScaleSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        side = self.scale.side
        if self.values.shape != (side, side):
            raise ContractError(
                f"patch shape {self.values.shape} does not match scale side {side}"
            )


def _bilinear(values: np.ndarray, rows: np.ndarray, cols: np.ndarray, nodata):
    """Bilinear sample at fractional center-based pixel coordinates.

    Raises BoundaryError when a sample falls outside the grid and
    DataQualityError when a contributing source pixel is nodata/NaN.
    Near-integer coordinates are snapped so aligned reads are exact copies.
    """
    h, w = values.shape
    rows = np.where(np.abs(rows - np.round(rows)) < _SNAP_EPS, np.round(rows), rows)
    cols = np.where(np.abs(cols - np.round(cols)) < _SNAP_EPS, np.round(cols), cols)

    if rows.min() < 0 or cols.min() < 0 or rows.max() > h - 1 or cols.max() > w - 1:
        raise BoundaryError(
            f"sample window exceeds raster bounds "
            f"(rows {rows.min():.2f}..{rows.max():.2f} of {h}, "
            f"cols {cols.min():.2f}..{cols.max():.2f} of {w})"
        )

    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rows - r0
    fc = cols - c0

    q00 = values[r0, c0]
    q01 = values[r0, c1]
    q10 = values[r1, c0]
    q11 = values[r1, c1]

    contrib = np.stack([q00, q01, q10, q11])
    if np.isnan(contrib).any():
        raise DataQualityError("nodata (NaN) pixels inside the sample window")
    if nodata is not None and (contrib == nodata).any():
        raise DataQualityError(f"nodata ({nodata}) pixels inside the sample window")

    top = q00 * (1 - fc) + q01 * fc
    bot = q10 * (1 - fc) + q11 * fc
    return top * (1 - fr) + bot * fr


def sample_offset_grid(
    raster: ElevationRaster,
    center: GeoCoordinate,
    east_offsets_m: np.ndarray,
    north_offsets_m: np.ndarray,
) -> np.ndarray:
    """Elevations at a rectangular grid of meter offsets around ``center``.

    ``east_offsets_m`` indexes columns (west->east ascending),
    ``north_offsets_m`` indexes rows (north->south descending offsets give
    the usual image orientation). Returns shape (len(north), len(east)).
    """
    m_lon, m_lat = meters_per_degree(center.lat)
    lons = center.lon + np.asarray(east_offsets_m) / m_lon
    lats = center.lat + np.asarray(north_offsets_m) / m_lat
    rows, cols = raster.transform.geo_to_pixel(lons[np.newaxis, :], lats[:, np.newaxis])
    rows = np.broadcast_to(rows, (len(lats), len(lons)))
    cols = np.broadcast_to(cols, (len(lats), len(lons)))
    return _bilinear(raster.values, rows, cols, raster.nodata)


def extract_patch(
    raster: ElevationRaster, center: GeoCoordinate, scale: ScaleSpec
) -> ElevationPatch:
    """(2N+1)x(2N+1) patch around ``center``; pixel (i, j) sits
    ((j-N)*s, (N-i)*s) meters east/north of the center."""
    n = scale.half_extent_px
    s = scale.resolution
    offsets = (np.arange(2 * n + 1) - n) * s
    values = sample_offset_grid(raster, center, offsets, -offsets)
    return ElevationPatch(values, center, scale)


def normalize_values(values: np.ndarray) -> np.ndarray:
    """Per-tile min-max normalization to [0, 1]; constant tiles map to zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_patch(patch: ElevationPatch) -> ElevationPatch:
    return ElevationPatch(normalize_values(patch.values), patch.center, patch.scale)


def hillshade(values: np.ndarray, azimuth_deg: float = 315.0, altitude_deg: float = 45.0):
    """Simple Lambertian hillshade in [0, 1] for rendering basemaps."""
    az = math.radians(azimuth_deg)
    alt = math.radians(altitude_deg)
    gy, gx = np.gradient(np.asarray(values, dtype=np.float64))
    slope = np.pi / 2 - np.arctan(np.hypot(gx, gy))
    aspect = np.arctan2(-gx, gy)
    shaded = np.sin(alt) * np.sin(slope) + np.cos(alt) * np.cos(slope) * np.cos(
        (az - np.pi / 2) - aspect
    )
    return np.clip((shaded + 1) / 2, 0, 1)
