"""Coordinates, patch scale arithmetic and area-of-interest polygons.

All geographic math uses a local equirectangular approximation: one degree
of latitude is ``M_PER_DEG`` meters everywhere, one degree of longitude is
``M_PER_DEG * cos(lat)`` meters. Good to well under a percent at patch
radii of a few kilometers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely import wkt as shapely_wkt
from shapely.geometry import Point, Polygon

from .errors import DomainError

# Meters per degree of latitude (and of longitude at the equator).
M_PER_DEG = 111_320.0

# Geographic train/test split areas used throughout the experiments
# (two disjoint 5x5 degree boxes over the Alps).
DEFAULT_TRAIN_AREA_WKT = "POLYGON ((10 50, 10 45, 15 45, 15 50, 10 50))"
DEFAULT_EVAL_AREA_WKT = "POLYGON ((5 45, 5 50, 10 50, 10 45, 5 45))"


@dataclass(frozen=True)
class GeoCoordinate:
    """A WGS84 point, longitude/latitude in decimal degrees."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0):
            raise DomainError(f"longitude {self.lon} outside [-180, 180]")
        if not (-90.0 <= self.lat <= 90.0):
            raise DomainError(f"latitude {self.lat} outside [-90, 90]")

    def offset_meters(self, east_m: float, north_m: float) -> "GeoCoordinate":
        """Point displaced by the given meters east/north of self."""
        dlat = north_m / M_PER_DEG
        dlon = east_m / (M_PER_DEG * math.cos(math.radians(self.lat)))
        return GeoCoordinate(self.lon + dlon, self.lat + dlat)


def meters_per_degree(lat: float) -> tuple[float, float]:
    """(meters per degree of longitude, meters per degree of latitude) at lat."""
    return M_PER_DEG * math.cos(math.radians(lat)), M_PER_DEG


def resolution_of(radius_m: float, half_extent_px: int) -> float:
    """Spatial resolution in meters/pixel of a patch of the given radius.

    A patch spans ``radius_m`` meters from its center pixel to the edge
    pixel, covered by ``half_extent_px`` pixel steps.
    """
    if radius_m <= 0:
        raise DomainError(f"radius_m must be positive, got {radius_m}")
    if half_extent_px <= 0:
        raise DomainError(f"half_extent_px must be positive, got {half_extent_px}")
    return radius_m / half_extent_px


@dataclass(frozen=True)
class ScaleSpec:
    """Radius, half-extent and the resolution they imply.

    ``resolution == radius_m / half_extent_px`` always holds; the patch side
    is ``2 * half_extent_px + 1`` (odd, center pixel on the query point).
    """

    radius_m: float
    half_extent_px: int = 8

    def __post_init__(self):
        resolution_of(self.radius_m, self.half_extent_px)  # validates

    @property
    def resolution(self) -> float:
        return self.radius_m / self.half_extent_px

    @property
    def side(self) -> int:
        return 2 * self.half_extent_px + 1

    @classmethod
    def from_resolution(cls, resolution: float, half_extent_px: int = 8) -> "ScaleSpec":
        if resolution <= 0:
            raise DomainError(f"resolution must be positive, got {resolution}")
        return cls(resolution * half_extent_px, half_extent_px)


class AOIPolygon:
    """Closed ring of coordinates delimiting where points may be sampled."""

    def __init__(self, vertices: list[GeoCoordinate]):
        if len(vertices) < 3:
            raise DomainError("polygon needs at least 3 vertices")
        self.vertices = list(vertices)
        ring = [(v.lon, v.lat) for v in vertices]
        if ring[0] != ring[-1]:
            ring.append(ring[0])
        self._poly = Polygon(ring)
        if self._poly.area == 0 or not self._poly.is_valid:
            raise DomainError("degenerate polygon")

    @classmethod
    def from_wkt(cls, text: str) -> "AOIPolygon":
        geom = shapely_wkt.loads(text)
        if geom.geom_type != "Polygon":
            raise DomainError(f"expected POLYGON WKT, got {geom.geom_type}")
        coords = [GeoCoordinate(x, y) for x, y in geom.exterior.coords]
        return cls(coords)

    def to_wkt(self) -> str:
        return self._poly.wkt

    def contains(self, coord: GeoCoordinate) -> bool:
        return self._poly.contains(Point(coord.lon, coord.lat))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat)."""
        return self._poly.bounds

    def __repr__(self):
        return f"AOIPolygon({self.to_wkt()})"


def sample_coords_in_polygon(polygon: AOIPolygon, n: int, seed: int) -> list[GeoCoordinate]:
    """n points uniform over the polygon's interior, deterministic per seed.

    Rejection sampling over the bounding box; for the box-shaped areas used
    here nearly every draw is accepted.
    """
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    min_lon, min_lat, max_lon, max_lat = polygon.bounds
    out: list[GeoCoordinate] = []
    while len(out) < n:
        m = max(16, 2 * (n - len(out)))
        lons = rng.uniform(min_lon, max_lon, size=m)
        lats = rng.uniform(min_lat, max_lat, size=m)
        for lon, lat in zip(lons, lats):
            c = GeoCoordinate(float(lon), float(lat))
            if polygon.contains(c):
                out.append(c)
                if len(out) == n:
                    break
    return out
