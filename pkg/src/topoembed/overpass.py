"""Overpass QL query client with an on-disk CSV cache.

Node-only queries (the classes of interest are point features). Responses
are cached as the canonical ``lon,lat`` CSV keyed by (selector, region,
date), so experiments never re-hit the endpoint within a day and tests can
run entirely offline against a stub session.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import time
from pathlib import Path

import requests

from .errors import EmptyClassError, NetworkError
from .geometry import AOIPolygon, GeoCoordinate
from .labels import ClassTag, load_coords_csv, save_coords_csv

DEFAULT_ENDPOINT = "https://overpass-api.de/api/interpreter"


def build_query(tag: ClassTag, region: AOIPolygon) -> str:
    key, value = tag.osm_selector.split("=", 1)
    ring = " ".join(f"{v.lat} {v.lon}" for v in region.vertices)
    return (
        "[out:json][timeout:180];\n"
        f'node["{key}"="{value}"](poly:"{ring}");\n'
        "out;"
    )


class OverpassClient:
    """Single-flight query client; concurrent callers share the CSV cache."""

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, cache_dir=None,
                 session: requests.Session | None = None, max_retries: int = 3,
                 retry_wait_s: float = 5.0, timeout_s: float = 200.0):
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.session = session or requests.Session()
        self.max_retries = max_retries
        self.retry_wait_s = retry_wait_s
        self.timeout_s = timeout_s

    def _cache_path(self, tag: ClassTag, region: AOIPolygon) -> Path | None:
        if self.cache_dir is None:
            return None
        date = _dt.date.today().isoformat()
        key = hashlib.sha256(
            f"{tag.osm_selector}|{region.to_wkt()}|{date}".encode()
        ).hexdigest()[:16]
        return self.cache_dir / f"overpass_{tag.name}_{key}.csv"

    def query(self, tag: ClassTag, region: AOIPolygon) -> list[GeoCoordinate]:
        cache = self._cache_path(tag, region)
        if cache is not None and cache.exists():
            return [c for c, _ in load_coords_csv(cache)]

        ql = build_query(tag, region)
        payload = None
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = self.session.post(self.endpoint, data={"data": ql},
                                         timeout=self.timeout_s)
                resp.raise_for_status()
                payload = resp.json()
                break
            except (requests.RequestException, ValueError) as e:
                last_err = e
                if attempt + 1 < self.max_retries:
                    time.sleep(self.retry_wait_s * (attempt + 1))
        if payload is None:
            raise NetworkError(
                f"overpass query failed after {self.max_retries} retries: {last_err}",
                retries=self.max_retries)

        coords = [
            GeoCoordinate(float(el["lon"]), float(el["lat"]))
            for el in payload.get("elements", [])
            if el.get("type") == "node" and "lon" in el and "lat" in el
        ]
        if not coords:
            raise EmptyClassError(
                f"overpass returned no nodes for {tag.osm_selector!r}")

        if cache is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            save_coords_csv(cache, coords)
        return coords
