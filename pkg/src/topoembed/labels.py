"""Balanced labeled coordinate datasets for classification experiments.

Positives come from a coordinate file or a live query client; negatives are
uniform-random points in the region (not verified absent of the class, which
matches the evaluation protocol: contamination is part of the metric).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BoundaryError,
    CapacityError,
    DataQualityError,
    DomainError,
    EmptyClassError,
)
from .geometry import AOIPolygon, GeoCoordinate, ScaleSpec, sample_coords_in_polygon
from .raster import ElevationRaster, extract_patch, normalize_patch

logger = logging.getLogger(__name__)

# Coordinates closer than this (degrees, per axis) are duplicates.
DEDUP_EPS_DEG = 1e-6


@dataclass(frozen=True)
class ClassTag:
    """A named class with its map-feature selector (``key=value``)."""

    name: str
    osm_selector: str = ""

    def __post_init__(self):
        if not self.name:
            raise DomainError("class name must be non-empty")
        if self.osm_selector and self.osm_selector.count("=") != 1:
            raise DomainError(
                f"selector must look like key=value, got {self.osm_selector!r}")


@dataclass
class LabeledCoordSet:
    """Balanced (coordinate, 0/1 label) entries for one class and region."""

    entries: list[tuple[GeoCoordinate, int]]
    class_tag: ClassTag
    region: AOIPolygon
    seed: int

    def __post_init__(self):
        n_pos = sum(1 for _, y in self.entries if y == 1)
        n = len(self.entries)
        if n % 2 == 0 and n_pos * 2 != n:
            raise DomainError(
                f"unbalanced dataset: {n_pos} positives of {n} entries")
        keys = {(round(c.lon / DEDUP_EPS_DEG), round(c.lat / DEDUP_EPS_DEG))
                for c, _ in self.entries}
        if len(keys) != n:
            raise DomainError("duplicate coordinates in dataset")
        for c, _ in self.entries:
            if not self.region.contains(c):
                raise DomainError(f"coordinate {c} outside region")

    def __len__(self):
        return len(self.entries)

    def coords(self) -> list[GeoCoordinate]:
        return [c for c, _ in self.entries]

    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.entries], dtype=np.int64)


def load_coords_csv(path) -> list[tuple[GeoCoordinate, int | None]]:
    """Read a ``lon,lat[,label]`` CSV."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "lon" not in reader.fieldnames:
            raise DomainError(f"{path}: expected a lon,lat[,label] header")
        has_label = "label" in reader.fieldnames
        for row in reader:
            label = int(row["label"]) if has_label and row["label"] != "" else None
            out.append((GeoCoordinate(float(row["lon"]), float(row["lat"])), label))
    return out


def save_coords_csv(path, coords, labels=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if labels is None:
            writer.writerow(["lon", "lat"])
            for c in coords:
                writer.writerow([repr(c.lon), repr(c.lat)])
        else:
            writer.writerow(["lon", "lat", "label"])
            for c, y in zip(coords, labels):
                writer.writerow([repr(c.lon), repr(c.lat), int(y)])


def load_class_coords(source, tag: ClassTag, region: AOIPolygon) -> list[GeoCoordinate]:
    """Coordinates of one class inside ``region``, sorted by (lon, lat).

    ``source`` is a coordinate CSV path or a query client exposing
    ``query(tag, region)`` (see :mod:`topoembed.overpass`).
    """
    if hasattr(source, "query"):
        coords = source.query(tag, region)
    else:
        coords = [c for c, _ in load_coords_csv(Path(source))]
    inside = sorted((c for c in coords if region.contains(c)),
                    key=lambda c: (c.lon, c.lat))
    if not inside:
        raise EmptyClassError(
            f"no {tag.name!r} coordinates inside region (source: {source})")
    return inside


def build_class_dataset(positives: list[GeoCoordinate], region: AOIPolygon,
                        total_n: int, seed: int,
                        tag: ClassTag | None = None) -> LabeledCoordSet:
    """Half class locations (y=1), half random in-region points (y=0)."""
    if total_n < 0 or total_n % 2 != 0:
        raise DomainError(f"total_n must be even and >= 0, got {total_n}")
    half = total_n // 2
    if len(positives) < half:
        raise CapacityError(
            f"need {half} positives, only {len(positives)} available "
            f"(short by {half - len(positives)})")

    rng = np.random.default_rng(seed)
    pos_idx = rng.choice(len(positives), size=half, replace=False)
    chosen = [positives[i] for i in pos_idx]

    seen = {(round(c.lon / DEDUP_EPS_DEG), round(c.lat / DEDUP_EPS_DEG))
            for c in chosen}
    negatives: list[GeoCoordinate] = []
    attempt = 0
    while len(negatives) < half:
        batch = sample_coords_in_polygon(region, half - len(negatives),
                                         seed=int(rng.integers(2**31)))
        for c in batch:
            key = (round(c.lon / DEDUP_EPS_DEG), round(c.lat / DEDUP_EPS_DEG))
            if key not in seen:
                seen.add(key)
                negatives.append(c)
        attempt += 1
        if attempt > 100:
            raise CapacityError("could not sample distinct negatives")

    entries = [(c, 1) for c in chosen] + [(c, 0) for c in negatives]
    order = rng.permutation(len(entries))
    entries = [entries[i] for i in order]
    return LabeledCoordSet(entries, tag or ClassTag("unnamed"), region, seed)


def paired_class_dataset(positives: list[GeoCoordinate],
                         negatives: list[GeoCoordinate],
                         region: AOIPolygon, seed: int,
                         tag: ClassTag | None = None) -> LabeledCoordSet:
    """Balanced set from two explicit coordinate lists (e.g. peaks vs pits)."""
    n = min(len(positives), len(negatives))
    rng = np.random.default_rng(seed)
    pos = [positives[i] for i in rng.choice(len(positives), n, replace=False)]
    neg = [negatives[i] for i in rng.choice(len(negatives), n, replace=False)]
    entries = [(c, 1) for c in pos] + [(c, 0) for c in neg]
    order = rng.permutation(len(entries))
    return LabeledCoordSet([entries[i] for i in order],
                           tag or ClassTag("paired"), region, seed)


def to_image_dataset(coords, scale: ScaleSpec, raster: ElevationRaster):
    """Normalized patches for a coordinate batch or LabeledCoordSet.

    Coordinates rejected by extraction (out of bounds, nodata) are dropped;
    output order matches input order. Returns (pairs, n_rejected) where each
    pair is (ElevationPatch, label) with label None for unlabeled input.
    """
    if isinstance(coords, LabeledCoordSet):
        items = list(coords.entries)
    elif coords and isinstance(coords[0], tuple):
        items = list(coords)
    else:
        items = [(c, None) for c in coords]

    pairs = []
    rejected = 0
    for c, y in items:
        try:
            patch = normalize_patch(extract_patch(raster, c, scale))
        except (BoundaryError, DataQualityError):
            rejected += 1
            continue
        pairs.append((patch, y))

    if items and rejected / len(items) > 0.20:
        logger.warning("to_image_dataset: %d/%d coordinates rejected",
                       rejected, len(items))
    return pairs, rejected
