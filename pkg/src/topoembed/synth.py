"""Synthetic fractal terrain and plantable test structures.

Diamond-square gives a statistically self-similar (power-law spectrum)
surface, which is what makes desk-scale multi-scale experiments meaningful
in place of a real DTM. Planted bumps/pits/ridges provide classes with a
known footprint for plant-and-recover oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import M_PER_DEG, GeoCoordinate, meters_per_degree
from .raster import ElevationRaster, GeoTransform

# Default anchor well inside the train split area.
DEFAULT_ANCHOR = GeoCoordinate(12.5, 47.5)


def _is_pow2_plus_1(n: int) -> bool:
    m = n - 1
    return n >= 5 and (m & (m - 1)) == 0


def _diamond_square(rng: np.random.Generator, side: int, roughness: float,
                    corner_amp: float = 1.0) -> np.ndarray:
    """Classic diamond-square on a (side x side) grid, unit amplitude.

    Per-octave displacement amplitude decays by ``roughness`` each level;
    draw order is fixed (corners, then diamond/square per level, row-major)
    so output is a pure function of the rng state.
    """
    g = np.zeros((side, side))
    g[0, 0], g[0, -1], g[-1, 0], g[-1, -1] = corner_amp * rng.uniform(-1, 1, 4)

    step = side - 1
    amp = 1.0
    while step > 1:
        half = step // 2
        amp *= roughness

        # Diamond step: square centers get the corner mean plus a displacement.
        c = np.arange(half, side, step)
        rr, cc = np.meshgrid(c, c, indexing="ij")
        corner_mean = (
            g[rr - half, cc - half]
            + g[rr - half, cc + half]
            + g[rr + half, cc - half]
            + g[rr + half, cc + half]
        ) / 4.0
        g[rr, cc] = corner_mean + amp * rng.uniform(-1, 1, rr.shape)

        # Square step: edge midpoints average their orthogonal neighbors
        # (3 at the border, 4 inside).
        idx = np.arange(0, side, half)
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        parity = ((rr + cc) // half) % 2 == 1
        pr = rr[parity]
        pc = cc[parity]

        acc = np.zeros(pr.shape)
        cnt = np.zeros(pr.shape)
        for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
            nr = pr + dr
            nc = pc + dc
            ok = (nr >= 0) & (nr < side) & (nc >= 0) & (nc < side)
            acc[ok] += g[nr[ok], nc[ok]]
            cnt[ok] += 1
        g[pr, pc] = acc / cnt + amp * rng.uniform(-1, 1, pr.shape)

        step = half
    return g


def synth_fractal_raster(
    seed: int,
    side_px: int,
    roughness: float = 0.55,
    base_resolution: float = 30.0,
    anchor: GeoCoordinate = DEFAULT_ANCHOR,
    base_elevation_m: float = 800.0,
    relief_amp_m: float = 400.0,
) -> ElevationRaster:
    """Deterministic fractal terrain raster centered on ``anchor``.

    ``side_px`` must be 2**m + 1 (m >= 2). The grid's nominal resolution is
    ``base_resolution`` meters/pixel, converted to degrees at the anchor
    latitude so the raster is a proper EPSG:4326 grid.
    """
    if not _is_pow2_plus_1(side_px):
        raise DomainError(f"side_px must be 2**m + 1 with m >= 2, got {side_px}")
    if not (0 < roughness <= 1):
        raise DomainError(f"roughness must be in (0, 1], got {roughness}")
    if base_resolution <= 0:
        raise DomainError("base_resolution must be positive")

    rng = np.random.default_rng(seed)
    g = _diamond_square(rng, side_px, roughness)
    values = base_elevation_m + relief_amp_m * g

    m_lon, m_lat = meters_per_degree(anchor.lat)
    px_lon = base_resolution / m_lon
    px_lat = base_resolution / m_lat
    transform = GeoTransform(
        ul_lon=anchor.lon - px_lon * side_px / 2,
        ul_lat=anchor.lat + px_lat * side_px / 2,
        px_deg_lon=px_lon,
        px_deg_lat=px_lat,
    )
    return ElevationRaster(values, transform, nodata=None,
                           source_resolution=base_resolution)


# ---------------------------------------------------------------------------
# Planted structures (construction-time mutation only; rasters are treated
# as immutable once handed to extraction/training code).
# ---------------------------------------------------------------------------

def _meter_grids(raster: ElevationRaster, origin: GeoCoordinate):
    """(east_m, north_m) of every pixel center relative to ``origin``."""
    h, w = raster.shape
    lon, _ = raster.transform.pixel_to_geo(0, np.arange(w))
    _, lat = raster.transform.pixel_to_geo(np.arange(h), 0)
    m_lon, m_lat = meters_per_degree(origin.lat)
    east = (lon - origin.lon) * m_lon
    north = (lat - origin.lat) * m_lat
    return east[np.newaxis, :], north[:, np.newaxis]


def add_gaussian_bump(raster: ElevationRaster, center: GeoCoordinate,
                      sigma_m: float, amplitude_m: float) -> None:
    """Add a radially symmetric Gaussian hill (or pit if amplitude < 0)."""
    east, north = _meter_grids(raster, center)
    d2 = east**2 + north**2
    raster.values += amplitude_m * np.exp(-d2 / (2 * sigma_m**2))


def add_ridge(raster: ElevationRaster, start: GeoCoordinate, end: GeoCoordinate,
              width_m: float, amplitude_m: float) -> None:
    """Add an elongated ridge with Gaussian cross-section between two points."""
    east, north = _meter_grids(raster, start)
    m_lon, m_lat = meters_per_degree(start.lat)
    ex = (end.lon - start.lon) * m_lon
    ey = (end.lat - start.lat) * m_lat
    length = math.hypot(ex, ey)
    if length == 0:
        raise DomainError("ridge endpoints coincide")
    ux, uy = ex / length, ey / length
    # Distance to the segment: along-axis clamped projection + cross distance.
    t = np.clip(east * ux + north * uy, 0.0, length)
    dx = east - t * ux
    dy = north - t * uy
    d2 = dx**2 + dy**2
    raster.values += amplitude_m * np.exp(-d2 / (2 * width_m**2))


def _sample_separated_points(rng: np.random.Generator, raster: ElevationRaster,
                             n: int, margin_m: float, min_sep_m: float,
                             avoid: list[GeoCoordinate] | None = None,
                             max_tries: int = 20000) -> list[GeoCoordinate]:
    """Uniform raster-interior points, pairwise at least ``min_sep_m`` apart."""
    min_lon, min_lat, max_lon, max_lat = raster.bounds
    m_lon, m_lat = meters_per_degree((min_lat + max_lat) / 2)
    dlon = margin_m / m_lon
    dlat = margin_m / m_lat
    picked: list[GeoCoordinate] = []
    guard = list(avoid or [])
    for _ in range(max_tries):
        if len(picked) == n:
            break
        lon = float(rng.uniform(min_lon + dlon, max_lon - dlon))
        lat = float(rng.uniform(min_lat + dlat, max_lat - dlat))
        ok = True
        for p in picked + guard:
            de = (p.lon - lon) * m_lon
            dn = (p.lat - lat) * m_lat
            if de * de + dn * dn < min_sep_m**2:
                ok = False
                break
        if ok:
            picked.append(GeoCoordinate(lon, lat))
    if len(picked) < n:
        raise DomainError(
            f"could not place {n} points with separation {min_sep_m} m "
            f"(placed {len(picked)})"
        )
    return picked


@dataclass
class PlantedTerrain:
    """Fractal raster with structures of known class, scale and position."""

    raster: ElevationRaster
    coords: dict[str, list[GeoCoordinate]] = field(default_factory=dict)
    footprint_m: dict[str, float] = field(default_factory=dict)
    ridge_segments: list[tuple[GeoCoordinate, GeoCoordinate]] = field(
        default_factory=list)


def distance_to_ridge_m(planted: PlantedTerrain, coord: GeoCoordinate) -> float:
    """Meters from `coord` to the nearest planted ridge spine (inf if none)."""
    best = math.inf
    m_lon, m_lat = meters_per_degree(coord.lat)
    for start, end in planted.ridge_segments:
        ax = (start.lon - coord.lon) * m_lon
        ay = (start.lat - coord.lat) * m_lat
        bx = (end.lon - coord.lon) * m_lon
        by = (end.lat - coord.lat) * m_lat
        dx, dy = bx - ax, by - ay
        seg_len2 = dx * dx + dy * dy
        t = 0.0 if seg_len2 == 0 else max(0.0, min(1.0, -(ax * dx + ay * dy)
                                                   / seg_len2))
        px, py = ax + t * dx, ay + t * dy
        best = min(best, math.hypot(px, py))
    return best


def jittered_class_coords(centers: list[GeoCoordinate], n: int, jitter_m: float,
                          seed: int) -> list[GeoCoordinate]:
    """n distinct coordinates scattered around the given structure centers.

    Lets a few dozen planted structures back hundreds of labeled examples:
    any point within a small fraction of the footprint still shows the
    structure in its patch.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        c = centers[i % len(centers)]
        ang = float(rng.uniform(0, 2 * math.pi))
        rad = float(rng.uniform(0, jitter_m))
        out.append(c.offset_meters(math.cos(ang) * rad, math.sin(ang) * rad))
    return out


def make_planted_terrain(
    seed: int,
    side_px: int = 1025,
    base_resolution: float = 30.0,
    roughness: float = 0.55,
    relief_amp_m: float = 250.0,
    n_per_class: int = 40,
    peak_sigma_m: float = 240.0,
    peak_amp_m: float = 700.0,
    small_sigma_m: float = 60.0,
    small_amp_m: float = 260.0,
    ridge_len_m: float = 1500.0,
    ridge_width_m: float = 120.0,
    ridge_amp_m: float = 500.0,
    classes: tuple[str, ...] = ("peak", "pit", "smallpeak", "ridge"),
) -> PlantedTerrain:
    """Fractal terrain with planted peaks, pits, small peaks and ridges.

    Peaks/pits have a footprint matched to a 240 m patch radius (30 m/px at
    half-extent 8); small peaks sit one octave finer. Ridges are placed by
    their midpoint and their spine sample points are recorded.
    """
    raster = synth_fractal_raster(seed, side_px, roughness, base_resolution,
                                  relief_amp_m=relief_amp_m)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB00C]))
    sigma_max = max(peak_sigma_m, small_sigma_m)
    margin = 5 * sigma_max
    sep = 6 * peak_sigma_m

    out = PlantedTerrain(raster)
    placed: list[GeoCoordinate] = []

    bump_classes = {
        "peak": (peak_sigma_m, peak_amp_m),
        "pit": (peak_sigma_m, -peak_amp_m),
        "smallpeak": (small_sigma_m, small_amp_m),
    }
    for name, (sigma, amp) in bump_classes.items():
        if name not in classes:
            continue
        centers = _sample_separated_points(rng, raster, n_per_class, margin,
                                           sep, placed)
        for p in centers:
            add_gaussian_bump(raster, p, sigma, amp)
        out.coords[name] = centers
        out.footprint_m[name] = sigma
        placed += centers

    if "ridge" in classes:
        n_ridges = max(2, n_per_class // 5)
        half_len = ridge_len_m / 2
        mids = _sample_separated_points(rng, raster, n_ridges,
                                        margin + half_len, sep + half_len,
                                        placed)
        spine: list[GeoCoordinate] = []
        n_spine = max(1, n_per_class // n_ridges)
        for mid in mids:
            theta = float(rng.uniform(0, math.pi))
            ux, uy = math.cos(theta), math.sin(theta)
            start = mid.offset_meters(-ux * half_len, -uy * half_len)
            end = mid.offset_meters(ux * half_len, uy * half_len)
            add_ridge(raster, start, end, ridge_width_m, ridge_amp_m)
            out.ridge_segments.append((start, end))
            for t in np.linspace(-0.7, 0.7, n_spine):
                spine.append(mid.offset_meters(ux * half_len * float(t),
                                               uy * half_len * float(t)))
        out.coords["ridge"] = spine
        out.footprint_m["ridge"] = ridge_width_m

    return out


def planted_class_dataset(planted: PlantedTerrain, name: str, total_n: int,
                          seed: int, jitter_m: float | None = None,
                          inset_m: float = 1000.0):
    """Balanced labeled set for one planted class: jittered structure
    coordinates as positives, random in-raster points as negatives."""
    from .labels import ClassTag, build_class_dataset

    if name not in planted.coords:
        raise DomainError(f"no planted class {name!r}; have "
                          f"{sorted(planted.coords)}")
    from .labels import DEDUP_EPS_DEG

    jitter = jitter_m if jitter_m is not None else planted.footprint_m[name] / 2
    region = planted.raster.region(inset_m)
    # oversample: structures near the raster edge lose some jitters to the
    # inset, and quantization-identical jitter pairs are dropped
    half = total_n // 2
    positives, seen = [], set()
    for c in jittered_class_coords(planted.coords[name], 2 * half, jitter,
                                   seed):
        key = (round(c.lon / DEDUP_EPS_DEG), round(c.lat / DEDUP_EPS_DEG))
        if key in seen or not region.contains(c):
            continue
        seen.add(key)
        positives.append(c)
        if len(positives) == half:
            break
    return build_class_dataset(positives, region, total_n, seed + 1,
                               tag=ClassTag(name))
