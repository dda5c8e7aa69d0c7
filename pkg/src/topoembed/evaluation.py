"""Experiments: scale scan, linear probes, grid classification, KNN retrieval."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import joblib
import numpy as np
from sklearn.svm import SVC

from .baselines import EmbeddingModelHandle, fit_patch_cnn
from .errors import (
    BoundaryError,
    CapacityError,
    ContractError,
    DataQualityError,
    DomainError,
)
from .geometry import AOIPolygon, GeoCoordinate, ScaleSpec, meters_per_degree
from .labels import LabeledCoordSet, to_image_dataset
from .raster import ElevationRaster, extract_patch, normalize_patch

logger = logging.getLogger(__name__)

PROBE_EPOCHS = 15
SVM_C = 1.0


def embed_coords(model: EmbeddingModelHandle, coords: list[GeoCoordinate],
                 raster: ElevationRaster, scale: ScaleSpec):
    """Embed patches at `coords`; skips out-of-raster points.

    Returns (vectors (N, D), kept coords, n_rejected).
    """
    xs, kept = [], []
    rejected = 0
    for coord in coords:
        try:
            patch = normalize_patch(extract_patch(raster, coord, scale))
        except (BoundaryError, DataQualityError):
            rejected += 1
            continue
        xs.append(patch.values[None, :, :])
        kept.append(coord)
    if not xs:
        return np.empty((0, model.output_dim)), kept, rejected
    # one patch per forward pass: conv kernels pick batch-size-dependent
    # algorithms whose results differ in the last bits, and self-retrieval
    # promises exact zero distance between index-time and query-time vectors
    vectors = np.stack([model.embed(x) for x in xs]).astype(np.float64)
    return vectors, kept, rejected


# ---------------------------------------------------------------------------
# Scale scan


@dataclass
class ScaleScanResult:
    radii_m: list[float]
    resolutions: list[float]
    mean_accuracy: list[float]
    std_accuracy: list[float]
    seed_accuracies: np.ndarray  # (n_radii, n_seeds)
    seeds: list[int]
    best_resolution: float

    def per_seed_best(self) -> list[float]:
        """Best resolution as voted by each seed independently."""
        return [self.resolutions[int(np.argmax(self.seed_accuracies[:, j]))]
                for j in range(self.seed_accuracies.shape[1])]

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["radius_m", "resolution_m_per_px",
                             "mean_accuracy", "std_accuracy"]
                            + [f"seed_{s}" for s in self.seeds])
            for i, radius in enumerate(self.radii_m):
                writer.writerow(
                    [repr(radius), repr(self.resolutions[i]),
                     repr(self.mean_accuracy[i]), repr(self.std_accuracy[i])]
                    + [repr(float(a)) for a in self.seed_accuracies[i]])


def _probe_split_accuracy(x: np.ndarray, y: np.ndarray, seed: int,
                          epochs: int = PROBE_EPOCHS) -> float:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    n_train = int(round(0.8 * len(x)))
    tr, va = order[:n_train], order[n_train:]
    model = fit_patch_cnn(x[tr], y[tr], seed=seed, epochs=epochs)
    import torch
    with torch.no_grad():
        logits = model(torch.from_numpy(x[va].astype(np.float32)))
    pred = (logits.numpy() > 0).astype(np.float32)
    return float((pred == y[va]).mean())


def scale_scan(dataset: LabeledCoordSet, radii_m: list[float],
               raster: ElevationRaster, n: int = 1000, seeds: int = 10,
               base_seed: int = 0, probe_epochs: int = PROBE_EPOCHS,
               jobs: int = 1) -> ScaleScanResult:
    """Accuracy of a small image classifier per patch radius; the radius where
    accuracy peaks reveals the class's characteristic scale."""
    if not radii_m:
        raise DomainError("need at least one radius")
    n_use = min(n, len(dataset))
    if n_use < 10:
        raise CapacityError(f"need at least 10 labeled coords, have {len(dataset)}")
    entries = list(dataset.entries)[:n_use]
    seed_list = [base_seed + i for i in range(seeds)]

    accs = np.zeros((len(radii_m), len(seed_list)))
    for i, radius in enumerate(radii_m):
        scale = ScaleSpec(radius)
        pairs, rejected = to_image_dataset(entries, scale, raster)
        if len(pairs) < 10:
            raise CapacityError(
                f"only {len(pairs)} usable patches at radius {radius} m "
                f"({rejected} rejected)")
        x = np.stack([p.values[None] for p, _ in pairs]).astype(np.float32)
        y = np.asarray([[float(lbl)] for _, lbl in pairs], dtype=np.float32)
        if jobs != 1:
            accs[i] = joblib.Parallel(n_jobs=jobs)(
                joblib.delayed(_probe_split_accuracy)(x, y, s, probe_epochs)
                for s in seed_list)
        else:
            accs[i] = [_probe_split_accuracy(x, y, s, probe_epochs)
                       for s in seed_list]

    mean = accs.mean(axis=1)
    resolutions = [ScaleSpec(r).resolution for r in radii_m]
    return ScaleScanResult(
        radii_m=[float(r) for r in radii_m],
        resolutions=resolutions,
        mean_accuracy=[float(v) for v in mean],
        std_accuracy=[float(v) for v in accs.std(axis=1)],
        seed_accuracies=accs,
        seeds=seed_list,
        best_resolution=resolutions[int(np.argmax(mean))])


# ---------------------------------------------------------------------------
# SVM probes


@dataclass
class ProbeResult:
    class_name: str
    model_kind: str
    mean_accuracy: float
    std_accuracy: float
    n_train: int
    n_test: int
    n_seeds: int
    accuracies: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.std_accuracy < 0 or self.n_seeds < 1:
            raise ContractError("invalid probe result")

    def as_row(self) -> dict:
        return {"class": self.class_name, "model": self.model_kind,
                "accuracy": f"{100 * self.mean_accuracy:.1f}",
                "std": f"{100 * self.std_accuracy:.1f}",
                "n_train": self.n_train, "n_test": self.n_test,
                "seeds": self.n_seeds}


def _check_not_degenerate(vectors: np.ndarray) -> None:
    if len(vectors) and float(np.ptp(vectors)) == 0.0:
        raise DataQualityError(
            "degenerate embeddings: every vector is identical, the probe "
            "cannot separate anything")


def _balanced_split(labels: np.ndarray, n_train: int, n_test: int,
                    rng: np.random.Generator):
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    need = n_train // 2 + n_test // 2
    for name, idx in (("positive", pos), ("negative", neg)):
        if len(idx) < need:
            raise CapacityError(
                f"need {need} {name} examples for a balanced "
                f"{n_train}/{n_test} split, have {len(idx)} "
                f"(short by {need - len(idx)})")
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    half_tr, half_te = n_train // 2, n_test // 2
    train = np.concatenate([pos[:half_tr], neg[:half_tr]])
    test = np.concatenate([pos[half_tr:half_tr + half_te],
                           neg[half_tr:half_tr + half_te]])
    return rng.permutation(train), rng.permutation(test)


def probe_classification(model: EmbeddingModelHandle, dataset: LabeledCoordSet,
                         raster: ElevationRaster, scale: ScaleSpec,
                         n_train: int = 1000, n_test: int = 200,
                         seeds: int = 10, base_seed: int = 0,
                         shuffle_labels: bool = False,
                         svm_c: float = SVM_C) -> ProbeResult:
    """Linear-SVM accuracy on embeddings over balanced resampled splits."""
    if n_train % 2 or n_test % 2:
        raise DomainError("n_train and n_test must be even for balanced splits")
    pairs, rejected = to_image_dataset(dataset, scale, raster)
    if rejected:
        logger.warning("probe dataset lost %d coords to the raster edge",
                       rejected)
    x = np.stack([p.values[None] for p, _ in pairs])
    labels = np.asarray([int(lbl) for _, lbl in pairs])
    vectors = model.embed(x).astype(np.float64)
    _check_not_degenerate(vectors)

    accuracies = []
    for i in range(seeds):
        rng = np.random.default_rng(base_seed + i)
        train, test = _balanced_split(labels, n_train, n_test, rng)
        y_train, y_test = labels[train], labels[test]
        if shuffle_labels:
            y_train = rng.permutation(y_train)
            y_test = rng.permutation(y_test)
        clf = SVC(kernel="linear", C=svm_c)
        clf.fit(vectors[train], y_train)
        accuracies.append(float(clf.score(vectors[test], y_test)))

    name = dataset.class_tag.name if dataset.class_tag else "unnamed"
    return ProbeResult(class_name=name, model_kind=model.kind,
                       mean_accuracy=float(np.mean(accuracies)),
                       std_accuracy=float(np.std(accuracies)),
                       n_train=n_train, n_test=n_test, n_seeds=seeds,
                       accuracies=accuracies)


@dataclass
class FittedProbe:
    """A linear SVM over embeddings for one class at one scale."""

    class_name: str
    scale_resolution: float
    model_kind: str
    clf: SVC

    def margin(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(self.clf.decision_function(vectors), dtype=np.float64)

    def score(self, vectors: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.margin(vectors)))

    def predict(self, vectors: np.ndarray) -> np.ndarray:
        return self.margin(vectors) > 0

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        joblib.dump({"class_name": self.class_name,
                     "scale_resolution": self.scale_resolution,
                     "model_kind": self.model_kind, "clf": self.clf}, path)

    @classmethod
    def load(cls, path) -> "FittedProbe":
        blob = joblib.load(path)
        return cls(blob["class_name"], blob["scale_resolution"],
                   blob["model_kind"], blob["clf"])


def train_probe(model: EmbeddingModelHandle, dataset: LabeledCoordSet,
                raster: ElevationRaster, scale: ScaleSpec, seed: int = 0,
                svm_c: float = SVM_C) -> FittedProbe:
    """Fit one class probe on the whole dataset (no held-out split)."""
    pairs, _ = to_image_dataset(dataset, scale, raster)
    if len(pairs) < 4:
        raise CapacityError(f"need at least 4 usable samples, have {len(pairs)}")
    x = np.stack([p.values[None] for p, _ in pairs])
    labels = np.asarray([int(lbl) for _, lbl in pairs])
    vectors = model.embed(x).astype(np.float64)
    _check_not_degenerate(vectors)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(vectors))
    clf = SVC(kernel="linear", C=svm_c)
    clf.fit(vectors[order], labels[order])
    name = dataset.class_tag.name if dataset.class_tag else "unnamed"
    return FittedProbe(name, scale.resolution, model.kind, clf)


# ---------------------------------------------------------------------------
# Grid classification


def geojson_dumps(collection: dict) -> str:
    """Canonical serialization shared by CLI output and the HTTP service."""
    return json.dumps(collection, separators=(",", ":"), sort_keys=True)


def grid_classify(region: AOIPolygon, scales: list[float],
                  model: EmbeddingModelHandle, probes: list[FittedProbe],
                  raster: ElevationRaster,
                  stride_m: float | None = None) -> dict:
    """Classify a lattice of points at each scale; positives become GeoJSON
    point features with class, scale and score properties."""
    min_lon, min_lat, max_lon, max_lat = region.bounds
    r_lon_min, r_lat_min, r_lon_max, r_lat_max = raster.bounds
    if (min_lon < r_lon_min or max_lon > r_lon_max
            or min_lat < r_lat_min or max_lat > r_lat_max):
        raise BoundaryError(
            f"region {region.bounds} extends outside the raster "
            f"{raster.bounds}")

    features = []
    lat_mid = (min_lat + max_lat) / 2
    m_lon, m_lat = meters_per_degree(lat_mid)
    for resolution in scales:
        scale = ScaleSpec.from_resolution(float(resolution))
        stride = stride_m if stride_m is not None else scale.radius_m
        dlat = stride / m_lat
        dlon = stride / m_lon
        lats = np.arange(min_lat, max_lat + 1e-12, dlat)
        lons = np.arange(min_lon, max_lon + 1e-12, dlon)
        points = [GeoCoordinate(float(lon), float(lat))
                  for lat in lats for lon in lons]
        points = [p for p in points if region.contains(p)]
        vectors, kept, _ = embed_coords(model, points, raster, scale)
        if not kept:
            continue
        for probe in probes:
            margins = probe.margin(vectors)
            scores = 1.0 / (1.0 + np.exp(-margins))
            for coord, m, s in zip(kept, margins, scores):
                if m > 0:
                    features.append({
                        "type": "Feature",
                        "geometry": {"type": "Point",
                                     "coordinates": [coord.lon, coord.lat]},
                        "properties": {"class": probe.class_name,
                                       "scale": float(resolution),
                                       "score": float(s)},
                    })
    return {"type": "FeatureCollection", "features": features}


# ---------------------------------------------------------------------------
# Embedding index and retrieval


@dataclass
class EmbeddingIndex:
    coords: list[GeoCoordinate]
    vectors: np.ndarray  # (N, D) float64, row-major
    scale_resolution: float
    model_kind: str = "encoder"
    checkpoint_hash: str = ""

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.coords) != len(self.vectors):
            raise ContractError(
                f"index needs one vector per coordinate, got "
                f"{len(self.coords)} coords and {self.vectors.shape} vectors")

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def build_embedding_index(coords: list[GeoCoordinate],
                          model: EmbeddingModelHandle,
                          raster: ElevationRaster, scale: ScaleSpec,
                          checkpoint_hash: str = "") -> EmbeddingIndex:
    if not coords:
        raise DomainError("cannot index an empty coordinate list")
    vectors, kept, rejected = embed_coords(model, coords, raster, scale)
    if rejected:
        logger.warning("index build skipped %d out-of-raster coords", rejected)
    if not kept:
        raise CapacityError("no indexable coordinates inside the raster")
    return EmbeddingIndex(kept, vectors, scale.resolution,
                          model_kind=model.kind,
                          checkpoint_hash=checkpoint_hash)


def save_index(index: EmbeddingIndex, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index.vectors.tofile(out_dir / "vectors.f64")
    with open(out_dir / "coords.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat"])
        for c in index.coords:
            writer.writerow([repr(c.lon), repr(c.lat)])
    manifest = {"count": len(index), "dim": index.dim, "dtype": "float64",
                "scale_resolution": index.scale_resolution,
                "model_kind": index.model_kind,
                "checkpoint_hash": index.checkpoint_hash}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_index(in_dir) -> EmbeddingIndex:
    in_dir = Path(in_dir)
    mpath = in_dir / "manifest.json"
    if not mpath.exists():
        raise ContractError(f"missing index manifest {mpath}")
    manifest = json.loads(mpath.read_text())
    vectors = np.fromfile(in_dir / "vectors.f64", dtype=np.float64)
    vectors = vectors.reshape(int(manifest["count"]), int(manifest["dim"]))
    coords = []
    with open(in_dir / "coords.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            coords.append(GeoCoordinate(float(row[0]), float(row[1])))
    return EmbeddingIndex(coords, vectors,
                          float(manifest["scale_resolution"]),
                          model_kind=manifest.get("model_kind", "encoder"),
                          checkpoint_hash=manifest.get("checkpoint_hash", ""))


def knn_lookup(index: EmbeddingIndex, query_vector: np.ndarray,
               k: int) -> list[tuple[GeoCoordinate, float]]:
    """Exact k nearest entries by Euclidean distance; ties break by (lon, lat)."""
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    if k > len(index):
        raise CapacityError(f"k={k} exceeds index size {len(index)}")
    if k == 0:
        return []
    q = np.asarray(query_vector, dtype=np.float64).reshape(-1)
    if q.shape != (index.dim,):
        raise ContractError(f"query vector must have dim {index.dim}, "
                            f"got {q.shape}")
    dists = np.sqrt(((index.vectors - q) ** 2).sum(axis=1))
    lons = np.asarray([c.lon for c in index.coords])
    lats = np.asarray([c.lat for c in index.coords])
    order = np.lexsort((lats, lons, dists))
    return [(index.coords[i], float(dists[i])) for i in order[:k]]


def knn_retrieve(index: EmbeddingIndex, query_coords: list[GeoCoordinate],
                 k: int, model: EmbeddingModelHandle,
                 raster: ElevationRaster) -> list[tuple[GeoCoordinate, float]]:
    """Embed the query coords at the index's scale, average, return the k
    nearest indexed locations (ascending distance)."""
    if not query_coords:
        raise DomainError("need at least one query coordinate")
    if model.output_dim != index.dim:
        raise ContractError(f"model dim {model.output_dim} does not match "
                            f"index dim {index.dim}")
    scale = ScaleSpec.from_resolution(index.scale_resolution)
    vectors, kept, _ = embed_coords(model, query_coords, raster, scale)
    if len(kept) < len(query_coords):
        raise BoundaryError(
            f"{len(query_coords) - len(kept)} query coordinates cannot be "
            f"embedded (outside the raster at radius {scale.radius_m} m)")
    return knn_lookup(index, vectors.mean(axis=0), k)
