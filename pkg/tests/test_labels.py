import numpy as np
import pytest

from topoembed.errors import CapacityError, DomainError, EmptyClassError
from topoembed.geometry import (
    DEFAULT_EVAL_AREA_WKT,
    DEFAULT_TRAIN_AREA_WKT,
    AOIPolygon,
    GeoCoordinate,
    ScaleSpec,
    sample_coords_in_polygon,
)
from topoembed.labels import (
    ClassTag,
    LabeledCoordSet,
    build_class_dataset,
    load_class_coords,
    load_coords_csv,
    paired_class_dataset,
    save_coords_csv,
    to_image_dataset,
)


@pytest.fixture()
def train_region():
    return AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)


class TestClassTag:
    def test_valid(self):
        t = ClassTag("peak", "natural=peak")
        assert t.osm_selector == "natural=peak"

    def test_invalid(self):
        with pytest.raises(DomainError):
            ClassTag("")
        with pytest.raises(DomainError):
            ClassTag("peak", "natural==peak")


class TestLoadClassCoords:
    def test_csv_containment_filter(self, tmp_path, train_region):
        p = tmp_path / "peaks.csv"
        inside = [GeoCoordinate(11, 46), GeoCoordinate(12, 47),
                  GeoCoordinate(14, 49)]
        outside = [GeoCoordinate(7, 46), GeoCoordinate(11, 52)]
        save_coords_csv(p, inside + outside)
        got = load_class_coords(p, ClassTag("peak"), train_region)
        assert len(got) == 3
        assert got == sorted(got, key=lambda c: (c.lon, c.lat))

    def test_empty_file(self, tmp_path, train_region):
        p = tmp_path / "empty.csv"
        save_coords_csv(p, [])
        with pytest.raises(EmptyClassError):
            load_class_coords(p, ClassTag("peak"), train_region)

    def test_missing_header(self, tmp_path, train_region):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n1,2\n")
        with pytest.raises(DomainError):
            load_class_coords(p, ClassTag("peak"), train_region)

    def test_label_column_roundtrip(self, tmp_path):
        p = tmp_path / "labeled.csv"
        coords = [GeoCoordinate(11, 46), GeoCoordinate(12, 47)]
        save_coords_csv(p, coords, labels=[1, 0])
        back = load_coords_csv(p)
        assert back[0][1] == 1 and back[1][1] == 0
        assert back[0][0] == coords[0]


class TestBuildClassDataset:
    def test_balance(self, train_region):
        positives = sample_coords_in_polygon(train_region, 600, seed=1)
        ds = build_class_dataset(positives, train_region, 1000, seed=2)
        labels = ds.labels()
        assert len(ds) == 1000
        assert labels.sum() == 500

    def test_empty(self, train_region):
        ds = build_class_dataset([], train_region, 0, seed=2)
        assert len(ds) == 0

    def test_deterministic(self, train_region):
        positives = sample_coords_in_polygon(train_region, 60, seed=1)
        a = build_class_dataset(positives, train_region, 100, seed=5)
        b = build_class_dataset(positives, train_region, 100, seed=5)
        assert a.entries == b.entries

    def test_insufficient_positives(self, train_region):
        positives = sample_coords_in_polygon(train_region, 10, seed=1)
        with pytest.raises(CapacityError, match="short by 40"):
            build_class_dataset(positives, train_region, 100, seed=5)

    def test_odd_total_rejected(self, train_region):
        with pytest.raises(DomainError):
            build_class_dataset([], train_region, 7, seed=1)

    def test_no_cross_region_leak(self, train_region):
        test_region = AOIPolygon.from_wkt(DEFAULT_EVAL_AREA_WKT)
        positives = sample_coords_in_polygon(train_region, 100, seed=1)
        ds = build_class_dataset(positives, train_region, 200, seed=3)
        for c, _ in ds.entries:
            assert not test_region.contains(c)

    def test_duplicates_rejected(self, train_region):
        c = GeoCoordinate(12, 47)
        with pytest.raises(DomainError):
            LabeledCoordSet([(c, 1), (c, 0)], ClassTag("x"), train_region, 0)


class TestPairedDataset:
    def test_balanced_from_lists(self, train_region):
        pos = sample_coords_in_polygon(train_region, 30, seed=1)
        neg = sample_coords_in_polygon(train_region, 30, seed=2)
        ds = paired_class_dataset(pos, neg, train_region, seed=3)
        assert len(ds) == 60
        assert ds.labels().sum() == 30


class TestToImageDataset:
    def test_shapes_and_order(self, fractal_raster):
        center = fractal_raster.center
        coords = [center.offset_meters(dx, dy)
                  for dx in (-500, 0, 500) for dy in (-500, 0, 500)]
        pairs, rejected = to_image_dataset(coords, ScaleSpec(240, 8),
                                           fractal_raster)
        assert rejected == 0
        assert len(pairs) == 9
        for patch, label in pairs:
            assert patch.values.shape == (17, 17)
            assert label is None
            assert 0 <= patch.values.min() and patch.values.max() <= 1

    def test_edge_rejection_counts(self, fractal_raster):
        min_lon, min_lat, max_lon, max_lat = fractal_raster.bounds
        bad = GeoCoordinate(min_lon + 1e-6, min_lat + 1e-6)
        good = fractal_raster.center
        pairs, rejected = to_image_dataset([bad, good, bad],
                                           ScaleSpec(240, 8), fractal_raster)
        assert rejected == 2
        assert len(pairs) == 1

    def test_scale_pair_alignment(self, fractal_raster):
        # Same batch at s and 4s: equal length, same centers, and the center
        # pixel of each patch tracks the raster elevation at the coordinate.
        coords = [fractal_raster.center.offset_meters(dx, 0)
                  for dx in (-300, 0, 300)]
        a, _ = to_image_dataset(coords, ScaleSpec(240, 8), fractal_raster)
        b, _ = to_image_dataset(coords, ScaleSpec(960, 8), fractal_raster)
        assert len(a) == len(b) == 3
        for (pa, _), (pb, _) in zip(a, b):
            assert pa.center == pb.center
