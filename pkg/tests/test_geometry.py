import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoembed.errors import DomainError
from topoembed.geometry import (
    DEFAULT_EVAL_AREA_WKT,
    DEFAULT_TRAIN_AREA_WKT,
    M_PER_DEG,
    AOIPolygon,
    GeoCoordinate,
    ScaleSpec,
    resolution_of,
    sample_coords_in_polygon,
)


class TestResolution:
    def test_known_values(self):
        assert resolution_of(240, 8) == 30
        assert resolution_of(240, 24) == 10
        assert resolution_of(8, 8) == 1

    @pytest.mark.parametrize("r,n", [(0, 8), (-1, 8), (240, 0), (240, -3)])
    def test_non_positive_rejected(self, r, n):
        with pytest.raises(DomainError):
            resolution_of(r, n)

    def test_scale_spec_identity(self):
        spec = ScaleSpec(radius_m=240, half_extent_px=8)
        assert spec.resolution * spec.half_extent_px == spec.radius_m
        assert spec.side == 17

    def test_from_resolution_roundtrip_dyadic(self):
        # half_extent 8 is a power of two, so the conversion is exact.
        spec = ScaleSpec.from_resolution(30.0)
        assert spec.resolution == 30.0
        assert spec.radius_m == 240.0

    @given(st.floats(min_value=1e-3, max_value=1e6,
                     allow_nan=False, allow_infinity=False),
           st.integers(min_value=1, max_value=64))
    def test_resolution_matches_definition(self, radius, n):
        spec = ScaleSpec(radius_m=radius, half_extent_px=n)
        assert spec.resolution == radius / n
        assert spec.side % 2 == 1


class TestGeoCoordinate:
    def test_domain(self):
        GeoCoordinate(-180, -90)
        GeoCoordinate(180, 90)
        with pytest.raises(DomainError):
            GeoCoordinate(999, 0)
        with pytest.raises(DomainError):
            GeoCoordinate(0, -91)

    def test_offset_north(self):
        c = GeoCoordinate(10.0, 45.0).offset_meters(0, M_PER_DEG)
        assert c.lat == pytest.approx(46.0)
        assert c.lon == 10.0

    def test_offset_east_scales_with_latitude(self):
        c = GeoCoordinate(10.0, 60.0).offset_meters(M_PER_DEG, 0)
        # cos(60 deg) = 0.5, so one "equator degree" of meters spans 2 degrees.
        assert c.lon == pytest.approx(12.0)


class TestAOIPolygon:
    def test_wkt_roundtrip(self):
        poly = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        assert len(poly.vertices) == 5
        assert poly.vertices[0].lon == poly.vertices[-1].lon
        assert poly.contains(GeoCoordinate(12.5, 47.5))
        assert not poly.contains(GeoCoordinate(7.0, 47.5))

    def test_degenerate_rejected(self):
        with pytest.raises(DomainError):
            AOIPolygon([GeoCoordinate(0, 0), GeoCoordinate(1, 1)])
        with pytest.raises(DomainError):
            AOIPolygon([GeoCoordinate(0, 0), GeoCoordinate(1, 1),
                        GeoCoordinate(2, 2)])

    def test_train_eval_areas_disjoint(self):
        train = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        test = AOIPolygon.from_wkt(DEFAULT_EVAL_AREA_WKT)
        for c in sample_coords_in_polygon(train, 200, seed=3):
            assert not test.contains(c)


class TestSampling:
    def test_inside_train_polygon(self):
        poly = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        pts = sample_coords_in_polygon(poly, 100, seed=7)
        assert len(pts) == 100
        for p in pts:
            assert 10 <= p.lon <= 15
            assert 45 <= p.lat <= 50

    def test_empty(self):
        poly = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        assert sample_coords_in_polygon(poly, 0, seed=1) == []

    def test_deterministic(self):
        poly = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        a = sample_coords_in_polygon(poly, 50, seed=11)
        b = sample_coords_in_polygon(poly, 50, seed=11)
        assert a == b
        c = sample_coords_in_polygon(poly, 50, seed=12)
        assert a != c

    def test_negative_count_rejected(self):
        poly = AOIPolygon.from_wkt(DEFAULT_TRAIN_AREA_WKT)
        with pytest.raises(DomainError):
            sample_coords_in_polygon(poly, -1, seed=1)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_containment_property(self, seed):
        poly = AOIPolygon.from_wkt(DEFAULT_EVAL_AREA_WKT)
        for p in sample_coords_in_polygon(poly, 5, seed=seed):
            assert poly.contains(p)
