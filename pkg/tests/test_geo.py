import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmsurvey.errors import DomainError
from palmsurvey.geo import (
    MAX_MERCATOR_LAT,
    MERCATOR_EXTENT_M,
    MERCATOR_RADIUS_M,
    GeoPoint,
    MercatorPoint,
    PixelBox,
    TileId,
    bearing_deg,
    box_center_geo,
    destination_point,
    geo_to_mercator,
    geo_to_pixel,
    haversine_m,
    mercator_to_geo,
    pixel_to_geo,
    tile_bounds,
    tile_for_point,
    tile_mercator_bounds,
)

valid_lats = st.floats(-85.0, 85.0)
valid_lons = st.floats(-180.0, 179.999999)


class TestMercator:
    def test_origin_fixed_point(self):
        m = geo_to_mercator(GeoPoint(0, 0))
        assert m.x == 0 and m.y == 0
        p = mercator_to_geo(MercatorPoint(0, 0))
        assert p.lat == 0 and p.lon == 0

    def test_x_approaches_world_extent(self):
        # x = R * lon * pi/180 evaluated independently
        lon = 180 - 1e-9
        m = geo_to_mercator(GeoPoint(0, lon))
        assert m.x == pytest.approx(MERCATOR_RADIUS_M * math.radians(lon), abs=1e-6)
        assert m.x == pytest.approx(20037508.3428, abs=1e-3)

    def test_world_edge_maps_to_lon_180(self):
        p = mercator_to_geo(MercatorPoint(MERCATOR_EXTENT_M, 0))
        assert p.lon == pytest.approx(180.0, abs=1e-9)

    def test_latitude_validity_enforced(self):
        with pytest.raises(DomainError):
            geo_to_mercator(GeoPoint(86.0, 0))
        with pytest.raises(DomainError):
            MercatorPoint(MERCATOR_EXTENT_M * 1.1, 0)

    def test_roundtrip_1000_random_points(self):
        rng = random.Random(42)
        for _ in range(1000):
            p = GeoPoint(rng.uniform(-85, 85), rng.uniform(-180, 180 - 1e-9))
            q = mercator_to_geo(geo_to_mercator(p))
            assert abs(q.lat - p.lat) <= 1e-9
            assert abs(q.lon - p.lon) <= 1e-9

    @given(valid_lats, valid_lons)
    @settings(max_examples=200)
    def test_roundtrip_property(self, lat, lon):
        p = GeoPoint(lat, lon)
        q = mercator_to_geo(geo_to_mercator(p))
        assert abs(q.lat - p.lat) <= 1e-9
        assert abs(q.lon - p.lon) <= 1e-9


class TestTileBounds:
    def test_root_tile_covers_world(self):
        b = tile_bounds(TileId(0, 0, 0))
        assert b.west == -180 and b.east == 180
        assert b.north == pytest.approx(MAX_MERCATOR_LAT, abs=1e-7)
        assert b.south == pytest.approx(-MAX_MERCATOR_LAT, abs=1e-7)

    def test_zoom1_northwest_quadrant(self):
        b = tile_bounds(TileId(1, 0, 0))
        assert b.west == -180 and b.east == 0
        assert b.south == 0
        assert b.north == pytest.approx(MAX_MERCATOR_LAT, abs=1e-7)

    def test_children_partition_parent(self):
        parent = tile_bounds(TileId(0, 0, 0))
        children = [tile_bounds(TileId(1, x, y)) for x in (0, 1) for y in (0, 1)]
        assert min(c.west for c in children) == parent.west
        assert max(c.east for c in children) == parent.east
        assert min(c.south for c in children) == parent.south
        assert max(c.north for c in children) == parent.north
        # Shared interior edges line up exactly.
        assert tile_bounds(TileId(1, 0, 0)).east == tile_bounds(TileId(1, 1, 0)).west
        assert tile_bounds(TileId(1, 0, 0)).south == tile_bounds(TileId(1, 0, 1)).north

    def test_matches_independent_slippy_formula(self):
        rng = random.Random(7)
        for _ in range(200):
            z = rng.randint(0, 20)
            n = 1 << z
            x, y = rng.randrange(n), rng.randrange(n)
            b = tile_bounds(TileId(z, x, y))
            assert b.west == x / n * 360.0 - 180.0
            assert b.east == (x + 1) / n * 360.0 - 180.0
            assert b.north == math.degrees(math.atan(math.sinh(math.pi * (1 - 2 * y / n))))
            assert b.south == math.degrees(
                math.atan(math.sinh(math.pi * (1 - 2 * (y + 1) / n)))
            )

    def test_tile_for_point_inverts_bounds(self):
        rng = random.Random(3)
        for _ in range(200):
            z = rng.randint(1, 20)
            n = 1 << z
            t = TileId(z, rng.randrange(n), rng.randrange(n))
            b = tile_bounds(t)
            interior = GeoPoint((b.south + b.north) / 2, (b.west + b.east) / 2)
            assert tile_for_point(interior, z) == t


class TestPixelToGeo:
    def test_corners_are_tile_bound_corners(self):
        t = TileId(20, 183151, 423233)
        b = tile_bounds(t)
        nw = pixel_to_geo(t, (0, 0))
        se = pixel_to_geo(t, (256, 256))
        assert nw.lat == pytest.approx(b.north, abs=1e-9)
        assert nw.lon == pytest.approx(b.west, abs=1e-9)
        assert se.lat == pytest.approx(b.south, abs=1e-9)
        assert se.lon == pytest.approx(b.east, abs=1e-9)

    def test_midpoint_against_mercator_interpolation_oracle(self):
        t = TileId(20, 183151, 423233)
        p = pixel_to_geo(t, (128, 128))
        m = geo_to_mercator(p)
        x_west, y_south, x_east, y_north = tile_mercator_bounds(t)
        assert m.x == pytest.approx((x_west + x_east) / 2, abs=1e-12 + 1e-9 * abs(m.x))
        assert m.y == pytest.approx((y_south + y_north) / 2, abs=1e-12 + 1e-9 * abs(m.y))

    def test_random_pixels_against_linear_oracle(self):
        rng = random.Random(11)
        for _ in range(300):
            z = rng.randint(10, 21)
            n = 1 << z
            t = TileId(z, rng.randrange(n), rng.randrange(n))
            px = (rng.uniform(0, 256), rng.uniform(0, 256))
            got = geo_to_mercator(pixel_to_geo(t, px))
            x_west, y_south, x_east, y_north = tile_mercator_bounds(t)
            want_x = x_west + (x_east - x_west) * px[0] / 256
            want_y = y_north - (y_north - y_south) * px[1] / 256
            assert got.x == pytest.approx(want_x, rel=1e-12)
            assert got.y == pytest.approx(want_y, rel=1e-12)

    def test_monotone_in_both_axes(self):
        t = TileId(15, 5000, 12000)
        prev_lon = None
        for x in range(0, 257, 16):
            p = pixel_to_geo(t, (x, 100))
            if prev_lon is not None:
                assert p.lon > prev_lon
            prev_lon = p.lon
        prev_lat = None
        for y in range(0, 257, 16):
            p = pixel_to_geo(t, (100, y))
            if prev_lat is not None:
                assert p.lat < prev_lat
            prev_lat = p.lat

    def test_pixel_outside_tile_rejected(self):
        with pytest.raises(DomainError):
            pixel_to_geo(TileId(5, 1, 1), (300, 10))

    def test_geo_to_pixel_roundtrip(self):
        t = TileId(20, 183151, 423233)
        for px in [(0.0, 0.0), (37.5, 190.25), (256.0, 256.0)]:
            back = geo_to_pixel(t, pixel_to_geo(t, px))
            assert back[0] == pytest.approx(px[0], abs=1e-6)
            assert back[1] == pytest.approx(px[1], abs=1e-6)


class TestBoxCenter:
    def test_full_tile_box_is_tile_center(self):
        t = TileId(18, 1000, 2000)
        got = box_center_geo(t, PixelBox(0, 0, 256, 256))
        want = pixel_to_geo(t, (128, 128))
        assert got == want

    def test_small_box_midpoint(self):
        t = TileId(18, 1000, 2000)
        assert box_center_geo(t, PixelBox(10, 10, 12, 12)) == pixel_to_geo(t, (11, 11))

    def test_random_boxes_match_midpoint_oracle(self):
        rng = random.Random(5)
        t = TileId(20, 183151, 423233)
        for _ in range(100):
            x0, y0 = rng.uniform(0, 200), rng.uniform(0, 200)
            b = PixelBox(x0, y0, x0 + rng.uniform(1, 50), y0 + rng.uniform(1, 50))
            want = pixel_to_geo(t, ((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2))
            got = box_center_geo(t, b)
            assert abs(got.lat - want.lat) <= 1e-9
            assert abs(got.lon - want.lon) <= 1e-9


class TestHaversine:
    def test_zero_distance(self):
        p = GeoPoint(32.7, -117.1)
        assert haversine_m(p, p) == 0

    def test_one_degree_at_equator(self):
        assert haversine_m(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(
            111194.93, abs=0.01
        )

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(13)
        for _ in range(200):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            b = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            c = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            assert haversine_m(a, b) == pytest.approx(haversine_m(b, a), rel=1e-12)
            assert haversine_m(a, c) <= haversine_m(a, b) + haversine_m(b, c) + 1e-6


class TestBearing:
    def test_due_north(self):
        assert bearing_deg(GeoPoint(0, 0), GeoPoint(1, 0)) == 0

    def test_due_east(self):
        assert bearing_deg(GeoPoint(0, 0), GeoPoint(0, 1)) == 90

    def test_coincident_points_rejected(self):
        with pytest.raises(DomainError):
            bearing_deg(GeoPoint(1, 1), GeoPoint(1, 1))

    def test_range_and_antisymmetry_for_nearby_points(self):
        rng = random.Random(17)
        for _ in range(200):
            a = GeoPoint(rng.uniform(-60, 60), rng.uniform(-179, 179))
            b = destination_point(a, rng.uniform(0, 360), rng.uniform(1, 80))
            fwd = bearing_deg(a, b)
            rev = bearing_deg(b, a)
            assert 0 <= fwd < 360 and 0 <= rev < 360
            diff = abs((fwd - rev) % 360)
            assert min(diff, 360 - diff) == pytest.approx(180, abs=0.01)

    def test_destination_point_consistency(self):
        a = GeoPoint(32.75, -117.12)
        b = destination_point(a, 37.0, 500.0)
        assert haversine_m(a, b) == pytest.approx(500.0, rel=1e-9)
        assert bearing_deg(a, b) == pytest.approx(37.0, abs=1e-6)
