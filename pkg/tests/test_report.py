import json
import math
import random

import pytest

from palmsurvey.errors import DomainError
from palmsurvey.geo import GeoBox, GeoPoint, destination_point, geo_to_mercator
from palmsurvey.planner import AreaOfInterest
from palmsurvey.registry import TreeRecord
from palmsurvey.report import (
    build_heatmap,
    cost_comparison,
    export_geojson,
    hotspots,
    render_html_report,
)
from palmsurvey.timeline import build_timeline

AOI = AreaOfInterest(name="t", boundary=GeoBox(32.745, -117.125, 32.755, -117.115))
CENTER = GeoPoint(32.75, -117.12)


class TestHeatmap:
    def test_single_tree_single_cell(self):
        grid = build_heatmap([TreeRecord.at(CENTER)], AOI, cell_size_m=100)
        assert grid.counts.sum() == 1
        assert grid.remainder == 0

    def test_two_trees_one_cell(self):
        trees = [TreeRecord.at(CENTER), TreeRecord.at(destination_point(CENTER, 90.0, 5.0))]
        grid = build_heatmap(trees, AOI, cell_size_m=100)
        assert grid.counts.max() == 2

    def test_outside_tree_goes_to_remainder(self):
        outside = TreeRecord.at(GeoPoint(33.0, -117.12))
        grid = build_heatmap([outside], AOI, cell_size_m=100)
        assert grid.counts.sum() == 0
        assert grid.remainder == 1

    def test_counts_match_brute_force_cell_oracle(self):
        rng = random.Random(101)
        trees = [
            TreeRecord.at(
                destination_point(CENTER, rng.uniform(0, 360), rng.uniform(0, 600))
            )
            for _ in range(500)
        ]
        cell = 100.0
        grid = build_heatmap(trees, AOI, cell_size_m=cell)
        box = AOI.bounding_box()
        sw = geo_to_mercator(GeoPoint(box.south, box.west))
        ne = geo_to_mercator(GeoPoint(box.north, box.east))
        rows, cols = grid.counts.shape
        brute = [[0] * cols for _ in range(rows)]
        rem = 0
        for t in trees:
            m = geo_to_mercator(t.location)
            c = math.floor((m.x - sw.x) / cell)
            r = math.floor((ne.y - m.y) / cell)
            if 0 <= r < rows and 0 <= c < cols:
                brute[r][c] += 1
            else:
                rem += 1
        assert grid.counts.tolist() == brute
        assert grid.remainder == rem

    def test_conservation(self):
        rng = random.Random(103)
        trees = [
            TreeRecord.at(destination_point(CENTER, rng.uniform(0, 360), rng.uniform(0, 1500)))
            for _ in range(200)
        ]
        grid = build_heatmap(trees, AOI, cell_size_m=75)
        assert grid.counts.sum() + grid.remainder == 200

    def test_bad_cell_size(self):
        with pytest.raises(DomainError):
            build_heatmap([], AOI, cell_size_m=0)


class TestHotspots:
    def test_uniform_below_threshold_is_empty(self):
        grid = build_heatmap([TreeRecord.at(CENTER)], AOI, cell_size_m=100)
        assert hotspots(grid, min_count=2) == []

    def test_dense_cell_ranked_first(self):
        trees = [TreeRecord.at(destination_point(CENTER, 90.0, i * 0.5)) for i in range(5)]
        far = destination_point(CENTER, 0.0, 400.0)
        trees += [TreeRecord.at(destination_point(far, 90.0, i * 0.5)) for i in range(2)]
        grid = build_heatmap(trees, AOI, cell_size_m=100)
        spots = hotspots(grid, min_count=1)
        assert spots[0][1] == 5

    def test_matches_filter_sort_oracle(self):
        rng = random.Random(107)
        trees = [
            TreeRecord.at(destination_point(CENTER, rng.uniform(0, 360), rng.uniform(0, 600)))
            for _ in range(300)
        ]
        grid = build_heatmap(trees, AOI, cell_size_m=120)
        got = hotspots(grid, min_count=3)
        want = sorted(
            (
                ((r, c), int(grid.counts[r, c]))
                for r in range(grid.counts.shape[0])
                for c in range(grid.counts.shape[1])
                if grid.counts[r, c] >= 3
            ),
            key=lambda rc: (-rc[1], rc[0]),
        )
        assert got == want


class TestCostComparison:
    def test_reference_neighborhood_numbers(self):
        # 1136 panoramas x 4 views vs 756 targeted street images.
        report = cost_comparison(
            panoramas_needed=1136, street_images_for_detected=756, aerial_tiles=546
        )
        assert report.street_only_images == 4544
        assert report.combined_street_images == 756
        assert report.reduction_factor >= 6.0
        assert report.reduction_factor == pytest.approx(4544 / 756)
        assert report.street_only_cost_usd == pytest.approx(31.808)

    def test_zero_combined_flagged_undefined(self):
        report = cost_comparison(panoramas_needed=10, street_images_for_detected=0, aerial_tiles=5)
        assert report.reduction_factor is None

    def test_aerial_cost_configurable(self):
        report = cost_comparison(
            panoramas_needed=10, street_images_for_detected=4, aerial_tiles=100,
            aerial_tile_unit_cost=0.001,
        )
        assert report.combined_cost_usd == pytest.approx(4 * 0.007 + 100 * 0.001)

    def test_negative_counts_rejected(self):
        with pytest.raises(DomainError):
            cost_comparison(panoramas_needed=-1, street_images_for_detected=0, aerial_tiles=0)


class TestGeojsonExport:
    def test_empty_registry(self):
        doc = json.loads(export_geojson([]))
        assert doc == {"type": "FeatureCollection", "features": []}

    def test_roundtrip_tree_count(self):
        rng = random.Random(109)
        trees = [
            TreeRecord.at(destination_point(CENTER, rng.uniform(0, 360), rng.uniform(5, 500)))
            for _ in range(25)
        ]
        doc = json.loads(export_geojson(trees))
        assert len(doc["features"]) == 25

    def test_transition_dates_in_properties(self):
        tree = TreeRecord.at(CENTER)
        tl = build_timeline([("2017-11", "healthy"), ("2018-04", "infested")])
        doc = json.loads(export_geojson([tree], {tree.id: tl}))
        props = doc["features"][0]["properties"]
        assert props["status"] == "infested-onset-known"
        assert props["transition"] == ["2017-11", "2018-04"]

    def test_byte_identical_across_calls(self):
        rng = random.Random(113)
        trees = [
            TreeRecord.at(destination_point(CENTER, rng.uniform(0, 360), rng.uniform(5, 500)))
            for _ in range(10)
        ]
        assert export_geojson(trees) == export_geojson(list(reversed(trees)))

    def test_feature_order_by_id(self):
        rng = random.Random(127)
        trees = [
            TreeRecord.at(destination_point(CENTER, rng.uniform(0, 360), rng.uniform(5, 500)))
            for _ in range(10)
        ]
        doc = json.loads(export_geojson(trees))
        ids = [f["properties"]["id"] for f in doc["features"]]
        assert ids == sorted(ids)


class TestHtmlReport:
    def test_renders_without_scripts(self):
        grid = build_heatmap([TreeRecord.at(CENTER)], AOI, cell_size_m=200)
        cost = cost_comparison(panoramas_needed=8, street_images_for_detected=3, aerial_tiles=4)
        html = render_html_report(1, grid, hotspots(grid, 1), cost, [])
        assert "<script" not in html
        assert "Trees in registry: 1" in html
