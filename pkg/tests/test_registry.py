import random

import pytest

from palmsurvey.errors import DomainError
from palmsurvey.geo import GeoBox, GeoPoint, destination_point
from palmsurvey.registry import Observation, TreeRecord, TreeStore, tree_id


@pytest.fixture
def store(tmp_path):
    return TreeStore(tmp_path / "registry.jsonl")


def obs(date, pano="p1", heading=90.0):
    return Observation(capture_date=date, pano_id=pano, heading=heading)


BASE = GeoPoint(32.75, -117.12)


class TestUpsert:
    def test_insert_then_upsert_same_record_is_idempotent(self, store):
        rec = TreeRecord.at(BASE)
        store.upsert_tree(rec)
        store.upsert_tree(rec)
        assert len(store) == 1
        assert store.all_trees()[0] == rec

    def test_nearby_candidate_merges_into_stored_tree(self, store):
        a = TreeRecord.at(BASE)
        b = TreeRecord.at(destination_point(BASE, 90.0, 1.0))
        store.upsert_tree(a)
        merged = store.upsert_tree(b)
        assert len(store) == 1
        assert merged.id == a.id and merged.location == a.location

    def test_distant_candidate_inserts(self, store):
        store.upsert_tree(TreeRecord.at(BASE))
        store.upsert_tree(TreeRecord.at(destination_point(BASE, 90.0, 10.0)))
        assert len(store) == 2

    def test_same_pano_heading_different_dates_both_kept(self, store):
        a = TreeRecord.at(BASE)
        a = TreeRecord(id=a.id, location=a.location,
                       observations=(obs("2016-05"), obs("2018-04")))
        store.upsert_tree(a)
        rec = store.all_trees()[0]
        assert len(rec.observations) == 2

    def test_duplicate_observation_deduplicated(self, store):
        a = TreeRecord.at(BASE)
        store.upsert_tree(TreeRecord(id=a.id, location=a.location, observations=(obs("2016-05"),)))
        store.upsert_tree(TreeRecord(id=a.id, location=a.location, observations=(obs("2016-05"),)))
        assert len(store.all_trees()[0].observations) == 1

    def test_merge_preserves_date_order(self, store):
        a = TreeRecord.at(BASE)
        store.upsert_tree(TreeRecord(id=a.id, location=a.location, observations=(obs("2019-07"),)))
        store.upsert_tree(
            TreeRecord(id=a.id, location=a.location, observations=(obs("2016-05"), obs("2018-04")))
        )
        dates = [o.capture_date for o in store.all_trees()[0].observations]
        assert dates == sorted(dates)

    def test_no_two_stored_trees_within_radius(self, store):
        rng = random.Random(83)
        from palmsurvey.geo import haversine_m

        for _ in range(200):
            p = destination_point(BASE, rng.uniform(0, 360), rng.uniform(0, 50))
            store.upsert_tree(TreeRecord.at(p))
        trees = store.all_trees()
        for i, a in enumerate(trees):
            for b in trees[i + 1:]:
                assert haversine_m(a.location, b.location) > store.dedup_radius_m


class TestQueryByBox:
    def test_empty_store(self, store):
        assert store.query_by_box(GeoBox(-1, -1, 1, 1)) == []

    def test_box_covering_all(self, store):
        for i in range(10):
            store.upsert_tree(TreeRecord.at(destination_point(BASE, 90.0, 10.0 * (i + 1))))
        box = GeoBox(BASE.lat - 0.01, BASE.lon - 0.01, BASE.lat + 0.01, BASE.lon + 0.01)
        assert len(store.query_by_box(box)) == 10

    def test_matches_linear_scan_oracle(self, store):
        rng = random.Random(89)
        for _ in range(100):
            store.upsert_tree(
                TreeRecord.at(destination_point(BASE, rng.uniform(0, 360), rng.uniform(5, 400)))
            )
        box = GeoBox(BASE.lat - 0.001, BASE.lon - 0.002, BASE.lat + 0.0015, BASE.lon + 0.001)
        got = store.query_by_box(box)
        want = sorted(
            (t for t in store.all_trees() if box.contains(t.location)), key=lambda t: t.id
        )
        assert got == want
        assert [t.id for t in got] == sorted(t.id for t in got)


class TestPersistence:
    def test_reload_after_write_is_byte_identical(self, tmp_path):
        path = tmp_path / "registry.jsonl"
        store = TreeStore(path)
        rng = random.Random(97)
        for _ in range(50):
            rec = TreeRecord.at(destination_point(BASE, rng.uniform(0, 360), rng.uniform(5, 300)))
            rec = TreeRecord(
                id=rec.id, location=rec.location,
                observations=(obs("2018-04", pano=f"p{rng.randint(0, 9)}"),),
            )
            store.upsert_tree(rec)
        store.save()
        first = path.read_bytes()
        reloaded = TreeStore(path)
        assert reloaded.all_trees() == store.all_trees()
        reloaded.save()
        assert path.read_bytes() == first

    def test_classification_probs_roundtrip(self, tmp_path):
        path = tmp_path / "registry.jsonl"
        store = TreeStore(path)
        rec = TreeRecord.at(BASE)
        o = Observation(
            capture_date="2018-04", pano_id="p1", heading=45.0,
            classification={"healthy": 0.2, "infested": 0.7, "unknown": 0.1},
        )
        store.upsert_tree(TreeRecord(id=rec.id, location=rec.location, observations=(o,)))
        store.save()
        back = TreeStore(path).all_trees()[0]
        assert back.observations[0].classification == o.classification

    def test_bad_classification_rejected(self):
        with pytest.raises(DomainError):
            Observation(capture_date="2018-04", classification={"healthy": 0.9, "infested": 0.9})


class TestTreeId:
    def test_deterministic_from_rounded_location(self):
        a = tree_id(GeoPoint(32.750000, -117.120000))
        b = tree_id(GeoPoint(32.7500000000001, -117.1200000000001))
        assert a == b

    def test_distinct_locations_distinct_ids(self):
        assert tree_id(BASE) != tree_id(destination_point(BASE, 0.0, 5.0))
