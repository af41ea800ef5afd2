"""Durable tree registry: JSON-lines store of trees and their dated
observations, with radius-based deduplication on insert.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace

from .errors import DomainError, PersistenceError
from .geo import GeoBox, GeoPoint, PixelBox, haversine_m

SCHEMA_VERSION = 1

SOURCE_AERIAL = "aerial"
SOURCE_STREET_ONLY = "street-only"


def tree_id(location: GeoPoint) -> str:
    """Stable identifier derived from the location rounded to 1e-6 degrees."""
    key = f"{location.lat:.6f},{location.lon:.6f}"
    return hashlib.sha1(key.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Observation:
    capture_date: str  # "YYYY-MM"
    pano_id: str | None = None
    heading: float | None = None
    crown_box: PixelBox | None = None
    classification: dict | None = None  # probs over healthy/infested/unknown
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.classification is not None:
            total = sum(self.classification.values())
            if abs(total - 1.0) > 1e-6:
                raise DomainError("observation classification probabilities must sum to 1")

    def sort_key(self) -> tuple:
        return (self.capture_date, self.pano_id or "", self.heading or 0.0)

    def identity(self) -> tuple:
        return (self.capture_date, self.pano_id, self.heading)

    def to_dict(self) -> dict:
        d: dict = {"date": self.capture_date}
        if self.pano_id is not None:
            d["pano_id"] = self.pano_id
        if self.heading is not None:
            d["heading"] = self.heading
        if self.crown_box is not None:
            b = self.crown_box
            d["crown_box"] = [b.x_min, b.y_min, b.x_max, b.y_max]
        if self.classification is not None:
            d["classification"] = {k: self.classification[k] for k in sorted(self.classification)}
        if self.flags:
            d["flags"] = sorted(self.flags)
        return d

    @staticmethod
    def from_dict(d: dict) -> "Observation":
        return Observation(
            capture_date=d["date"],
            pano_id=d.get("pano_id"),
            heading=d.get("heading"),
            crown_box=PixelBox(*d["crown_box"]) if "crown_box" in d else None,
            classification=d.get("classification"),
            flags=tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class TreeRecord:
    id: str
    location: GeoPoint
    observations: tuple[Observation, ...] = ()
    source: str = SOURCE_AERIAL
    score: float = 0.0
    flags: tuple[str, ...] = ()

    @staticmethod
    def at(location: GeoPoint, source: str = SOURCE_AERIAL, score: float = 0.0) -> "TreeRecord":
        return TreeRecord(id=tree_id(location), location=location, source=source, score=score)

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "lat": self.location.lat,
            "lon": self.location.lon,
            "source": self.source,
            "score": round(self.score, 6),
            "observations": [o.to_dict() for o in self.observations],
        }
        if self.flags:
            d["flags"] = sorted(self.flags)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TreeRecord":
        return TreeRecord(
            id=d["id"],
            location=GeoPoint(d["lat"], d["lon"]),
            observations=tuple(Observation.from_dict(o) for o in d["observations"]),
            source=d["source"],
            score=d.get("score", 0.0),
            flags=tuple(d.get("flags", ())),
        )


def _merge_observations(
    existing: tuple[Observation, ...], incoming: tuple[Observation, ...]
) -> tuple[Observation, ...]:
    seen = {o.identity(): o for o in existing}
    for o in incoming:
        seen.setdefault(o.identity(), o)
    return tuple(sorted(seen.values(), key=Observation.sort_key))


class TreeStore:
    """Single-writer JSON-lines store with an in-memory cell index.

    The index buckets trees into ~110 m lat/lon cells so dedup lookups check
    only the neighborhood instead of scanning every tree.
    """

    CELL_DEG = 0.001

    def __init__(self, path: str | os.PathLike, dedup_radius_m: float = 3.0):
        self.path = str(path)
        self.dedup_radius_m = dedup_radius_m
        self._trees: dict[str, TreeRecord] = {}
        self._cells: dict[tuple[int, int], list[str]] = {}
        if os.path.exists(self.path):
            self._load()

    def _load(self) -> None:
        try:
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = TreeRecord.from_dict(json.loads(line))
                    self._trees[rec.id] = rec
                    self._index(rec)
        except OSError as e:
            raise PersistenceError(f"cannot read tree store {self.path}: {e}") from e

    def _cell(self, p: GeoPoint) -> tuple[int, int]:
        return (math.floor(p.lat / self.CELL_DEG), math.floor(p.lon / self.CELL_DEG))

    def _index(self, rec: TreeRecord) -> None:
        self._cells.setdefault(self._cell(rec.location), []).append(rec.id)

    def _neighbors(self, p: GeoPoint) -> list[TreeRecord]:
        ci, cj = self._cell(p)
        out = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for tid in self._cells.get((ci + di, cj + dj), ()):
                    out.append(self._trees[tid])
        return out

    def upsert_tree(self, candidate: TreeRecord) -> TreeRecord:
        """Insert a tree, or merge its observations into a nearby stored tree.

        The nearest stored tree within the dedup radius wins; its location and
        id are kept.
        """
        nearby = [
            t
            for t in self._neighbors(candidate.location)
            if haversine_m(t.location, candidate.location) <= self.dedup_radius_m
        ]
        if nearby:
            target = min(
                nearby, key=lambda t: (haversine_m(t.location, candidate.location), t.id)
            )
            merged = replace(
                target,
                observations=_merge_observations(target.observations, candidate.observations),
                score=max(target.score, candidate.score),
            )
            self._trees[target.id] = merged
            return merged
        rec = replace(
            candidate,
            observations=tuple(sorted(candidate.observations, key=Observation.sort_key)),
        )
        self._trees[rec.id] = rec
        self._index(rec)
        return rec

    def update_tree(self, rec: TreeRecord) -> None:
        """Replace a stored record in place (same id, same location)."""
        if rec.id not in self._trees:
            raise DomainError(f"unknown tree id {rec.id}")
        self._trees[rec.id] = rec

    def get(self, tid: str) -> TreeRecord:
        return self._trees[tid]

    def all_trees(self) -> list[TreeRecord]:
        return [self._trees[tid] for tid in sorted(self._trees)]

    def query_by_box(self, box: GeoBox) -> list[TreeRecord]:
        return [t for t in self.all_trees() if box.contains(t.location)]

    def __len__(self) -> int:
        return len(self._trees)

    def save(self) -> None:
        try:
            tmp = self.path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as f:
                for rec in self.all_trees():
                    f.write(json.dumps(rec.to_dict(), sort_keys=True, separators=(",", ":")))
                    f.write("\n")
            os.replace(tmp, self.path)
        except OSError as e:
            raise PersistenceError(f"cannot write tree store {self.path}: {e}") from e
