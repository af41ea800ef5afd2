"""Synthetic city generator and mock detection backend.

The simulator builds a jittered street grid, scatters palms near the streets
(each with an optional infestation onset month), and drops dated panoramas
along every street. The mock backend answers the detector-gateway surface
straight from this geometry, so end-to-end pipeline runs can be scored
against exact ground truth without any imagery.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

from .errors import DomainError
from .geo import (
    GeoPoint,
    PixelBox,
    TileId,
    bearing_deg,
    destination_point,
    geo_to_pixel,
    haversine_m,
    tile_for_point,
)
from .planner import AreaOfInterest, Polyline, sample_street_points
from .street import PanoramaRecord
from .timeline import LABELS

DEFAULT_CAPTURE_DATES = ("2016-05", "2017-06", "2018-04", "2019-07", "2020-08")

AERIAL_BOX_HALF_PX = 7.0
CROWN_BOX_HALF_PX = 30.0


@dataclass(frozen=True)
class WorldParams:
    center: GeoPoint = GeoPoint(32.75, -117.12)
    width_m: float = 800.0
    height_m: float = 800.0
    streets_ew: int = 4
    streets_ns: int = 4
    street_jitter_m: float = 2.0
    palm_count: int | None = 200
    palm_density_per_m2: float | None = None  # used when palm_count is None
    palm_offset_m: tuple[float, float] = (5.0, 20.0)
    infested_fraction: float = 0.3
    capture_dates: tuple[str, ...] = DEFAULT_CAPTURE_DATES
    pano_spacing_m: float = 8.0
    pano_date_jitter_m: float = 1.5
    visibility_radius_m: float = 50.0


@dataclass(frozen=True)
class GroundTruthPalm:
    index: int
    location: GeoPoint
    onset: str | None  # "YYYY-MM" when it becomes infested, None if never

    def state_at(self, date: str) -> str:
        if self.onset is not None and self.onset <= date:
            return "infested"
        return "healthy"


@dataclass(frozen=True)
class NoiseModel:
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0  # Poisson mean per aerial tile
    bbox_jitter_sigma_px: float = 0.0
    confusion: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )  # rows/cols ordered healthy, infested, unknown

    def __post_init__(self):
        for row in self.confusion:
            if abs(sum(row) - 1.0) > 1e-9:
                raise DomainError("confusion matrix rows must sum to 1")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise DomainError("miss_rate outside [0, 1]")
        if self.false_positive_rate < 0:
            raise DomainError("false_positive_rate must be >= 0")


@dataclass
class SyntheticWorld:
    seed: int
    params: WorldParams
    aoi: AreaOfInterest
    streets: list[Polyline]
    palms: list[GroundTruthPalm]
    panoramas: list[PanoramaRecord]

    @property
    def visibility_radius_m(self) -> float:
        return self.params.visibility_radius_m

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "params": {
                "center": [self.params.center.lat, self.params.center.lon],
                "width_m": self.params.width_m,
                "height_m": self.params.height_m,
                "capture_dates": list(self.params.capture_dates),
                "visibility_radius_m": self.params.visibility_radius_m,
            },
            "aoi": {
                "name": self.aoi.name,
                "box": [
                    self.aoi.boundary.south,
                    self.aoi.boundary.west,
                    self.aoi.boundary.north,
                    self.aoi.boundary.east,
                ],
            },
            "streets": [[[v.lat, v.lon] for v in s.vertices] for s in self.streets],
            "palms": [
                {"index": p.index, "lat": p.location.lat, "lon": p.location.lon, "onset": p.onset}
                for p in self.palms
            ],
            "panoramas": [
                {
                    "pano_id": p.pano_id,
                    "lat": p.location.lat,
                    "lon": p.location.lon,
                    "date": p.capture_date,
                }
                for p in self.panoramas
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "SyntheticWorld":
        doc = json.loads(text)
        from .geo import GeoBox

        p = doc["params"]
        params = WorldParams(
            center=GeoPoint(*p["center"]),
            width_m=p["width_m"],
            height_m=p["height_m"],
            capture_dates=tuple(p["capture_dates"]),
            visibility_radius_m=p["visibility_radius_m"],
        )
        s, w, n, e = doc["aoi"]["box"]
        aoi = AreaOfInterest(name=doc["aoi"]["name"], boundary=GeoBox(s, w, n, e))
        return SyntheticWorld(
            seed=doc["seed"],
            params=params,
            aoi=aoi,
            streets=[
                Polyline(tuple(GeoPoint(lat, lon) for lat, lon in verts))
                for verts in doc["streets"]
            ],
            palms=[
                GroundTruthPalm(index=d["index"], location=GeoPoint(d["lat"], d["lon"]), onset=d["onset"])
                for d in doc["palms"]
            ],
            panoramas=[
                PanoramaRecord(
                    pano_id=d["pano_id"],
                    location=GeoPoint(d["lat"], d["lon"]),
                    capture_date=d["date"],
                )
                for d in doc["panoramas"]
            ],
        )


def _rng(*key) -> random.Random:
    return random.Random(":".join(str(k) for k in key))


def _month_range(start: str, end: str) -> list[str]:
    """Months strictly after start, up to and including end."""
    y0, m0 = int(start[:4]), int(start[5:7])
    y1, m1 = int(end[:4]), int(end[5:7])
    out = []
    y, m = y0, m0
    while (y, m) < (y1, m1):
        m += 1
        if m > 12:
            y, m = y + 1, 1
        out.append(f"{y:04d}-{m:02d}")
    return out


def generate_world(seed: int, params: WorldParams = WorldParams()) -> SyntheticWorld:
    """Deterministic synthetic city: street grid, palms, dated panoramas."""
    if params.width_m <= 0 or params.height_m <= 0:
        raise DomainError("world dimensions must be positive")
    if params.streets_ew < 1 or params.streets_ns < 1:
        raise DomainError("need at least one street per direction")
    if len(params.capture_dates) < 2:
        raise DomainError("need at least two capture dates for history runs")

    c = params.center
    half_w, half_h = params.width_m / 2.0, params.height_m / 2.0
    sw = destination_point(destination_point(c, 180.0, half_h), 270.0, half_w)
    ne = destination_point(destination_point(c, 0.0, half_h), 90.0, half_w)
    from .geo import GeoBox

    aoi = AreaOfInterest(
        name=f"synthetic-{seed}", boundary=GeoBox(sw.lat, sw.lon, ne.lat, ne.lon)
    )

    rng = _rng(seed, "streets")
    streets: list[Polyline] = []

    def jitter(p: GeoPoint) -> GeoPoint:
        if params.street_jitter_m == 0:
            return p
        return destination_point(
            p, rng.uniform(0, 360), rng.uniform(0, params.street_jitter_m)
        )

    for i in range(params.streets_ew):
        frac = (i + 0.5) / params.streets_ew
        lat = sw.lat + frac * (ne.lat - sw.lat)
        n_verts = 5
        verts = []
        for j in range(n_verts):
            lon = sw.lon + j / (n_verts - 1) * (ne.lon - sw.lon)
            verts.append(jitter(GeoPoint(lat, lon)))
        streets.append(Polyline(tuple(verts)))
    for i in range(params.streets_ns):
        frac = (i + 0.5) / params.streets_ns
        lon = sw.lon + frac * (ne.lon - sw.lon)
        verts = []
        for j in range(5):
            lat = sw.lat + j / 4 * (ne.lat - sw.lat)
            verts.append(jitter(GeoPoint(lat, lon)))
        streets.append(Polyline(tuple(verts)))

    # Candidate palm sites: points along streets with a lateral offset small
    # enough to stay street-visible.
    rng_p = _rng(seed, "palms")
    candidates: list[GeoPoint] = []
    for si, street in enumerate(streets):
        for p in sample_street_points(street, spacing=5.0):
            side = 90.0 if rng_p.random() < 0.5 else 270.0
            along = bearing_deg(street.vertices[0], street.vertices[-1])
            offset = rng_p.uniform(*params.palm_offset_m)
            candidates.append(destination_point(p, (along + side) % 360.0, offset))
    candidates = [p for p in candidates if aoi.boundary.contains(p)]

    if params.palm_count is not None:
        if params.palm_count > len(candidates):
            raise DomainError(
                f"palm_count {params.palm_count} exceeds {len(candidates)} candidate sites"
            )
        chosen = rng_p.sample(range(len(candidates)), params.palm_count)
        sites = [candidates[i] for i in sorted(chosen)]
    elif params.palm_density_per_m2 is not None:
        area = params.width_m * params.height_m
        accept_p = min(1.0, params.palm_density_per_m2 * area / max(1, len(candidates)))
        sites = [p for p in candidates if rng_p.random() < accept_p]
    else:
        raise DomainError("set palm_count or palm_density_per_m2")

    onset_months = _month_range(params.capture_dates[0], params.capture_dates[-1])
    rng_o = _rng(seed, "onsets")
    palms = []
    for i, loc in enumerate(sites):
        onset = rng_o.choice(onset_months) if rng_o.random() < params.infested_fraction else None
        palms.append(GroundTruthPalm(index=i, location=loc, onset=onset))

    rng_g = _rng(seed, "panos")
    panoramas: list[PanoramaRecord] = []
    pano_idx = 0
    for street in streets:
        for p in sample_street_points(street, spacing=params.pano_spacing_m):
            for date in params.capture_dates:
                loc = p
                if params.pano_date_jitter_m > 0:
                    loc = destination_point(
                        p, rng_g.uniform(0, 360), rng_g.uniform(0, params.pano_date_jitter_m)
                    )
                panoramas.append(
                    PanoramaRecord(
                        pano_id=f"pano{pano_idx:06d}_{date}", location=loc, capture_date=date
                    )
                )
            pano_idx += 1

    return SyntheticWorld(
        seed=seed, params=params, aoi=aoi, streets=streets, palms=palms, panoramas=panoramas
    )


def _angle_diff(a: float, b: float) -> float:
    return (a - b + 180.0) % 360.0 - 180.0


class MockBackend:
    """In-process backend answering the gateway surface from world geometry.

    Image references are synthetic keys:
      tile/{zoom}/{x}/{y}                      aerial tile
      street/{pano_id}/{heading}               street view image
      crown/{pano_id}/{heading}/{x0},{y0},{x1},{y1}   crown crop to classify

    Noise draws are keyed by (world seed, purpose, stable entity key) so the
    backend gives identical answers for identical requests regardless of
    request order or concurrency.
    """

    def __init__(self, world: SyntheticWorld, noise: NoiseModel = NoiseModel(), tile_size: int = 256):
        self.world = world
        self.noise = noise
        self.tile_size = tile_size
        self.labels = ["palm"]
        self._panos = {p.pano_id: p for p in world.panoramas}

    def detect(self, image_ref: str):
        parts = image_ref.split("/")
        if parts[0] == "tile":
            return self._detect_aerial(TileId(int(parts[1]), int(parts[2]), int(parts[3])))
        if parts[0] == "street":
            return self._detect_street(parts[1], float(parts[2]))
        raise DomainError(f"mock backend cannot detect on {image_ref!r}")

    def _palm_missed(self, palm: GroundTruthPalm) -> bool:
        if self.noise.miss_rate == 0:
            return False
        return _rng(self.world.seed, "miss", palm.index).random() < self.noise.miss_rate

    def _detect_aerial(self, tile: TileId):
        out = []
        size = self.tile_size
        for palm in self.world.palms:
            if tile_for_point(palm.location, tile.zoom) != tile:
                continue
            if self._palm_missed(palm):
                continue
            px, py = geo_to_pixel(tile, palm.location, size)
            if self.noise.bbox_jitter_sigma_px > 0:
                r = _rng(self.world.seed, "jitter", tile.x, tile.y, palm.index)
                px += r.gauss(0, self.noise.bbox_jitter_sigma_px)
                py += r.gauss(0, self.noise.bbox_jitter_sigma_px)
            h = AERIAL_BOX_HALF_PX
            box = PixelBox(
                max(0.0, min(px - h, size - 2 * h)),
                max(0.0, min(py - h, size - 2 * h)),
                min(float(size), max(px + h, 2 * h)),
                min(float(size), max(py + h, 2 * h)),
            )
            score = 0.8 + 0.2 * _rng(self.world.seed, "score", palm.index).random()
            out.append((box, round(score, 6), "palm"))
        if self.noise.false_positive_rate > 0:
            r = _rng(self.world.seed, "fp", tile.zoom, tile.x, tile.y)
            n_fp = _poisson(r, self.noise.false_positive_rate)
            for _ in range(n_fp):
                cx = r.uniform(10, size - 10)
                cy = r.uniform(10, size - 10)
                out.append(
                    (
                        PixelBox(cx - 7, cy - 7, cx + 7, cy + 7),
                        round(r.uniform(0.5, 0.8), 6),
                        "palm",
                    )
                )
        return out

    def _visible_palms(self, pano: PanoramaRecord):
        return [
            p
            for p in self.world.palms
            if haversine_m(pano.location, p.location) <= self.world.visibility_radius_m
        ]

    def _detect_street(self, pano_id: str, heading: float):
        pano = self._panos.get(pano_id)
        if pano is None:
            raise DomainError(f"unknown panorama {pano_id!r}")
        out = []
        for palm in self._visible_palms(pano):
            if pano.location == palm.location:
                continue
            offset = _angle_diff(bearing_deg(pano.location, palm.location), heading)
            if abs(offset) > 45.0:
                continue
            cx = (offset + 45.0) / 90.0 * 640.0
            h = CROWN_BOX_HALF_PX
            box = PixelBox(
                max(0.0, min(cx - h, 640.0 - 2 * h)),
                140.0,
                min(640.0, max(cx + h, 2 * h)),
                260.0,
            )
            score = 0.85 + 0.15 * _rng(self.world.seed, "sscore", palm.index).random()
            out.append((box, round(score, 6), "palm"))
        return out

    def classify(self, image_ref: str) -> dict:
        parts = image_ref.split("/")
        if parts[0] != "crown":
            raise DomainError(f"mock backend cannot classify {image_ref!r}")
        pano_id, heading, box_key = parts[1], float(parts[2]), parts[3]
        pano = self._panos.get(pano_id)
        if pano is None:
            raise DomainError(f"unknown panorama {pano_id!r}")
        x0, _y0, x1, _y1 = (float(v) for v in box_key.split(","))
        aim = (heading + (90.0 * ((x0 + x1) / 2.0) / 640.0 - 45.0)) % 360.0
        best, best_err = None, 10.0  # degrees of angular tolerance
        for palm in self._visible_palms(pano):
            if pano.location == palm.location:
                continue
            err = abs(_angle_diff(bearing_deg(pano.location, palm.location), aim))
            if err < best_err:
                best, best_err = palm, err
        if best is None:
            return {"healthy": 0.0, "infested": 0.0, "unknown": 1.0}
        true_label = best.state_at(pano.capture_date)
        row = self.noise.confusion[LABELS.index(true_label)]
        r = _rng(self.world.seed, "cls", pano_id, round(heading, 4), box_key)
        sampled = r.choices(LABELS, weights=row)[0]
        return {k: (1.0 if k == sampled else 0.0) for k in LABELS}


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's method; lambdas here are small (false positives per tile).
    limit = math.exp(-lam)
    k, prod = 0, rng.random()
    while prod > limit:
        k += 1
        prod *= rng.random()
    return k


def score_run(world: SyntheticWorld, trees, timelines=None) -> dict:
    """Score a finished pipeline run against ground truth.

    Registry trees are greedily matched to the nearest unmatched true palm
    within 3 m. Timeline accuracy is the fraction of infested palms whose
    inferred transition interval contains the true onset month.
    """
    match_radius = 3.0
    trees = sorted(trees, key=lambda t: t.id)
    unmatched = {p.index: p for p in world.palms}
    matches: list[tuple] = []
    for tree in trees:
        best, best_d = None, match_radius
        for palm in unmatched.values():
            d = haversine_m(tree.location, palm.location)
            if d <= best_d:
                best, best_d = palm, d
        if best is not None:
            del unmatched[best.index]
            matches.append((tree, best, best_d))

    n_truth = len(world.palms)
    recall = len(matches) / n_truth if n_truth else 0.0
    precision = len(matches) / len(trees) if trees else 0.0
    mean_err = sum(d for _, _, d in matches) / len(matches) if matches else 0.0

    timelines = timelines or {}
    last_date = world.params.capture_dates[-1]
    infested = [p for p in world.palms if p.onset is not None and p.onset <= last_date]
    hits = 0
    matched_by_palm = {palm.index: tree for tree, palm, _ in matches}
    for palm in infested:
        tree = matched_by_palm.get(palm.index)
        if tree is None:
            continue
        tl = timelines.get(tree.id)
        if tl is None or tl.transition is None:
            continue
        last_healthy, first_infested = tl.transition
        if last_healthy < palm.onset <= first_infested:
            hits += 1
    timeline_accuracy = hits / len(infested) if infested else 1.0

    return {
        "recall": recall,
        "precision": precision,
        "mean_coord_error_m": mean_err,
        "timeline_accuracy": timeline_accuracy,
        "matched": len(matches),
        "truth_palms": n_truth,
        "registry_trees": len(trees),
    }
