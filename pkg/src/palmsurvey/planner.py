"""Acquisition planning: tile enumeration over an area of interest, street
sampling at fixed arclength spacing, and panorama view sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DomainError
from .geo import (
    GeoBox,
    GeoPoint,
    TileId,
    geo_to_mercator,
    haversine_m,
    tile_for_point,
    tile_mercator_bounds,
)

DEFAULT_HEADINGS = (0.0, 90.0, 180.0, 270.0)
STREET_IMAGE_SIZE = 640
DEFAULT_FOV = 90.0


@dataclass(frozen=True)
class AreaOfInterest:
    """Survey region: a box or a simple polygon of WGS84 vertices."""

    name: str
    boundary: GeoBox | None = None
    polygon: tuple[GeoPoint, ...] = ()

    def __post_init__(self):
        if self.boundary is None and len(self.polygon) < 3:
            raise DomainError("AOI needs a GeoBox or a polygon of >= 3 vertices")

    def bounding_box(self) -> GeoBox:
        if self.boundary is not None:
            return self.boundary
        lats = [v.lat for v in self.polygon]
        lons = [v.lon for v in self.polygon]
        return GeoBox(south=min(lats), west=min(lons), north=max(lats), east=max(lons))

    def mercator_polygon(self) -> list[tuple[float, float]]:
        if self.polygon:
            return [(m.x, m.y) for m in (geo_to_mercator(v) for v in self.polygon)]
        b = self.boundary
        corners = [
            GeoPoint(b.south, b.west),
            GeoPoint(b.south, b.east),
            GeoPoint(b.north, b.east),
            GeoPoint(b.north, b.west),
        ]
        return [(m.x, m.y) for m in (geo_to_mercator(v) for v in corners)]


@dataclass(frozen=True)
class Polyline:
    """An ordered street centerline."""

    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise DomainError("polyline needs at least 2 vertices")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a == b:
                raise DomainError("polyline has consecutive duplicate vertices")

    def length_m(self) -> float:
        return sum(haversine_m(a, b) for a, b in zip(self.vertices, self.vertices[1:]))


@dataclass(frozen=True)
class StreetImageRequest:
    """One rectilinear view extracted from a panorama."""

    location: GeoPoint
    heading: float
    fov: float = DEFAULT_FOV
    width: int = STREET_IMAGE_SIZE
    height: int = STREET_IMAGE_SIZE
    pano_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "heading", self.heading % 360.0)
        if not 0 < self.fov <= 120:
            raise DomainError(f"fov {self.fov} outside (0, 120]")
        if self.width > STREET_IMAGE_SIZE or self.height > STREET_IMAGE_SIZE:
            raise DomainError("street image size exceeds provider maximum 640")


@dataclass(frozen=True)
class TilePlan:
    zoom: int
    tiles: tuple[TileId, ...]
    tile_size: int = 256

    def to_json(self) -> str:
        doc = {
            "zoom": self.zoom,
            "tile_size": self.tile_size,
            "tiles": [[t.zoom, t.x, t.y] for t in self.tiles],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "TilePlan":
        doc = json.loads(text)
        return TilePlan(
            zoom=doc["zoom"],
            tile_size=doc["tile_size"],
            tiles=tuple(TileId(z, x, y) for z, x, y in doc["tiles"]),
        )


@dataclass(frozen=True)
class StreetSamplePlan:
    samples: tuple[tuple[GeoPoint, tuple[float, ...]], ...] = ()
    fov: float = DEFAULT_FOV

    def to_json(self) -> str:
        doc = {
            "fov": self.fov,
            "samples": [
                {"lat": p.lat, "lon": p.lon, "headings": list(hs)} for p, hs in self.samples
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "StreetSamplePlan":
        doc = json.loads(text)
        return StreetSamplePlan(
            samples=tuple(
                (GeoPoint(s["lat"], s["lon"]), tuple(s["headings"])) for s in doc["samples"]
            ),
            fov=doc["fov"],
        )


def _polygon_intersects_box(
    poly: list[tuple[float, float]], x0: float, y0: float, x1: float, y1: float
) -> bool:
    """Exact convex-free polygon vs axis-aligned box intersection test in the plane.

    True when any polygon edge crosses the box, any polygon vertex lies inside,
    or the box center lies inside the polygon (box fully contained).
    """
    for x, y in poly:
        if x0 <= x <= x1 and y0 <= y <= y1:
            return True
    # Edge vs box: Liang-Barsky style clipping on each segment.
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if _segment_hits_box(ax, ay, bx, by, x0, y0, x1, y1):
            return True
    return _point_in_polygon(((x0 + x1) / 2.0, (y0 + y1) / 2.0), poly)


def _segment_hits_box(ax, ay, bx, by, x0, y0, x1, y1) -> bool:
    t0, t1 = 0.0, 1.0
    dx, dy = bx - ax, by - ay
    for p, q in ((-dx, ax - x0), (dx, x1 - ax), (-dy, ay - y0), (dy, y1 - ay)):
        if p == 0:
            if q < 0:
                return False
        else:
            r = q / p
            if p < 0:
                t0 = max(t0, r)
            else:
                t1 = min(t1, r)
            if t0 > t1:
                return False
    return True


def _point_in_polygon(pt: tuple[float, float], poly: list[tuple[float, float]]) -> bool:
    x, y = pt
    inside = False
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) / (by - ay) * (bx - ax)
            if x < x_cross:
                inside = not inside
    return inside


def enumerate_tiles(aoi: AreaOfInterest, zoom: int) -> TilePlan:
    """All tiles whose bounds intersect the AOI, row-major.

    Tile claims are half-open ([west, east) x (south, north]) so a point on a
    shared edge belongs to exactly one tile; the intersection test here uses
    the same convention by shrinking each tile's east/south edge by an epsilon
    in Mercator meters.
    """
    if not 0 <= zoom <= 22:
        raise DomainError(f"zoom {zoom} outside [0, 22]")
    bbox = aoi.bounding_box()
    poly = aoi.mercator_polygon()

    nw = tile_for_point(GeoPoint(bbox.north, bbox.west), zoom)
    se = tile_for_point(GeoPoint(bbox.south, bbox.east), zoom)

    eps = 1e-6  # meters; breaks edge ties toward the west/north tile
    tiles = []
    for ty in range(nw.y, se.y + 1):
        for tx in range(nw.x, se.x + 1):
            t = TileId(zoom, tx, ty)
            x_west, y_south, x_east, y_north = tile_mercator_bounds(t)
            if _polygon_intersects_box(poly, x_west, y_south, x_east - eps, y_north - eps):
                tiles.append(t)
    return TilePlan(zoom=zoom, tiles=tuple(tiles))


def sample_street_points(line: Polyline, spacing: float = 8.0) -> list[GeoPoint]:
    """Points at arclength 0, s, 2s, ... along a polyline (haversine arclength).

    Always includes the start vertex; a polyline shorter than the spacing
    yields only the start. Intermediate points are interpolated linearly
    within a segment, which is exact at street scale.
    """
    if spacing <= 0:
        raise DomainError("spacing must be positive")
    verts = line.vertices
    points = [verts[0]]
    target = spacing
    walked = 0.0
    for a, b in zip(verts, verts[1:]):
        seg = haversine_m(a, b)
        while target <= walked + seg + 1e-6:
            f = (target - walked) / seg
            points.append(
                GeoPoint(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
            )
            target += spacing
        walked += seg
    return points


def panorama_view_set(
    p: GeoPoint,
    headings: tuple[float, ...] = DEFAULT_HEADINGS,
    fov: float = DEFAULT_FOV,
) -> list[StreetImageRequest]:
    """One 640x640 view request per heading at a sample point."""
    for h in headings:
        if not 0 <= h < 360:
            raise DomainError(f"heading {h} outside [0, 360)")
    return [StreetImageRequest(location=p, heading=h, fov=fov) for h in headings]


def plan_streets(
    lines: list[Polyline],
    spacing: float = 8.0,
    headings: tuple[float, ...] = DEFAULT_HEADINGS,
    fov: float = DEFAULT_FOV,
) -> StreetSamplePlan:
    samples = []
    for line in lines:
        for p in sample_street_points(line, spacing):
            samples.append((p, tuple(headings)))
    return StreetSamplePlan(samples=tuple(samples), fov=fov)


def load_street_geojson(text: str) -> list[Polyline]:
    """Parse a GeoJSON FeatureCollection of LineString features (street layer export)."""
    doc = json.loads(text)
    if doc.get("type") != "FeatureCollection":
        raise DomainError("street layer must be a GeoJSON FeatureCollection")
    lines = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        coords = geom.get("coordinates", [])
        verts = [GeoPoint(lat, lon) for lon, lat in coords]
        # Drop consecutive duplicates rather than rejecting the export.
        deduped = [verts[0]] if verts else []
        for v in verts[1:]:
            if v != deduped[-1]:
                deduped.append(v)
        if len(deduped) >= 2:
            lines.append(Polyline(tuple(deduped)))
    return lines
