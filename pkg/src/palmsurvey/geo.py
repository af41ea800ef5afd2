"""Coordinate math: WGS84 <-> Web Mercator, slippy tiles, pixel georeferencing,
haversine distances and bearings.

All functions here are pure; everything downstream (tile planning,
georeferencing, heading computation) is built on top of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# Spherical Mercator uses the WGS84 equatorial radius; great-circle distances
# use the mean Earth radius.
MERCATOR_RADIUS_M = 6378137.0
EARTH_RADIUS_M = 6371000.0

# World half-width in EPSG:3857 meters: pi * R.
MERCATOR_EXTENT_M = math.pi * MERCATOR_RADIUS_M  # 20037508.342789244

# Latitude where Mercator y reaches the world extent (square world).
MAX_MERCATOR_LAT = 85.05112878


def normalize_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180).

    Values already in range pass through untouched; wrapping adds 180 and
    would otherwise lose the last bits of precision right at the edges.
    """
    if -180.0 <= lon < 180.0:
        return lon
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 position in degrees. Longitude is normalized to [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise DomainError(f"latitude {self.lat} outside [-90, 90]")
        object.__setattr__(self, "lon", normalize_lon(self.lon))


@dataclass(frozen=True)
class MercatorPoint:
    """An EPSG:3857 position in meters."""

    x: float
    y: float

    def __post_init__(self):
        if abs(self.x) > MERCATOR_EXTENT_M + 1e-6 or abs(self.y) > MERCATOR_EXTENT_M + 1e-6:
            raise DomainError(f"mercator point ({self.x}, {self.y}) outside world bounds")


@dataclass(frozen=True)
class TileId:
    """Slippy-map tile address (zoom/x/y, origin northwest)."""

    zoom: int
    x: int
    y: int

    def __post_init__(self):
        if self.zoom < 0:
            raise DomainError(f"zoom {self.zoom} must be >= 0")
        n = 1 << self.zoom
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise DomainError(f"tile ({self.x}, {self.y}) out of range at zoom {self.zoom}")


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned pixel bounding box, origin at the image top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise DomainError("pixel box coordinates must be >= 0")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise DomainError("pixel box must have positive width and height")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0


@dataclass(frozen=True)
class GeoBox:
    """A south/west/north/east box in WGS84 degrees (no antimeridian crossing)."""

    south: float
    west: float
    north: float
    east: float

    def __post_init__(self):
        if self.south >= self.north:
            raise DomainError("GeoBox requires south < north")
        if self.west >= self.east:
            raise DomainError("GeoBox requires west < east")

    def contains(self, p: GeoPoint) -> bool:
        return self.south <= p.lat <= self.north and self.west <= p.lon <= self.east


def geo_to_mercator(p: GeoPoint) -> MercatorPoint:
    """Forward spherical Mercator projection (EPSG:3857).

    Raises DomainError for latitudes outside the Mercator validity range.
    """
    if abs(p.lat) > MAX_MERCATOR_LAT:
        raise DomainError(f"latitude {p.lat} outside Mercator validity +/-{MAX_MERCATOR_LAT}")
    x = MERCATOR_RADIUS_M * math.radians(p.lon)
    y = MERCATOR_RADIUS_M * math.asinh(math.tan(math.radians(p.lat)))
    return MercatorPoint(x, y)


def mercator_to_geo(m: MercatorPoint) -> GeoPoint:
    """Inverse spherical Mercator projection."""
    lon = math.degrees(m.x / MERCATOR_RADIUS_M)
    lat = math.degrees(2.0 * math.atan(math.exp(m.y / MERCATOR_RADIUS_M)) - math.pi / 2.0)
    # Clamp world-edge rounding: x == +extent belongs to the open upper lon
    # bound, x == -extent to exactly -180.
    lon = min(max(lon, -180.0), math.nextafter(180.0, 0.0))
    return GeoPoint(lat, lon)


def tile_bounds(t: TileId) -> GeoBox:
    """Geographic bounds of a slippy-map tile."""
    n = 1 << t.zoom

    def lon_edge(x: int) -> float:
        return x / n * 360.0 - 180.0

    def lat_edge(y: int) -> float:
        return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y / n))))

    return GeoBox(
        south=lat_edge(t.y + 1),
        west=lon_edge(t.x),
        north=lat_edge(t.y),
        east=lon_edge(t.x + 1),
    )


def tile_for_point(p: GeoPoint, zoom: int) -> TileId:
    """The tile containing a point (half-open convention: west/north edges inclusive)."""
    if abs(p.lat) > MAX_MERCATOR_LAT:
        raise DomainError(f"latitude {p.lat} outside Mercator validity")
    n = 1 << zoom
    xf = (p.lon + 180.0) / 360.0 * n
    lat_rad = math.radians(p.lat)
    yf = (1.0 - math.asinh(math.tan(lat_rad)) / math.pi) / 2.0 * n
    x = min(n - 1, max(0, int(math.floor(xf))))
    y = min(n - 1, max(0, int(math.floor(yf))))
    return TileId(zoom, x, y)


def tile_mercator_bounds(t: TileId) -> tuple[float, float, float, float]:
    """Tile bounds in EPSG:3857 meters as (x_west, y_south, x_east, y_north)."""
    n = 1 << t.zoom
    world = 2.0 * MERCATOR_EXTENT_M
    x_west = -MERCATOR_EXTENT_M + t.x / n * world
    x_east = -MERCATOR_EXTENT_M + (t.x + 1) / n * world
    y_north = MERCATOR_EXTENT_M - t.y / n * world
    y_south = MERCATOR_EXTENT_M - (t.y + 1) / n * world
    return x_west, y_south, x_east, y_north


def pixel_to_mercator(t: TileId, px: tuple[float, float], tile_size: int = 256) -> MercatorPoint:
    """Affine interpolation of a tile pixel position into EPSG:3857 meters.

    Tiles are linear in the projected plane, not in latitude, so this is the
    exact step; the geographic result is just an inverse projection away.
    """
    x_pix, y_pix = px
    if not (0 <= x_pix <= tile_size and 0 <= y_pix <= tile_size):
        raise DomainError(f"pixel ({x_pix}, {y_pix}) outside tile of size {tile_size}")
    x_west, y_south, x_east, y_north = tile_mercator_bounds(t)
    mx = x_west + (x_east - x_west) * (x_pix / tile_size)
    my = y_north - (y_north - y_south) * (y_pix / tile_size)
    return MercatorPoint(mx, my)


def pixel_to_geo(t: TileId, px: tuple[float, float], tile_size: int = 256) -> GeoPoint:
    """Map a pixel position inside a tile to WGS84."""
    return mercator_to_geo(pixel_to_mercator(t, px, tile_size))


def geo_to_pixel(t: TileId, p: GeoPoint, tile_size: int = 256) -> tuple[float, float]:
    """Inverse of pixel_to_geo; may return coordinates outside [0, tile_size]."""
    m = geo_to_mercator(p)
    x_west, y_south, x_east, y_north = tile_mercator_bounds(t)
    return (
        (m.x - x_west) / (x_east - x_west) * tile_size,
        (y_north - m.y) / (y_north - y_south) * tile_size,
    )


def box_center_geo(t: TileId, b: PixelBox, tile_size: int = 256) -> GeoPoint:
    """Georeference a detection box by projecting its pixel center."""
    cx, cy = b.center
    if b.x_max > tile_size or b.y_max > tile_size:
        raise DomainError("pixel box extends outside tile")
    return pixel_to_geo(t, (cx, cy), tile_size)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (sphere, mean radius)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_phi = phi2 - phi1
    d_lam = math.radians(b.lon - a.lon)
    h = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def bearing_deg(origin: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle bearing from origin toward target, degrees
    clockwise from true north, in [0, 360).
    """
    if origin == target:
        raise DomainError("bearing undefined for coincident points")
    phi1 = math.radians(origin.lat)
    phi2 = math.radians(target.lat)
    d_lam = math.radians(target.lon - origin.lon)
    y = math.sin(d_lam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(d_lam)
    return math.degrees(math.atan2(y, x)) % 360.0


def destination_point(origin: GeoPoint, bearing: float, distance_m: float) -> GeoPoint:
    """Point reached by travelling distance_m along an initial bearing."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing)
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))
