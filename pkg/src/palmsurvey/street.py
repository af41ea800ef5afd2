"""Linking trees to street panoramas: nearest-panorama lookup, camera
headings, and the historical re-centering heuristic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DomainError
from .geo import GeoPoint, bearing_deg, haversine_m
from .planner import StreetImageRequest


@dataclass(frozen=True)
class PanoramaRecord:
    pano_id: str
    location: GeoPoint
    capture_date: str  # "YYYY-MM"

    def __post_init__(self):
        _validate_year_month(self.capture_date)


def _validate_year_month(s: str) -> None:
    parts = s.split("-")
    if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
        raise DomainError(f"capture date {s!r} is not YYYY-MM")
    year, month = int(parts[0]), int(parts[1])
    if not 1 <= month <= 12:
        raise DomainError(f"capture date {s!r} has invalid month")
    if year < 1900:
        raise DomainError(f"capture date {s!r} has implausible year")


def nearest_panorama(tree: GeoPoint, panos: list[PanoramaRecord]) -> PanoramaRecord:
    """The panorama closest to the tree; distance ties go to the smaller pano_id."""
    if not panos:
        raise DomainError("no panoramas available")
    return min(panos, key=lambda p: (haversine_m(tree, p.location), p.pano_id))


def camera_heading(pano: GeoPoint, tree: GeoPoint) -> float:
    """Heading that points the street camera at the tree."""
    return bearing_deg(pano, tree)


def pixel_shift_deg(crown_box, image_width: int = 640) -> float:
    """Angular offset of a crown from the image center for a 90-degree fov view.

    A crown centered horizontally gives 0; the left edge -45, the right +45.
    """
    center_x = (crown_box.x_min + crown_box.x_max) / 2.0
    return 90.0 * center_x / image_width - 45.0


def recenter_heading(
    tree: GeoPoint,
    original: tuple[PanoramaRecord, float, object],
    historical: PanoramaRecord,
    image_width: int = 640,
) -> StreetImageRequest:
    """Heading for re-photographing a tree from a historical panorama.

    If the historical viewpoint is farther from the tree than the original
    one, aim straight at the tree's coordinates. Otherwise correct the aim by
    the crown's horizontal shift observed in the original image.
    """
    original_pano, _original_heading, crown_box = original
    base = camera_heading(historical.location, tree)
    if haversine_m(historical.location, tree) > haversine_m(original_pano.location, tree):
        heading = base
    else:
        heading = (base + pixel_shift_deg(crown_box, image_width)) % 360.0
    return StreetImageRequest(
        location=historical.location, heading=heading, pano_id=historical.pano_id
    )


def load_panorama_catalog(text: str) -> list[PanoramaRecord]:
    """Parse a JSON-lines panorama catalog (pano_id, lat, lon, date)."""
    panos = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        panos.append(
            PanoramaRecord(
                pano_id=rec["pano_id"],
                location=GeoPoint(rec["lat"], rec["lon"]),
                capture_date=rec["date"],
            )
        )
    return panos


def dump_panorama_catalog(panos: list[PanoramaRecord]) -> str:
    lines = []
    for p in panos:
        lines.append(
            json.dumps(
                {
                    "pano_id": p.pano_id,
                    "lat": p.location.lat,
                    "lon": p.location.lon,
                    "date": p.capture_date,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
