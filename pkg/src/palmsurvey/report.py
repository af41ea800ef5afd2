"""Survey reporting: heatmap grids, hotspot lists, GeoJSON export, and the
aerial-vs-street acquisition cost comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geo import GeoPoint, geo_to_mercator
from .timeline import InfestationTimeline

STREET_IMAGE_UNIT_COST_USD = 0.007


@dataclass
class HeatmapGrid:
    origin: GeoPoint  # northwest corner of the grid
    cell_size_m: float
    counts: np.ndarray  # rows (south-positive) x cols (east-positive)
    remainder: int = 0  # trees outside the AOI

    def to_dict(self) -> dict:
        return {
            "origin": {"lat": self.origin.lat, "lon": self.origin.lon},
            "cell_size_m": self.cell_size_m,
            "counts": self.counts.tolist(),
            "remainder": self.remainder,
        }


@dataclass(frozen=True)
class CostReport:
    street_only_images: int
    combined_street_images: int
    combined_aerial_tiles: int
    street_image_unit_cost: float = STREET_IMAGE_UNIT_COST_USD
    aerial_tile_unit_cost: float = 0.0
    reduction_factor: float | None = None
    street_only_cost_usd: float = 0.0
    combined_cost_usd: float = 0.0

    def to_dict(self) -> dict:
        return {
            "street_only_images": self.street_only_images,
            "combined_street_images": self.combined_street_images,
            "combined_aerial_tiles": self.combined_aerial_tiles,
            "street_image_unit_cost": self.street_image_unit_cost,
            "aerial_tile_unit_cost": self.aerial_tile_unit_cost,
            "reduction_factor": self.reduction_factor,
            "street_only_cost_usd": round(self.street_only_cost_usd, 6),
            "combined_cost_usd": round(self.combined_cost_usd, 6),
        }


def build_heatmap(trees, aoi, cell_size_m: float = 100.0) -> HeatmapGrid:
    """Count trees into a regular Mercator-space grid over the AOI.

    Cells are half-open ([west, east) x (north, south] going down) so every
    tree lands in exactly one cell; trees outside the AOI box go to the
    remainder bucket.
    """
    if cell_size_m <= 0:
        raise DomainError("cell size must be positive")
    box = aoi.bounding_box()
    sw = geo_to_mercator(GeoPoint(box.south, box.west))
    ne = geo_to_mercator(GeoPoint(box.north, box.east))
    cols = max(1, math.ceil((ne.x - sw.x) / cell_size_m))
    rows = max(1, math.ceil((ne.y - sw.y) / cell_size_m))
    counts = np.zeros((rows, cols), dtype=int)
    remainder = 0
    for tree in trees:
        m = geo_to_mercator(tree.location)
        col = math.floor((m.x - sw.x) / cell_size_m)
        row = math.floor((ne.y - m.y) / cell_size_m)
        if 0 <= row < rows and 0 <= col < cols:
            counts[row, col] += 1
        else:
            remainder += 1
    return HeatmapGrid(
        origin=GeoPoint(box.north, box.west),
        cell_size_m=cell_size_m,
        counts=counts,
        remainder=remainder,
    )


def hotspots(grid: HeatmapGrid, min_count: int) -> list[tuple[tuple[int, int], int]]:
    """Cells at or above min_count, densest first; ties break by cell index."""
    if min_count < 1:
        raise DomainError("min_count must be >= 1")
    cells = [
        ((r, c), int(grid.counts[r, c]))
        for r in range(grid.counts.shape[0])
        for c in range(grid.counts.shape[1])
        if grid.counts[r, c] >= min_count
    ]
    return sorted(cells, key=lambda rc: (-rc[1], rc[0]))


def cost_comparison(
    panoramas_needed: int,
    street_images_for_detected: int,
    aerial_tiles: int,
    views_per_panorama: int = 4,
    street_image_unit_cost: float = STREET_IMAGE_UNIT_COST_USD,
    aerial_tile_unit_cost: float = 0.0,
) -> CostReport:
    """Compare blanket street coverage against aerial-guided acquisition.

    Street-only coverage needs views_per_panorama images per panorama; the
    combined method only photographs detected trees. The reduction factor is
    None (undefined) when no street images were needed at all.
    """
    if min(panoramas_needed, street_images_for_detected, aerial_tiles) < 0:
        raise DomainError("counts must be non-negative")
    street_only = panoramas_needed * views_per_panorama
    reduction = None
    if street_images_for_detected > 0:
        reduction = street_only / street_images_for_detected
    return CostReport(
        street_only_images=street_only,
        combined_street_images=street_images_for_detected,
        combined_aerial_tiles=aerial_tiles,
        street_image_unit_cost=street_image_unit_cost,
        aerial_tile_unit_cost=aerial_tile_unit_cost,
        reduction_factor=reduction,
        street_only_cost_usd=street_only * street_image_unit_cost,
        combined_cost_usd=street_images_for_detected * street_image_unit_cost
        + aerial_tiles * aerial_tile_unit_cost,
    )


def export_geojson(trees, timelines: dict[str, InfestationTimeline] | None = None) -> str:
    """RFC 7946 FeatureCollection of tree points, ordered by id, stable bytes."""
    timelines = timelines or {}
    features = []
    for tree in sorted(trees, key=lambda t: t.id):
        tl = timelines.get(tree.id)
        props = {
            "id": tree.id,
            "source": tree.source,
            "status": tl.status if tl else None,
            "transition": list(tl.transition) if tl and tl.transition else None,
        }
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [round(tree.location.lon, 9), round(tree.location.lat, 9)],
                },
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def render_html_report(
    tree_count: int,
    grid: HeatmapGrid,
    hotspot_cells: list[tuple[tuple[int, int], int]],
    cost: CostReport,
    timeline_summaries: list[dict],
) -> str:
    """Static HTML report: heatmap as an inline data table, no scripts."""
    rows = []
    for r in range(grid.counts.shape[0]):
        cells = "".join(f"<td>{int(v)}</td>" for v in grid.counts[r])
        rows.append(f"<tr>{cells}</tr>")
    hotspot_rows = "".join(
        f"<tr><td>{r},{c}</td><td>{n}</td></tr>" for (r, c), n in hotspot_cells
    )
    timeline_rows = "".join(
        f"<tr><td>{t['id']}</td><td>{t['status']}</td><td>{t.get('transition') or ''}</td></tr>"
        for t in timeline_summaries
    )
    reduction = "n/a" if cost.reduction_factor is None else f"{cost.reduction_factor:.3f}"
    return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Palm survey report</title></head>
<body>
<h1>Palm survey report</h1>
<p>Trees in registry: {tree_count}</p>
<h2>Cost comparison</h2>
<table border="1">
<tr><th>Street-only images</th><td>{cost.street_only_images}</td></tr>
<tr><th>Combined street images</th><td>{cost.combined_street_images}</td></tr>
<tr><th>Combined aerial tiles</th><td>{cost.combined_aerial_tiles}</td></tr>
<tr><th>Reduction factor</th><td>{reduction}</td></tr>
<tr><th>Street-only cost (USD)</th><td>{cost.street_only_cost_usd:.3f}</td></tr>
</table>
<h2>Heatmap ({grid.cell_size_m:.0f} m cells, remainder {grid.remainder})</h2>
<table border="1">{''.join(rows)}</table>
<h2>Hotspots</h2>
<table border="1"><tr><th>cell</th><th>count</th></tr>{hotspot_rows}</table>
<h2>Timelines</h2>
<table border="1"><tr><th>tree</th><th>status</th><th>transition</th></tr>{timeline_rows}</table>
</body></html>
"""
