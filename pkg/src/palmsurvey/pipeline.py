"""Stage-by-stage survey pipeline over a working directory.

Each stage reads its predecessor's artifacts, writes its own with
deterministic bytes, and records an input digest so re-running a completed
stage is a no-op.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

from . import gateway, report as report_mod, street as street_mod
from .errors import BackendError, DomainError
from .gateway import (
    KIND_AERIAL,
    KIND_STREET,
    DetectionRequest,
    georeference,
    merge_candidates,
    run_detection_batch,
)
from .geo import GeoBox, GeoPoint, PixelBox, haversine_m
from .planner import (
    AreaOfInterest,
    StreetSamplePlan,
    TilePlan,
    enumerate_tiles,
    load_street_geojson,
    plan_streets,
)
from .registry import Observation, TreeRecord, TreeStore
from .simulator import MockBackend, NoiseModel, SyntheticWorld
from .street import (
    PanoramaRecord,
    camera_heading,
    load_panorama_catalog,
    nearest_panorama,
    pixel_shift_deg,
    recenter_heading,
)
from .timeline import ClassificationResult, build_timeline

STAGES = ("detect-aerial", "link", "detect-street", "classify", "history")


def tile_key(t) -> str:
    return f"tile/{t.zoom}/{t.x}/{t.y}"


def street_key(pano_id: str, heading: float) -> str:
    return f"street/{pano_id}/{heading:.6f}"


def crown_key(pano_id: str, heading: float, box: PixelBox) -> str:
    b = f"{box.x_min:.2f},{box.y_min:.2f},{box.x_max:.2f},{box.y_max:.2f}"
    return f"crown/{pano_id}/{heading:.6f}/{b}"


@dataclass
class SurveyConfig:
    aoi: AreaOfInterest
    zoom: int = 20
    tile_size: int = 256
    street_image_size: int = 640
    fov: float = 90.0
    sample_spacing_m: float = 8.0
    score_threshold: float = 0.5
    dedup_radius_m: float = 3.0
    visibility_radius_m: float = 50.0
    heatmap_cell_m: float = 100.0
    hotspot_min_count: int = 3
    workers: int = 1
    backend: dict | None = None  # {"mode": "mock"|"subprocess", ...}
    provider: dict | None = None
    costs: dict | None = None
    streets_geojson: str | None = None
    panorama_catalog: str | None = None

    def __post_init__(self):
        for name in ("zoom", "tile_size", "street_image_size", "fov", "sample_spacing_m",
                     "dedup_radius_m", "visibility_radius_m", "heatmap_cell_m"):
            if getattr(self, name) <= 0:
                raise DomainError(f"config field {name} must be positive")
        if self.zoom > 22:
            raise DomainError("zoom must be <= 22")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise DomainError("score_threshold outside [0, 1]")

    @staticmethod
    def from_dict(doc: dict, base_dir: str = ".") -> "SurveyConfig":
        aoi_doc = doc.get("aoi")
        if not aoi_doc:
            raise DomainError("config missing aoi")
        if "box" in aoi_doc:
            s, w, n, e = aoi_doc["box"]
            aoi = AreaOfInterest(name=aoi_doc.get("name", "aoi"), boundary=GeoBox(s, w, n, e))
        else:
            aoi = AreaOfInterest(
                name=aoi_doc.get("name", "aoi"),
                polygon=tuple(GeoPoint(lat, lon) for lat, lon in aoi_doc["polygon"]),
            )

        def path_or_none(key):
            v = doc.get(key)
            return os.path.join(base_dir, v) if v else None

        kwargs = {
            k: doc[k]
            for k in (
                "zoom", "tile_size", "street_image_size", "fov", "sample_spacing_m",
                "score_threshold", "dedup_radius_m", "visibility_radius_m",
                "heatmap_cell_m", "hotspot_min_count", "workers",
            )
            if k in doc
        }
        backend = dict(doc.get("backend") or {})
        if "world" in backend:
            backend["world"] = os.path.join(base_dir, backend["world"])
        return SurveyConfig(
            aoi=aoi,
            backend=backend or None,
            provider=doc.get("provider"),
            costs=doc.get("costs"),
            streets_geojson=path_or_none("streets_geojson"),
            panorama_catalog=path_or_none("panorama_catalog"),
            **kwargs,
        )

    def canonical(self) -> str:
        doc = {
            "aoi": {
                "name": self.aoi.name,
                "box": [
                    self.aoi.bounding_box().south,
                    self.aoi.bounding_box().west,
                    self.aoi.bounding_box().north,
                    self.aoi.bounding_box().east,
                ],
                "polygon": [[v.lat, v.lon] for v in self.aoi.polygon],
            },
            "zoom": self.zoom,
            "tile_size": self.tile_size,
            "street_image_size": self.street_image_size,
            "fov": self.fov,
            "sample_spacing_m": self.sample_spacing_m,
            "score_threshold": self.score_threshold,
            "dedup_radius_m": self.dedup_radius_m,
            "visibility_radius_m": self.visibility_radius_m,
            "heatmap_cell_m": self.heatmap_cell_m,
            "hotspot_min_count": self.hotspot_min_count,
            "backend": self.backend,
            "costs": self.costs,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class SurveyRun:
    """Filesystem-backed pipeline state for one survey."""

    def __init__(self, config: SurveyConfig, workdir: str):
        self.config = config
        self.workdir = workdir
        os.makedirs(workdir, exist_ok=True)
        self._backend_cache = None
        self._subprocs: list = []

    # ---- paths ----------------------------------------------------------

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    @property
    def registry_path(self) -> str:
        return self.path("registry.jsonl")

    # ---- stage bookkeeping ----------------------------------------------

    def _state(self) -> dict:
        try:
            with open(self.path("state.json"), encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            return {}

    def _save_state(self, state: dict) -> None:
        with open(self.path("state.json"), "w", encoding="utf-8") as f:
            json.dump(state, f, sort_keys=True, indent=1)

    _STAGE_INPUTS = {
        "detect-aerial": (None, ("plan_tiles.json",)),
        "link": ("detect-aerial", ("panoramas.jsonl",)),
        "detect-street": ("link", ()),
        "classify": ("detect-street", ()),
        "history": ("classify", ("panoramas.jsonl",)),
    }

    def _digest(self, stage: str) -> str:
        """Digest chain over the config, plan artifacts, and upstream stages.

        The registry is rewritten by several stages, so stage identity hangs
        off the immutable inputs plus the predecessor's completion token
        rather than off mutable artifacts.
        """
        prev, artifact_names = self._STAGE_INPUTS[stage]
        h = hashlib.sha256(self.config.canonical().encode())
        if prev is not None:
            token = self._state().get(prev)
            if token is None:
                raise DomainError(
                    f"stage {prev!r} has not completed; stages run in order {', '.join(STAGES)}"
                )
            h.update(token.encode())
        for name in artifact_names:
            p = self.path(name)
            if not os.path.exists(p):
                raise DomainError(f"stage prerequisite missing: {name} (run plan first)")
            with open(p, "rb") as f:
                h.update(f.read())
        return h.hexdigest()

    def _stage_done(self, stage: str, digest: str) -> bool:
        return self._state().get(stage) == digest

    def _mark_stage(self, stage: str, digest: str) -> None:
        state = self._state()
        state[stage] = digest
        self._save_state(state)

    # ---- inputs ----------------------------------------------------------

    def _world(self) -> SyntheticWorld:
        backend = self.config.backend or {}
        if "world" not in backend:
            raise DomainError("backend config has no world file")
        with open(backend["world"], encoding="utf-8") as f:
            return SyntheticWorld.from_json(f.read())

    def backend_handle(self, task: str):
        backend = self.config.backend or {}
        mode = backend.get("mode", "mock")
        if mode == "mock":
            noise = NoiseModel(**backend.get("noise", {})) if backend.get("noise") else NoiseModel()
            if self._backend_cache is None:
                self._backend_cache = MockBackend(self._world(), noise, self.config.tile_size)
            return self._backend_cache
        if mode == "subprocess":
            cmd = backend.get(f"{task}_cmd") or backend.get("cmd")
            if not cmd:
                raise BackendError(f"no backend command configured for task {task!r}")
            proc = gateway.SubprocessBackend(cmd, task=task)
            self._subprocs.append(proc)
            return proc
        raise DomainError(f"unknown backend mode {mode!r}")

    def _close_backends(self) -> None:
        for proc in self._subprocs:
            proc.close()
        self._subprocs.clear()

    def _panorama_catalog(self) -> list[PanoramaRecord]:
        p = self.path("panoramas.jsonl")
        if not os.path.exists(p):
            raise DomainError("panorama catalog missing; run plan first")
        with open(p, encoding="utf-8") as f:
            return load_panorama_catalog(f.read())

    def _write(self, name: str, text: str) -> None:
        with open(self.path(name), "w", encoding="utf-8") as f:
            f.write(text)

    # ---- stages ----------------------------------------------------------

    def plan(self) -> dict:
        cfg = self.config
        tile_plan = enumerate_tiles(cfg.aoi, cfg.zoom)
        backend = cfg.backend or {}
        if "world" in backend:
            world = self._world()
            streets = world.streets
            catalog = street_mod.dump_panorama_catalog(world.panoramas)
        else:
            if not cfg.streets_geojson:
                raise DomainError("config needs streets_geojson (or a simulator world)")
            with open(cfg.streets_geojson, encoding="utf-8") as f:
                streets = load_street_geojson(f.read())
            if cfg.panorama_catalog:
                with open(cfg.panorama_catalog, encoding="utf-8") as f:
                    catalog = f.read()
            else:
                catalog = ""
        street_plan = plan_streets(streets, spacing=cfg.sample_spacing_m, fov=cfg.fov)
        self._write("plan_tiles.json", tile_plan.to_json() + "\n")
        self._write("plan_street.json", street_plan.to_json() + "\n")
        self._write("panoramas.jsonl", catalog)
        return {
            "tiles": len(tile_plan.tiles),
            "street_samples": len(street_plan.samples),
            "street_images": len(street_plan.samples) * 4,
        }

    def stage_detect_aerial(self) -> dict:
        digest = self._digest("detect-aerial")
        if self._stage_done("detect-aerial", digest):
            return {"skipped": True}
        with open(self.path("plan_tiles.json"), encoding="utf-8") as f:
            tile_plan = TilePlan.from_json(f.read())
        requests = [
            DetectionRequest(image_ref=tile_key(t), kind=KIND_AERIAL, tile=t)
            for t in tile_plan.tiles
        ]
        backend = self.backend_handle("detect")
        failures: list = []
        detections = run_detection_batch(
            requests, backend, self.config.score_threshold, failures=failures
        )
        candidates = georeference(detections, self.config.tile_size)
        trees = merge_candidates(candidates, self.config.dedup_radius_m)
        store = TreeStore(self.registry_path, self.config.dedup_radius_m)
        for tree in trees:
            store.upsert_tree(tree)
        store.save()
        self._mark_stage("detect-aerial", digest)
        return {"detections": len(detections), "trees": len(store), "failures": len(failures)}

    def stage_link(self) -> dict:
        digest = self._digest("link")
        if self._stage_done("link", digest):
            return {"skipped": True}
        store = TreeStore(self.registry_path, self.config.dedup_radius_m)
        panos = self._panorama_catalog()
        if not panos:
            raise DomainError("panorama catalog is empty")
        latest = max(p.capture_date for p in panos)
        current = [p for p in panos if p.capture_date == latest]
        links = []
        unreachable = 0
        for tree in store.all_trees():
            pano = nearest_panorama(tree.location, current)
            if haversine_m(pano.location, tree.location) > self.config.visibility_radius_m:
                links.append({"tree_id": tree.id, "unreachable": True})
                unreachable += 1
                continue
            heading = camera_heading(pano.location, tree.location)
            links.append(
                {
                    "tree_id": tree.id,
                    "pano_id": pano.pano_id,
                    "date": pano.capture_date,
                    "heading": round(heading, 6),
                }
            )
        self._write(
            "links.jsonl",
            "".join(json.dumps(l, sort_keys=True, separators=(",", ":")) + "\n" for l in links),
        )
        self._mark_stage("link", digest)
        return {"links": len(links) - unreachable, "unreachable": unreachable}

    def _load_links(self) -> list[dict]:
        p = self.path("links.jsonl")
        if not os.path.exists(p):
            raise DomainError("links.jsonl missing; run link stage first")
        with open(p, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def stage_detect_street(self) -> dict:
        digest = self._digest("detect-street")
        if self._stage_done("detect-street", digest):
            return {"skipped": True}
        store = TreeStore(self.registry_path, self.config.dedup_radius_m)
        backend = self.backend_handle("detect")
        found = missed = 0
        for link in self._load_links():
            tree = store.get(link["tree_id"])
            if link.get("unreachable"):
                if "street-unreachable" not in tree.flags:
                    store.update_tree(
                        replace(tree, flags=tree.flags + ("street-unreachable",))
                    )
                continue
            heading = link["heading"]
            ref = street_key(link["pano_id"], heading)
            try:
                raw = backend.detect(ref)
            except BackendError:
                missed += 1
                continue
            crown = _pick_crown(raw, self.config.street_image_size)
            if crown is None:
                missed += 1
                continue
            obs = Observation(
                capture_date=link["date"],
                pano_id=link["pano_id"],
                heading=heading,
                crown_box=crown,
            )
            store.update_tree(
                replace(
                    tree,
                    observations=_sorted_obs(tree.observations + (obs,)),
                )
            )
            found += 1
        store.save()
        self._mark_stage("detect-street", digest)
        return {"crowns": found, "no_crown": missed}

    def stage_classify(self) -> dict:
        digest = self._digest("classify")
        if self._stage_done("classify", digest):
            return {"skipped": True}
        store = TreeStore(self.registry_path, self.config.dedup_radius_m)
        backend = self.backend_handle("classify")
        classified = failures = 0
        for tree in store.all_trees():
            new_obs = []
            changed = False
            for obs in tree.observations:
                if obs.crown_box is not None and obs.classification is None:
                    ref = crown_key(obs.pano_id, obs.heading, obs.crown_box)
                    try:
                        probs = backend.classify(ref)
                    except BackendError:
                        failures += 1
                        new_obs.append(obs)
                        continue
                    obs = replace(obs, classification=probs)
                    classified += 1
                    changed = True
                new_obs.append(obs)
            if changed:
                store.update_tree(replace(tree, observations=tuple(new_obs)))
        store.save()
        self._mark_stage("classify", digest)
        return {"classified": classified, "failures": failures}

    def stage_history(self) -> dict:
        digest = self._digest("history")
        if self._stage_done("history", digest):
            return {"skipped": True}
        store = TreeStore(self.registry_path, self.config.dedup_radius_m)
        panos = self._panorama_catalog()
        pano_by_id = {p.pano_id: p for p in panos}
        detect_backend = self.backend_handle("detect")
        classify_backend = self.backend_handle("classify")
        histories = 0
        for tree in store.all_trees():
            current = _current_classified_obs(tree)
            if current is None:
                continue
            result = ClassificationResult(current.classification)
            if result.label != "infested":
                continue
            original_pano = pano_by_id.get(current.pano_id)
            if original_pano is None:
                continue
            new_obs = list(tree.observations)
            for hist in _historical_panos(tree.location, panos, current.capture_date,
                                          self.config.visibility_radius_m):
                request = recenter_heading(
                    tree.location,
                    (original_pano, current.heading, current.crown_box),
                    hist,
                    self.config.street_image_size,
                )
                try:
                    raw = detect_backend.detect(street_key(hist.pano_id, request.heading))
                except BackendError:
                    continue
                crown = _pick_crown(raw, self.config.street_image_size)
                if crown is None:
                    continue
                try:
                    probs = classify_backend.classify(
                        crown_key(hist.pano_id, request.heading, crown)
                    )
                except BackendError:
                    continue
                new_obs.append(
                    Observation(
                        capture_date=hist.capture_date,
                        pano_id=hist.pano_id,
                        heading=round(request.heading, 6),
                        crown_box=crown,
                        classification=probs,
                    )
                )
            store.update_tree(replace(tree, observations=_sorted_obs(tuple(new_obs))))
            histories += 1
        store.save()

        timelines = {}
        for tree in store.all_trees():
            points = [
                (o.capture_date, ClassificationResult(o.classification))
                for o in tree.observations
                if o.classification is not None
            ]
            if points:
                timelines[tree.id] = build_timeline(points).to_dict()
        self._write(
            "timelines.json",
            json.dumps(timelines, sort_keys=True, separators=(",", ":")) + "\n",
        )
        self._mark_stage("history", digest)
        return {"histories": histories, "timelines": len(timelines)}

    def run_stage(self, stage: str) -> dict:
        fn = {
            "detect-aerial": self.stage_detect_aerial,
            "link": self.stage_link,
            "detect-street": self.stage_detect_street,
            "classify": self.stage_classify,
            "history": self.stage_history,
        }.get(stage)
        if fn is None:
            raise DomainError(f"unknown stage {stage!r}; stages are {', '.join(STAGES)}")
        try:
            return fn()
        finally:
            self._close_backends()

    def run_all(self) -> dict:
        out = {}
        for stage in STAGES:
            out[stage] = self.run_stage(stage)
        return out

    # ---- reporting -------------------------------------------------------

    def report(self) -> dict:
        cfg = self.config
        if not os.path.exists(self.registry_path):
            store_trees = []
        else:
            store_trees = TreeStore(self.registry_path, cfg.dedup_radius_m).all_trees()
        timelines_doc = {}
        tl_path = self.path("timelines.json")
        if os.path.exists(tl_path):
            with open(tl_path, encoding="utf-8") as f:
                timelines_doc = json.load(f)

        from .timeline import InfestationTimeline

        timelines = {
            tid: InfestationTimeline(
                points=tuple(tuple(p) for p in d["points"]),
                status=d["status"],
                transition=tuple(d["transition"]) if d["transition"] else None,
            )
            for tid, d in timelines_doc.items()
        }

        grid = report_mod.build_heatmap(store_trees, cfg.aoi, cfg.heatmap_cell_m)
        spots = report_mod.hotspots(grid, cfg.hotspot_min_count)

        panoramas_needed = 0
        if os.path.exists(self.path("plan_street.json")):
            with open(self.path("plan_street.json"), encoding="utf-8") as f:
                panoramas_needed = len(StreetSamplePlan.from_json(f.read()).samples)
        aerial_tiles = 0
        if os.path.exists(self.path("plan_tiles.json")):
            with open(self.path("plan_tiles.json"), encoding="utf-8") as f:
                aerial_tiles = len(TilePlan.from_json(f.read()).tiles)
        street_images = 0
        if os.path.exists(self.path("links.jsonl")):
            street_images = sum(1 for l in self._load_links() if not l.get("unreachable"))

        costs = cfg.costs or {}
        cost = report_mod.cost_comparison(
            panoramas_needed=panoramas_needed,
            street_images_for_detected=street_images,
            aerial_tiles=aerial_tiles,
            street_image_unit_cost=costs.get("street_image_usd", 0.007),
            aerial_tile_unit_cost=costs.get("aerial_tile_usd", 0.0),
        )

        summaries = [
            {"id": tid, "status": tl.status,
             "transition": list(tl.transition) if tl.transition else None}
            for tid, tl in sorted(timelines.items())
        ]
        self._write("trees.geojson", report_mod.export_geojson(store_trees, timelines))
        self._write(
            "heatmap.json",
            json.dumps(grid.to_dict(), sort_keys=True, separators=(",", ":")) + "\n",
        )
        self._write(
            "hotspots.json",
            json.dumps(
                [{"cell": list(cell), "count": count} for cell, count in spots],
                sort_keys=True, separators=(",", ":"),
            ) + "\n",
        )
        self._write(
            "cost.json",
            json.dumps(cost.to_dict(), sort_keys=True, separators=(",", ":")) + "\n",
        )
        self._write(
            "report.html",
            report_mod.render_html_report(len(store_trees), grid, spots, cost, summaries),
        )
        return {
            "trees": len(store_trees),
            "hotspots": len(spots),
            "cost": cost.to_dict(),
            "timelines": len(timelines),
        }

    def timelines(self) -> dict:
        from .timeline import InfestationTimeline

        with open(self.path("timelines.json"), encoding="utf-8") as f:
            doc = json.load(f)
        return {
            tid: InfestationTimeline(
                points=tuple(tuple(p) for p in d["points"]),
                status=d["status"],
                transition=tuple(d["transition"]) if d["transition"] else None,
            )
            for tid, d in doc.items()
        }


def _sorted_obs(obs: tuple) -> tuple:
    return tuple(sorted(obs, key=Observation.sort_key))


def _pick_crown(raw, image_width: int) -> PixelBox | None:
    """The crown nearest the image center; the camera was aimed at the tree."""
    best, best_shift = None, None
    for box, _score, _label in raw:
        shift = abs(pixel_shift_deg(box, image_width))
        if best_shift is None or shift < best_shift:
            best, best_shift = box, shift
    return best


def _current_classified_obs(tree: TreeRecord):
    """Latest street observation carrying both a crown box and a classification."""
    candidates = [
        o
        for o in tree.observations
        if o.classification is not None and o.crown_box is not None and o.pano_id
    ]
    return candidates[-1] if candidates else None


def _historical_panos(
    location: GeoPoint, panos: list[PanoramaRecord], before: str, visibility_m: float
) -> list[PanoramaRecord]:
    """Nearest pano per capture date older than `before`, within visibility."""
    by_date: dict[str, PanoramaRecord] = {}
    for p in panos:
        if p.capture_date >= before:
            continue
        if haversine_m(p.location, location) > visibility_m:
            continue
        cur = by_date.get(p.capture_date)
        if cur is None or (
            (haversine_m(p.location, location), p.pano_id)
            < (haversine_m(cur.location, location), cur.pano_id)
        ):
            by_date[p.capture_date] = p
    return [by_date[d] for d in sorted(by_date)]
