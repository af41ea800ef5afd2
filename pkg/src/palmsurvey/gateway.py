"""Detector gateway: runs detection/classification backends over planned
imagery and georeferences aerial detections.

Backends are language-neutral processes speaking newline-delimited JSON on
stdin/stdout (or the equivalent requests.jsonl / results.jsonl batch files).
In-process backends only need to provide the same detect/classify surface.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass

from .errors import BackendError, DomainError, ProtocolError
from .geo import GeoPoint, PixelBox, TileId, box_center_geo, haversine_m
from .planner import StreetImageRequest
from .registry import TreeRecord

PROTOCOL_VERSION = 1

KIND_AERIAL = "aerial-tile"
KIND_STREET = "street-view"

AERIAL_IMAGE_SIZE = 256
STREET_IMAGE_SIZE = 640


@dataclass(frozen=True)
class DetectionRequest:
    image_ref: str
    kind: str
    tile: TileId | None = None
    request_meta: StreetImageRequest | None = None

    def __post_init__(self):
        if self.kind == KIND_AERIAL and self.tile is None:
            raise DomainError("aerial request needs a TileId")
        if self.kind not in (KIND_AERIAL, KIND_STREET):
            raise DomainError(f"unknown request kind {self.kind!r}")

    @property
    def image_size(self) -> int:
        return AERIAL_IMAGE_SIZE if self.kind == KIND_AERIAL else STREET_IMAGE_SIZE


@dataclass(frozen=True)
class Detection:
    box: PixelBox
    score: float
    label: str
    request: DetectionRequest

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DomainError(f"score {self.score} outside [0, 1]")
        size = self.request.image_size
        if self.box.x_max > size or self.box.y_max > size:
            raise DomainError(f"box exceeds {size}px source image")


@dataclass(frozen=True)
class GeoCandidate:
    location: GeoPoint
    score: float
    source_tile: TileId
    box: PixelBox


class SubprocessBackend:
    """Client for a backend process speaking the stdio JSON-lines protocol."""

    def __init__(self, command: list[str], task: str = "detect", timeout: float = 60.0):
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise BackendError(f"cannot start backend {command!r}: {e}") from e
        self._next_id = 0
        reply = self._roundtrip({"op": "hello", "version": PROTOCOL_VERSION, "task": task})
        if reply.get("op") != "hello" or reply.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad handshake reply: {reply}")
        self.labels = reply.get("labels", [])

    def _send(self, msg: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise BackendError(f"backend write failed: {e}") from e

    def _recv(self) -> dict:
        line = self._proc.stdout.readline()
        if not line:
            raise BackendError("backend closed its output stream")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"unparseable backend message: {e}", line=line)
        if not isinstance(msg, dict) or "op" not in msg:
            raise ProtocolError("backend message missing op", line=line)
        return msg

    def _roundtrip(self, msg: dict) -> dict:
        self._send(msg)
        return self._recv()

    def _request(self, op: str, image_ref: str) -> dict:
        self._next_id += 1
        rid = self._next_id
        reply = self._roundtrip({"op": op, "id": rid, "image": image_ref})
        if reply.get("id") != rid:
            raise ProtocolError(f"backend echoed id {reply.get('id')}, expected {rid}")
        if reply.get("op") == "error":
            raise BackendError(f"backend error for {image_ref}: {reply.get('message')}")
        if reply.get("op") != "result":
            raise ProtocolError(f"unexpected op {reply.get('op')!r}")
        return reply

    def detect(self, image_ref: str) -> list[tuple[PixelBox, float, str]]:
        reply = self._request("detect", image_ref)
        out = []
        for d in reply.get("detections", []):
            box = PixelBox(*(float(v) for v in d["box"]))
            out.append((box, float(d["score"]), d["label"]))
        return out

    def classify(self, image_ref: str) -> dict:
        reply = self._request("classify", image_ref)
        probs = reply.get("probs")
        if not isinstance(probs, dict):
            raise ProtocolError("classify result missing probs")
        return {k: float(v) for k, v in probs.items()}

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _detection_sort_key(order_index: int, det: Detection) -> tuple:
    b = det.box
    return (order_index, -det.score, b.x_min, b.y_min, b.x_max, b.y_max)


def run_detection_batch(
    requests: list[DetectionRequest],
    backend,
    score_threshold: float = 0.5,
    failures: list | None = None,
) -> list[Detection]:
    """Run detection over a batch; per-request failures never abort the batch.

    Output order is canonical (request order, then descending score, then box
    lexicographic) so concurrent backend scheduling cannot leak into results.
    """
    if not 0.0 <= score_threshold <= 1.0:
        raise DomainError("score threshold outside [0, 1]")
    keyed = []
    for i, req in enumerate(requests):
        try:
            raw = backend.detect(req.image_ref)
        except (BackendError, ProtocolError) as e:
            if isinstance(e, ProtocolError):
                raise
            if failures is not None:
                failures.append((req, str(e)))
            continue
        for box, score, label in raw:
            if score >= score_threshold:
                det = Detection(box=box, score=score, label=label, request=req)
                keyed.append((_detection_sort_key(i, det), det))
    keyed.sort(key=lambda kv: kv[0])
    return [det for _, det in keyed]


def georeference(detections: list[Detection], tile_size: int = 256) -> list[GeoCandidate]:
    """Convert aerial detections to geographic candidates via box centers."""
    out = []
    for det in detections:
        if det.request.kind != KIND_AERIAL:
            raise DomainError("georeference only applies to aerial detections")
        tile = det.request.tile
        out.append(
            GeoCandidate(
                location=box_center_geo(tile, det.box, tile_size),
                score=det.score,
                source_tile=tile,
                box=det.box,
            )
        )
    return out


def merge_candidates(cands: list[GeoCandidate], radius_m: float = 3.0) -> list[TreeRecord]:
    """Greedy dedup of overlapping-tile candidates into one tree per cluster.

    Candidates are processed by descending score (ties broken by location);
    each joins the first seed within the radius, else becomes a new seed. The
    seed's location is the tree location.
    """
    if radius_m <= 0:
        raise DomainError("dedup radius must be positive")
    ordered = sorted(
        cands, key=lambda c: (-c.score, c.location.lat, c.location.lon)
    )
    seeds: list[GeoCandidate] = []
    for c in ordered:
        for s in seeds:
            if haversine_m(c.location, s.location) <= radius_m:
                break
        else:
            seeds.append(c)
    trees = [TreeRecord.at(s.location, score=s.score) for s in seeds]
    return sorted(trees, key=lambda t: t.id)
