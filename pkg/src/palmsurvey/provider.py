"""Imagery-provider client: templated endpoints, a content-addressed local
cache, token-bucket rate limiting, and a monotone cost ledger.

The transport is injectable so tests (and the simulator) never need live
credentials; the default transport uses `requests`.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

from .errors import DomainError, ProviderError
from .geo import GeoPoint
from .street import PanoramaRecord

DEFAULT_RATE_LIMIT_PER_S = 10.0
STREET_IMAGE_UNIT_COST_USD = 0.007


class TokenBucket:
    def __init__(self, rate_per_s: float, capacity: float | None = None, clock=time.monotonic,
                 sleep=time.sleep):
        if rate_per_s <= 0:
            raise DomainError("rate must be positive")
        self.rate = rate_per_s
        self.capacity = capacity if capacity is not None else rate_per_s
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()

    def acquire(self) -> None:
        while True:
            now = self._clock()
            self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
            self._last = now
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return
            self._sleep((1.0 - self.tokens) / self.rate)


def _default_transport(url: str) -> bytes:
    import requests

    resp = requests.get(url, timeout=30)
    if resp.status_code in (401, 403):
        raise ProviderError(f"provider auth failure ({resp.status_code}) for {url}")
    if resp.status_code == 429:
        raise ProviderError("provider quota exceeded (429); retry later")
    if resp.status_code != 200:
        raise ProviderError(f"provider returned {resp.status_code} for {url}")
    return resp.content


class ProviderClient:
    """Fetches aerial tiles, street images, and panorama metadata with caching.

    Cache layout: cache/tiles/z/x/y.png, cache/street/<pano>/<heading>.jpg,
    cache/meta/*.jsonl. The API key is read from the named environment
    variable only; it never appears in config files or cache paths.
    """

    def __init__(self, settings: dict, cache_dir: str, transport=_default_transport,
                 sleep=time.sleep):
        self.settings = settings
        self.cache_dir = cache_dir
        self.transport = transport
        self.bucket = TokenBucket(settings.get("rate_limit_per_s", DEFAULT_RATE_LIMIT_PER_S),
                                  sleep=sleep)
        self.street_unit_cost = settings.get("street_image_usd", STREET_IMAGE_UNIT_COST_USD)
        self._ledger_path = os.path.join(cache_dir, "cost_ledger.json")
        os.makedirs(cache_dir, exist_ok=True)

    def _api_key(self) -> str:
        env_name = self.settings.get("api_key_env")
        if not env_name:
            return ""
        key = os.environ.get(env_name)
        if key is None:
            raise ProviderError(f"API key environment variable {env_name} is not set")
        return key

    def _ledger(self) -> dict:
        try:
            with open(self._ledger_path, encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            return {"street_images_fetched": 0, "tiles_fetched": 0, "cost_usd": 0.0}

    def _charge(self, kind: str) -> None:
        ledger = self._ledger()
        if kind == "street":
            ledger["street_images_fetched"] += 1
            ledger["cost_usd"] = round(
                ledger["street_images_fetched"] * self.street_unit_cost, 6
            )
        else:
            ledger["tiles_fetched"] += 1
        with open(self._ledger_path, "w", encoding="utf-8") as f:
            json.dump(ledger, f, sort_keys=True)

    @property
    def cost_usd(self) -> float:
        return self._ledger()["cost_usd"]

    def _fetch(self, url: str, cache_path: str, kind: str) -> bytes:
        if os.path.exists(cache_path):
            with open(cache_path, "rb") as f:
                return f.read()
        self.bucket.acquire()
        data = self.transport(url)
        os.makedirs(os.path.dirname(cache_path), exist_ok=True)
        tmp = cache_path + ".part"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, cache_path)
        self._charge(kind)
        return data

    def fetch_tile(self, zoom: int, x: int, y: int) -> bytes:
        template = self.settings.get("aerial_url")
        if not template:
            raise ProviderError("no aerial_url configured")
        url = template.format(z=zoom, x=x, y=y, key=self._api_key())
        path = os.path.join(self.cache_dir, "tiles", str(zoom), str(x), f"{y}.png")
        return self._fetch(url, path, "tile")

    def fetch_street_image(self, pano_id: str, heading: float, fov: float = 90.0,
                           size: int = 640) -> bytes:
        template = self.settings.get("street_url")
        if not template:
            raise ProviderError("no street_url configured")
        url = template.format(pano=pano_id, heading=heading, fov=fov, size=size,
                              key=self._api_key())
        path = os.path.join(self.cache_dir, "street", pano_id, f"{heading:.2f}.jpg")
        return self._fetch(url, path, "street")

    def fetch_panorama_metadata(self, location: GeoPoint) -> PanoramaRecord:
        template = self.settings.get("metadata_url")
        if not template:
            raise ProviderError("no metadata_url configured")
        url = template.format(lat=location.lat, lon=location.lon, key=self._api_key())
        digest = hashlib.sha256(url.encode()).hexdigest()[:16]
        path = os.path.join(self.cache_dir, "meta", f"{digest}.jsonl")
        data = self._fetch(url, path, "meta")
        doc = json.loads(data)
        return PanoramaRecord(
            pano_id=doc["pano_id"],
            location=GeoPoint(doc["lat"], doc["lon"]),
            capture_date=doc["date"],
        )
