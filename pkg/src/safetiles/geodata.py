"""Wire clients for reverse geocoding and POI queries, plus POI formatting.

Both clients speak the public JSON shapes of the well-known OpenStreetMap
services (Nominatim-style ``/reverse``, Overpass-style ``/api/interpreter``)
against configurable base URLs. Tests and offline runs replace the transport
with :class:`ReplayTransport`, which serves canned captures from a directory
so nothing touches the network.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import unquote_plus

import httpx

from .errors import DomainError, ProtocolError, TransportError
from .geogrid import GeoPoint, haversine_m

logger = logging.getLogger(__name__)

DEFAULT_RADIUS_M = 75.0
DEFAULT_USER_AGENT = "safetiles/0.1 (tile safety ratings)"

# Tag keys whose bare value opens an unnamed feature's label ("street lamp",
# "motorway"); every other tag renders as "key: value".
PRIMARY_VALUE_KEYS = ("highway", "amenity")

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class PlaceInfo:
    """Reverse-geocoded address fields; missing upstream keys become ""."""

    road: str
    neighborhood: str
    city_district: str
    city: str
    admin_address: str
    country: str

    @property
    def lowest_admin_area(self) -> str:
        for value in (self.neighborhood, self.city_district, self.city, self.admin_address):
            if value:
                return value
        return ""


@dataclass(frozen=True)
class Poi:
    """One map feature near the rated point.

    Point features carry a whole-meter distance; area features (ways,
    relations) carry none and are listed after the points.
    """

    label: str
    distance_m: int | None = None
    is_area: bool = False

    def __post_init__(self):
        if self.is_area != (self.distance_m is None):
            raise DomainError("distance_m must be present exactly when the POI is a point")
        if self.distance_m is not None and self.distance_m < 0:
            raise DomainError(f"distance_m must be >= 0, got {self.distance_m}")


@dataclass(frozen=True)
class RetryPolicy:
    """Attempt budget with exponential backoff (0.5 s doubling by default)."""

    attempts: int = 3
    backoff_s: float = 0.5
    multiplier: float = 2.0


class _HttpEndpoint:
    """Shared request machinery: retries, backoff, and an in-flight cap."""

    def __init__(
        self,
        base_url: str,
        *,
        user_agent: str = DEFAULT_USER_AGENT,
        timeout_s: float = 20.0,
        retry: RetryPolicy = RetryPolicy(),
        max_inflight: int = 2,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_inflight)
        self._client = httpx.Client(
            timeout=timeout_s,
            headers={"User-Agent": user_agent},
            transport=transport,
        )

    def close(self):
        self._client.close()

    def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        delay = self.retry.backoff_s
        last_error: Exception | None = None
        for attempt in range(1, self.retry.attempts + 1):
            if attempt > 1:
                self._sleep(delay)
                delay *= self.retry.multiplier
            try:
                with self._slots:
                    response = self._client.request(method, url, **kwargs)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("attempt %d/%d failed for %s: %s", attempt, self.retry.attempts, url, exc)
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {response.status_code} from {url}")
                logger.warning(
                    "attempt %d/%d got HTTP %d from %s", attempt, self.retry.attempts,
                    response.status_code, url,
                )
                continue
            if response.status_code != 200:
                raise ProtocolError(f"HTTP {response.status_code} from {url}")
            return response
        raise TransportError(f"{url} unreachable after {self.retry.attempts} attempts: {last_error}")

    def _json(self, response: httpx.Response) -> dict | list:
        try:
            return response.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProtocolError(f"non-JSON body from {self.base_url}: {exc}") from exc


class ReverseGeocoder(_HttpEndpoint):
    """Nominatim-compatible reverse geocoding client."""

    def __init__(self, base_url: str, *, max_inflight: int = 2, **kwargs):
        super().__init__(base_url, max_inflight=max_inflight, **kwargs)

    def lookup(self, p: GeoPoint) -> PlaceInfo:
        """Resolve a point to its address fields.

        Raises:
            TransportError: network failure/timeout after the retry budget.
            ProtocolError: malformed or empty address payload.
        """
        response = self._request(
            "GET",
            f"{self.base_url}/reverse",
            params={"lat": p.lat, "lon": p.lon, "format": "jsonv2"},
        )
        data = self._json(response)
        if not isinstance(data, dict) or "error" in data:
            raise ProtocolError(f"reverse geocoding failed: {data!r}")
        return place_from_payload(data)


def place_from_payload(data: dict) -> PlaceInfo:
    """Map a reverse-geocoding JSON payload onto :class:`PlaceInfo`."""
    address = data.get("address")
    if not isinstance(address, dict) or not address:
        raise ProtocolError("reverse geocoding payload has an empty address object")

    def first(*keys: str) -> str:
        for key in keys:
            value = address.get(key)
            if value:
                return str(value)
        return ""

    country = first("country")
    if not country:
        raise ProtocolError("reverse geocoding payload has no country")
    return PlaceInfo(
        road=first("road"),
        neighborhood=first("neighbourhood", "neighborhood", "suburb"),
        city_district=first("city_district", "borough", "district"),
        city=first("city", "town", "village", "municipality"),
        admin_address=str(data.get("display_name") or ""),
        country=country,
    )


class PoiClient(_HttpEndpoint):
    """Overpass-compatible points-of-interest client."""

    def __init__(self, base_url: str, *, max_inflight: int = 4, **kwargs):
        super().__init__(base_url, max_inflight=max_inflight, **kwargs)

    def pois_within(self, p: GeoPoint, radius_m: float) -> list[Poi]:
        """Tagged features within ``radius_m`` meters of ``p``.

        Point features come first, sorted by rounded distance (ties broken
        by label); area features follow in response order.

        Raises:
            DomainError: radius_m <= 0.
            TransportError / ProtocolError: as for :class:`ReverseGeocoder`.
        """
        if radius_m <= 0:
            raise DomainError(f"radius_m must be > 0, got {radius_m}")
        query = (
            "[out:json][timeout:25];("
            f"node(around:{radius_m:g},{p.lat},{p.lon});"
            f"way(around:{radius_m:g},{p.lat},{p.lon});"
            f"relation(around:{radius_m:g},{p.lat},{p.lon});"
            ");out tags center;"
        )
        response = self._request(
            "POST", f"{self.base_url}/api/interpreter", data={"data": query}
        )
        data = self._json(response)
        if not isinstance(data, dict) or "elements" not in data:
            raise ProtocolError("POI payload has no elements array")
        return pois_from_payload(data, p)


def pois_from_payload(data: dict, p: GeoPoint) -> list[Poi]:
    """Turn an Overpass-style JSON payload into an ordered POI list."""
    points: list[Poi] = []
    areas: list[Poi] = []
    for element in data.get("elements", []):
        tags = element.get("tags") or {}
        if not tags:
            continue
        label = label_for_tags(tags)
        if not label:
            continue
        if element.get("type") == "node" and "lat" in element and "lon" in element:
            distance = haversine_m(p, GeoPoint(element["lat"], element["lon"]))
            points.append(Poi(label=label, distance_m=int(math.floor(distance + 0.5))))
        else:
            areas.append(Poi(label=label, is_area=True))
    points.sort(key=lambda poi: (poi.distance_m, poi.label))
    return points + areas


def label_for_tags(tags: dict, primary_keys: tuple[str, ...] = PRIMARY_VALUE_KEYS) -> str:
    """Human-readable label for a tagged feature.

    Named features open with the name; unnamed ones open with the humanized
    value of the first primary key present ("street lamp" for
    highway=street_lamp). Remaining tags follow as "key: value" pairs in key
    order.
    """
    tags = {str(k): str(v) for k, v in tags.items()}
    parts: list[str] = []
    consumed: set[str] = set()
    name = tags.get("name")
    if name:
        parts.append(name)
        consumed.add("name")
    else:
        for key in primary_keys:
            if key in tags:
                parts.append(tags[key].replace("_", " "))
                consumed.add(key)
                break
    for key in sorted(tags):
        if key in consumed or key == "name":
            continue
        parts.append(f"{key}: {tags[key]}")
    return ", ".join(parts)


def format_pois(pois: list[Poi], radius_m: float = DEFAULT_RADIUS_M) -> str:
    """POI block exactly as embedded in the user prompt.

    One ``- <label> (<distance>m)`` line per point feature, then, if any
    area features exist, a blank-line-separated block headed
    ``Within a <radius>m radius, there are also:`` with ``- <label>`` lines.
    Empty input renders as an empty string.
    """
    point_lines = [f"- {poi.label} ({poi.distance_m}m)" for poi in pois if not poi.is_area]
    area_lines = [f"- {poi.label}" for poi in pois if poi.is_area]
    blocks = []
    if point_lines:
        blocks.append("\n".join(point_lines))
    if area_lines:
        radius = f"{radius_m:g}"
        blocks.append(f"Within a {radius}m radius, there are also:\n" + "\n".join(area_lines))
    return "\n\n".join(blocks)


class ReplayTransport(httpx.BaseTransport):
    """Serves canned geodata captures from a directory instead of the network.

    Layout::

        <root>/reverse/<lat>,<lon>.json      # key rounded to 5 decimals
        <root>/reverse/default.json          # fallback for any coordinates
        <root>/pois/<lat>,<lon>.json
        <root>/pois/default.json

    Each file holds either the raw upstream JSON payload, or an envelope
    ``{"status": <int>, "json": <payload>}`` for failure injection.
    """

    _AROUND_RE = re.compile(r"around:[0-9.]+,(-?[0-9.]+),(-?[0-9.]+)")

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.requests: list[str] = []

    @staticmethod
    def key(lat: float, lon: float) -> str:
        return f"{lat:.5f},{lon:.5f}"

    def _capture(self, kind: str, lat: float, lon: float) -> httpx.Response:
        directory = self.root / kind
        candidates = [directory / f"{self.key(lat, lon)}.json", directory / "default.json"]
        for path in candidates:
            if path.is_file():
                payload = json.loads(path.read_text(encoding="utf-8"))
                if isinstance(payload, dict) and "status" in payload:
                    return httpx.Response(payload["status"], json=payload.get("json", {}))
                return httpx.Response(200, json=payload)
        return httpx.Response(404, json={"error": f"no capture for {kind}/{self.key(lat, lon)}"})

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        path = request.url.path
        self.requests.append(f"{request.method} {path}")
        if path.endswith("/reverse"):
            params = dict(request.url.params)
            return self._capture("reverse", float(params["lat"]), float(params["lon"]))
        if path.endswith("/api/interpreter"):
            # Form-encoded body: decode before matching the around() clause.
            body = unquote_plus(request.content.decode("utf-8", errors="replace"))
            match = self._AROUND_RE.search(body)
            if not match:
                return httpx.Response(400, json={"error": "no around() clause in query"})
            return self._capture("pois", float(match.group(1)), float(match.group(2)))
        return httpx.Response(404, json={"error": f"unknown path {path}"})


def reverse_geocode(endpoint: str, p: GeoPoint, **kwargs) -> PlaceInfo:
    """One-shot reverse geocode against ``endpoint`` (convenience wrapper)."""
    client = ReverseGeocoder(endpoint, **kwargs)
    try:
        return client.lookup(p)
    finally:
        client.close()


def pois_within(endpoint: str, p: GeoPoint, radius_m: float, **kwargs) -> list[Poi]:
    """One-shot POI query against ``endpoint`` (convenience wrapper)."""
    client = PoiClient(endpoint, **kwargs)
    try:
        return client.pois_within(p, radius_m)
    finally:
        client.close()
