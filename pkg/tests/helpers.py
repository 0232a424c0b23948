"""Shared builders for service-level and acceptance tests."""

from __future__ import annotations

import asyncio
from pathlib import Path

from safetiles.cache import TileCache
from safetiles.corpus import ingest
from safetiles.geodata import PoiClient, ReplayTransport, RetryPolicy, ReverseGeocoder
from safetiles.geogrid import GeoPoint, GridSpec
from safetiles.promptkit import Persona, TemplateStore
from safetiles.rater import MockBackend
from safetiles.service import RatingService, SessionConfig

from conftest import CORPUS_MANIFEST, FIXTURE_DT, GEODATA_DIR, PIRAEUS_LAT, PIRAEUS_LON


def make_service(
    *,
    cache_path: Path | None = None,
    replay_dir: Path = GEODATA_DIR,
    backend=None,
    prompt_bytes_cap: int | None = None,
    retry: RetryPolicy = RetryPolicy(attempts=2, backoff_s=0.0),
) -> RatingService:
    transport = ReplayTransport(replay_dir)
    no_sleep = lambda _s: None  # noqa: E731 - keep retries instant in tests
    service = RatingService(
        corpus_store=ingest(CORPUS_MANIFEST),
        templates=TemplateStore.default(),
        geocoder=ReverseGeocoder(
            "http://geo.test", transport=transport, retry=retry, sleep=no_sleep
        ),
        poi_client=PoiClient(
            "http://poi.test", transport=transport, retry=retry, sleep=no_sleep
        ),
        backend=backend if backend is not None else MockBackend(seed=0),
        cache=TileCache(cache_path),
    )
    if prompt_bytes_cap is not None:
        service.prompt_bytes_cap = prompt_bytes_cap
    return service


def make_session_cfg(
    descriptor: str = "Man",
    age: int = 35,
    travel_mode: str = "solo",
    tile_budget: int = 441,
    radius_m: float = 75.0,
) -> SessionConfig:
    return SessionConfig(
        persona=Persona(descriptor, age, travel_mode),
        grid=GridSpec(GeoPoint(PIRAEUS_LAT, PIRAEUS_LON), 75.0),
        tile_budget=tile_budget,
        radius_m=radius_m,
        local_datetime_override=FIXTURE_DT,
    )


def expand_all(service: RatingService, session_id: str, count: int):
    """Run an expansion to completion and return its events."""

    async def run():
        return [event async for event in service.expand(session_id, count)]

    return asyncio.run(run())


def final_tiles(events):
    return [event.tile for event in events if event.phase == "final"]
