"""Application configuration: YAML file, dotted-key overrides, wiring.

The same config drives the HTTP server and the CLI tools. ``geodata.mode``
selects live HTTP clients or the canned-capture replay transport, so batch
runs and tests work fully offline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import corpus
from .cache import TileCache
from .errors import IngestError
from .geodata import (
    DEFAULT_RADIUS_M,
    DEFAULT_USER_AGENT,
    PoiClient,
    ReplayTransport,
    RetryPolicy,
    ReverseGeocoder,
)
from .promptkit import TemplateStore
from .rater import BackendConfig, build_backend
from .service import (
    DEFAULT_PROMPT_BYTES_CAP,
    DEFAULT_TILE_BUDGET_CAP,
    RatingService,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeodataConfig:
    mode: str = "http"  # "http" | "replay"
    nominatim_url: str = "https://nominatim.openstreetmap.org"
    overpass_url: str = "https://overpass-api.de"
    user_agent: str = DEFAULT_USER_AGENT
    replay_dir: str = ""
    radius_m: float = DEFAULT_RADIUS_M
    retry_attempts: int = 3
    retry_backoff_s: float = 0.5
    geocoder_max_inflight: int = 2
    poi_max_inflight: int = 4


@dataclass(frozen=True)
class AppConfig:
    corpus_manifest: str = ""
    templates_dir: str = ""
    cache_path: str = ""
    host: str = "127.0.0.1"
    port: int = 8000
    tile_budget_cap: int = DEFAULT_TILE_BUDGET_CAP
    prompt_bytes_cap: int = DEFAULT_PROMPT_BYTES_CAP
    clockwise_spiral: bool = False
    backend: BackendConfig = field(default_factory=BackendConfig)
    geodata: GeodataConfig = field(default_factory=GeodataConfig)


def _apply_overrides(data: dict, overrides: dict[str, str]) -> dict:
    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> AppConfig:
    """Load the app config from YAML, then apply ``--set``-style overrides.

    Relative file paths in the config resolve against the config file's
    directory.
    """
    data: dict = {}
    base = Path.cwd()
    if path:
        path = Path(path)
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        base = path.parent
    if overrides:
        data = _apply_overrides(data, overrides)

    def resolve(value: str) -> str:
        return str((base / value).resolve()) if value and not Path(value).is_absolute() else value

    backend_raw = data.get("backend") or {}
    backend = BackendConfig(**backend_raw)
    geodata_raw = dict(data.get("geodata") or {})
    if "replay_dir" in geodata_raw and geodata_raw["replay_dir"]:
        geodata_raw["replay_dir"] = resolve(str(geodata_raw["replay_dir"]))
    geodata = GeodataConfig(**geodata_raw)
    server_raw = data.get("server") or {}
    limits_raw = data.get("limits") or {}
    return AppConfig(
        corpus_manifest=resolve(str(data.get("corpus_manifest") or "")),
        templates_dir=resolve(str(data.get("templates_dir") or "")),
        cache_path=resolve(str(data.get("cache_path") or "")),
        host=server_raw.get("host", "127.0.0.1"),
        port=int(server_raw.get("port", 8000)),
        tile_budget_cap=int(limits_raw.get("tile_budget_cap", DEFAULT_TILE_BUDGET_CAP)),
        prompt_bytes_cap=int(limits_raw.get("prompt_bytes_cap", DEFAULT_PROMPT_BYTES_CAP)),
        clockwise_spiral=bool(data.get("clockwise_spiral", False)),
        backend=backend,
        geodata=geodata,
    )


def build_geodata_clients(cfg: GeodataConfig) -> tuple[ReverseGeocoder, PoiClient]:
    """Construct the geocoder/POI clients, live or replaying captures."""
    transport = None
    if cfg.mode == "replay":
        if not cfg.replay_dir:
            raise IngestError("geodata.mode is 'replay' but geodata.replay_dir is unset")
        transport = ReplayTransport(cfg.replay_dir)
    retry = RetryPolicy(attempts=cfg.retry_attempts, backoff_s=cfg.retry_backoff_s)
    geocoder = ReverseGeocoder(
        cfg.nominatim_url,
        user_agent=cfg.user_agent,
        retry=retry,
        max_inflight=cfg.geocoder_max_inflight,
        transport=transport,
    )
    poi_client = PoiClient(
        cfg.overpass_url,
        user_agent=cfg.user_agent,
        retry=retry,
        max_inflight=cfg.poi_max_inflight,
        transport=transport,
    )
    return geocoder, poi_client


def build_service(cfg: AppConfig) -> RatingService:
    """Wire a :class:`RatingService` from an app config.

    Raises:
        IngestError: missing corpus manifest or broken corpus files.
    """
    if not cfg.corpus_manifest:
        raise IngestError("config has no corpus_manifest")
    store = corpus.ingest(cfg.corpus_manifest)
    templates = TemplateStore(cfg.templates_dir) if cfg.templates_dir else TemplateStore.default()
    geocoder, poi_client = build_geodata_clients(cfg.geodata)
    backend = build_backend(cfg.backend)
    cache = TileCache(cfg.cache_path or None)
    return RatingService(
        corpus_store=store,
        templates=templates,
        geocoder=geocoder,
        poi_client=poi_client,
        backend=backend,
        cache=cache,
        tile_budget_cap=cfg.tile_budget_cap,
        prompt_bytes_cap=cfg.prompt_bytes_cap,
        clockwise_spiral=cfg.clockwise_spiral,
    )
