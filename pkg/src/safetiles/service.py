"""Per-tile rating pipeline and session orchestration.

``RatingService`` owns the composition geodata -> corpus -> prompt ->
backend for each tile of a session's grid. Tiles are always *emitted* in
spiral order and the origin tile's backend call is always the first backend
call issued on a cold cache; pipeline stages for different tiles may overlap,
with the backend's own in-flight cap keeping model calls serialized.

An ``expand(count)`` call streams coverage of the first ``count`` spiral
positions from the origin. Repeating a call re-serves the same tiles from
the cache; asking for a larger count grows the map outward.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime

from . import rater
from .cache import TileCache, cache_key, explanation_key
from .corpus import CorpusStore
from .errors import (
    CorpusNotFoundError,
    DomainError,
    ProtocolError,
    PromptTooLargeError,
    RatingUnavailableError,
    SessionValidationError,
    TemplateError,
    TileNotRatedError,
    TransportError,
    UnknownSessionError,
)
from .geodata import PoiClient, ReverseGeocoder, format_pois
from .geogrid import (
    DEFAULT_SIDE_M,
    GeoPoint,
    GridSpec,
    RgbColor,
    Square,
    SquareIndex,
    color_for_rating,
    spiral_order,
    square_for_index,
)
from .promptkit import (
    Persona,
    PromptBundle,
    QueryContext,
    TemplateStore,
    persona_digest,
    render_bundle,
)
from .rater import Backend, Explanation, SafetyRating

logger = logging.getLogger(__name__)

DEFAULT_TILE_BUDGET_CAP = 441
DEFAULT_PROMPT_BYTES_CAP = 96 * 1024
DEFAULT_SESSION_TTL_S = 3600.0

STATUS_PENDING = "pending"
STATUS_RATED = "rated"
STATUS_GEODATA_UNAVAILABLE = "geodata_unavailable"
STATUS_RATING_UNAVAILABLE = "rating_unavailable"


@dataclass(frozen=True)
class SessionConfig:
    """Everything a rating session needs: who, where, when, and how much."""

    persona: Persona
    grid: GridSpec
    tile_budget: int = DEFAULT_TILE_BUDGET_CAP
    radius_m: float = DEFAULT_SIDE_M
    local_datetime_override: datetime | None = None

    def digest(self) -> str:
        raw = json.dumps(
            {
                "persona": [self.persona.descriptor, self.persona.age, self.persona.travel_mode],
                "grid": [self.grid.origin.lat, self.grid.origin.lon, self.grid.side_m],
                "tile_budget": self.tile_budget,
                "radius_m": self.radius_m,
                "dt": self.local_datetime_override.isoformat()
                if self.local_datetime_override
                else None,
            },
            sort_keys=True,
        )
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


@dataclass
class RatedTile:
    """One square's outcome: geometry plus rating state."""

    square: Square
    status: str = STATUS_PENDING
    rating: SafetyRating | None = None
    color: RgbColor | None = None
    detail: str = ""

    def payload(self, phase: str) -> dict:
        """JSON-ready stream message for this tile."""
        corners = [{"lat": c.lat, "lon": c.lon} for c in self.square.corners]
        return {
            "type": "tile",
            "phase": phase,
            "i": self.square.index.i,
            "j": self.square.index.j,
            "center": {"lat": self.square.center.lat, "lon": self.square.center.lon},
            "corners": corners,
            "status": self.status,
            "rating": self.rating.value if self.rating else None,
            "color": self.color.to_hex() if self.color else None,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class TileEvent:
    """One stream message: a pending placeholder or a final tile state."""

    phase: str  # "pending" | "final"
    tile: RatedTile


@dataclass
class Session:
    id: str
    cfg: SessionConfig
    effective_dt: datetime
    created_at: float
    tiles: dict[tuple[int, int], RatedTile] = field(default_factory=dict)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    high_water: int = 0


def session_config_from_dict(raw: dict, *, default_side_m: float = DEFAULT_SIDE_M,
                             default_radius_m: float | None = None) -> SessionConfig:
    """Build a validated :class:`SessionConfig` from request-shaped data.

    Raises:
        SessionValidationError: naming every offending field.
    """
    problems: dict[str, str] = {}
    persona_raw = raw.get("persona") or {}
    problems.update(
        Persona.problems(
            persona_raw.get("descriptor"),
            persona_raw.get("age"),
            persona_raw.get("travel_mode", "solo"),
        )
    )
    origin_raw = raw.get("origin") or {}
    grid = None
    try:
        origin = GeoPoint(float(origin_raw.get("lat")), float(origin_raw.get("lon")))
        grid = GridSpec(origin, float(raw.get("side_m", default_side_m)))
    except (TypeError, ValueError) as exc:
        problems["origin"] = f"origin must carry numeric lat/lon: {exc}"
    except DomainError as exc:
        problems["origin"] = str(exc)
    tile_budget = raw.get("tile_budget", DEFAULT_TILE_BUDGET_CAP)
    if not isinstance(tile_budget, int) or tile_budget < 1:
        problems["tile_budget"] = f"tile_budget must be a positive integer, got {tile_budget!r}"
    radius_m = raw.get("radius_m", default_radius_m or raw.get("side_m", default_side_m))
    try:
        radius_m = float(radius_m)
        if radius_m <= 0:
            problems["radius_m"] = f"radius_m must be > 0, got {radius_m}"
    except (TypeError, ValueError):
        problems["radius_m"] = f"radius_m must be numeric, got {radius_m!r}"
    override = None
    if raw.get("local_datetime"):
        try:
            override = datetime.fromisoformat(str(raw["local_datetime"]))
        except ValueError as exc:
            problems["local_datetime"] = f"not an ISO timestamp: {exc}"
    if problems:
        raise SessionValidationError(
            "invalid session config: " + "; ".join(problems.values()), sorted(problems)
        )
    persona = Persona(
        persona_raw["descriptor"], persona_raw["age"], persona_raw.get("travel_mode", "solo")
    )
    return SessionConfig(
        persona=persona,
        grid=grid,
        tile_budget=tile_budget,
        radius_m=radius_m,
        local_datetime_override=override,
    )


class RatingService:
    """Session-scoped tile rating pipeline over pluggable components."""

    def __init__(
        self,
        *,
        corpus_store: CorpusStore,
        templates: TemplateStore,
        geocoder: ReverseGeocoder,
        poi_client: PoiClient,
        backend: Backend,
        cache: TileCache | None = None,
        tile_budget_cap: int = DEFAULT_TILE_BUDGET_CAP,
        prompt_bytes_cap: int = DEFAULT_PROMPT_BYTES_CAP,
        session_ttl_s: float = DEFAULT_SESSION_TTL_S,
        pipeline_width: int = 8,
        clockwise_spiral: bool = False,
        clock=datetime.now,
    ):
        self.corpus_store = corpus_store
        self.templates = templates
        self.geocoder = geocoder
        self.poi_client = poi_client
        self.backend = backend
        self.cache = cache if cache is not None else TileCache()
        self.tile_budget_cap = tile_budget_cap
        self.prompt_bytes_cap = prompt_bytes_cap
        self.session_ttl_s = session_ttl_s
        self.pipeline_width = pipeline_width
        self.clockwise_spiral = clockwise_spiral
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._by_digest: dict[str, str] = {}

    # ------------------------------------------------------------------
    # Sessions
    # ------------------------------------------------------------------

    def start_session(self, cfg: SessionConfig) -> str:
        """Allocate (or reuse) a session for this config.

        Identical configs within the TTL return the same session id.

        Raises:
            SessionValidationError: invalid persona/grid/budget.
        """
        problems = Persona.problems(cfg.persona.descriptor, cfg.persona.age, cfg.persona.travel_mode)
        if cfg.tile_budget > self.tile_budget_cap:
            problems["tile_budget"] = (
                f"tile_budget {cfg.tile_budget} exceeds the cap of {self.tile_budget_cap}"
            )
        if problems:
            raise SessionValidationError(
                "invalid session config: " + "; ".join(problems.values()), sorted(problems)
            )
        digest = cfg.digest()
        existing_id = self._by_digest.get(digest)
        if existing_id:
            existing = self._sessions.get(existing_id)
            if existing and time.monotonic() - existing.created_at < self.session_ttl_s:
                return existing_id
        session_id = uuid.uuid4().hex
        effective_dt = cfg.local_datetime_override or self.clock()
        self._sessions[session_id] = Session(
            id=session_id, cfg=cfg, effective_dt=effective_dt, created_at=time.monotonic()
        )
        self._by_digest[digest] = session_id
        logger.info("session %s started (persona digest %s)", session_id[:8], persona_digest(cfg.persona))
        return session_id

    def get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"unknown session {session_id!r}")
        return session

    # ------------------------------------------------------------------
    # Expansion
    # ------------------------------------------------------------------

    async def expand(self, session_id: str, count: int):
        """Stream tiles for the first ``count`` spiral positions.

        Yields pending placeholders for every requested square immediately,
        then final tile states strictly in spiral order. Upstream failures
        degrade the affected tile's status and never abort the stream.
        """
        session = self.get_session(session_id)
        if count < 1:
            raise SessionValidationError("count must be >= 1", ["count"])
        if count > session.cfg.tile_budget:
            raise SessionValidationError(
                f"count {count} exceeds the session tile budget of {session.cfg.tile_budget}",
                ["count"],
            )
        async with session.lock:
            order = spiral_order(count, clockwise=self.clockwise_spiral)
            squares = [square_for_index(session.cfg.grid, idx) for idx in order]
            for square in squares:
                key = (square.index.i, square.index.j)
                if key not in session.tiles:
                    session.tiles[key] = RatedTile(square=square)
                yield TileEvent("pending", session.tiles[key])
            origin_gate = asyncio.Event()
            stage_slots = asyncio.Semaphore(self.pipeline_width)
            tasks = [
                asyncio.create_task(
                    self._tile_task(session, square, k == 0, origin_gate, stage_slots)
                )
                for k, square in enumerate(squares)
            ]
            try:
                for square, task in zip(squares, tasks):
                    try:
                        tile = await task
                    except asyncio.CancelledError:
                        raise
                    except Exception as exc:
                        logger.exception("tile pipeline failed for %s", square.index)
                        tile = RatedTile(
                            square=square,
                            status=STATUS_RATING_UNAVAILABLE,
                            detail=f"internal error: {exc}",
                        )
                    session.tiles[(square.index.i, square.index.j)] = tile
                    yield TileEvent("final", tile)
            finally:
                for task in tasks:
                    task.cancel()
            session.high_water = max(session.high_water, count)

    async def _tile_task(
        self,
        session: Session,
        square: Square,
        is_origin: bool,
        origin_gate: asyncio.Event,
        stage_slots: asyncio.Semaphore,
    ) -> RatedTile:
        # The gate is released in a finally so a crashed or skipped origin
        # tile can never starve the other tiles' backend dispatch.
        try:
            return await self._rate_tile(session, square, is_origin, origin_gate, stage_slots)
        finally:
            if is_origin:
                origin_gate.set()

    def _rating_key(self, session: Session, square: Square) -> str:
        return cache_key(
            square,
            session.cfg.grid.side_m,
            persona_digest(session.cfg.persona),
            session.effective_dt.hour,
            self.templates.template_digest(),
        )

    async def _rate_tile(
        self,
        session: Session,
        square: Square,
        is_origin: bool,
        origin_gate: asyncio.Event,
        stage_slots: asyncio.Semaphore,
    ) -> RatedTile:
        key = self._rating_key(session, square)
        cached = self.cache.get(key)
        if cached is not None:
            rating = SafetyRating(
                value=cached["rating"]["value"],
                raw_response=cached["rating"]["raw_response"],
                square=square.index,
                persona_digest=cached["rating"]["persona_digest"],
                created_at=cached["rating"]["created_at"],
                backend=cached["rating"]["backend"],
            )
            return RatedTile(
                square=square,
                status=STATUS_RATED,
                rating=rating,
                color=color_for_rating(rating.value),
            )

        try:
            # The slot bounds only the geodata stage; waiting for the origin
            # gate below must never pin a slot, or the origin could starve.
            async with stage_slots:
                place = await asyncio.to_thread(self.geocoder.lookup, square.center)
                pois = await asyncio.to_thread(
                    self.poi_client.pois_within, square.center, session.cfg.radius_m
                )
        except (TransportError, ProtocolError) as exc:
            logger.warning("geodata unavailable for %s: %s", square.index, exc)
            return RatedTile(square=square, status=STATUS_GEODATA_UNAVAILABLE, detail=str(exc))

        try:
            entry = self.corpus_store.lookup(place.country, place.city)
        except CorpusNotFoundError as exc:
            return RatedTile(square=square, status=STATUS_RATING_UNAVAILABLE, detail=str(exc))

        ctx = QueryContext(
            local_datetime=session.effective_dt,
            radius_m=session.cfg.radius_m,
            point=square.center,
        )
        try:
            bundle = render_bundle(
                session.cfg.persona,
                ctx,
                place,
                format_pois(pois, session.cfg.radius_m),
                entry,
                self.templates,
            )
        except TemplateError as exc:
            return RatedTile(square=square, status=STATUS_RATING_UNAVAILABLE, detail=str(exc))
        if bundle.total_bytes > self.prompt_bytes_cap:
            error = PromptTooLargeError(
                f"rendered prompt is {bundle.total_bytes} bytes,"
                f" cap is {self.prompt_bytes_cap}"
            )
            return RatedTile(square=square, status=STATUS_RATING_UNAVAILABLE, detail=str(error))

        if not is_origin:
            await origin_gate.wait()
        try:
            rating = await asyncio.to_thread(
                rater.rate,
                self.backend,
                bundle,
                square=square.index,
                persona_digest=persona_digest(session.cfg.persona),
            )
        except TransportError as exc:
            # Left pending: a later expand may retry the backend.
            logger.warning("backend transport failure for %s: %s", square.index, exc)
            return RatedTile(square=square, status=STATUS_PENDING, detail=str(exc))
        except (RatingUnavailableError, ProtocolError) as exc:
            return RatedTile(square=square, status=STATUS_RATING_UNAVAILABLE, detail=str(exc))

        self.cache.put(
            key,
            {
                "rating": {
                    "value": rating.value,
                    "raw_response": rating.raw_response,
                    "square": [square.index.i, square.index.j],
                    "persona_digest": rating.persona_digest,
                    "created_at": rating.created_at,
                    "backend": rating.backend,
                },
                "bundle": {
                    "system_text": bundle.system_text,
                    "user_text": bundle.user_text,
                },
                "corpus_fetched_at": entry.fetched_at.isoformat(),
            },
        )
        return RatedTile(
            square=square,
            status=STATUS_RATED,
            rating=rating,
            color=color_for_rating(rating.value),
        )

    # ------------------------------------------------------------------
    # Explanations and export
    # ------------------------------------------------------------------

    def explain_tile(self, session_id: str, idx: SquareIndex) -> tuple[Explanation, str]:
        """Explanation for a rated tile, plus the corpus freshness timestamp.

        Raises:
            UnknownSessionError: no such session.
            TileNotRatedError: the tile has no rating in this session.
        """
        session = self.get_session(session_id)
        tile = session.tiles.get((idx.i, idx.j))
        if tile is None or tile.status != STATUS_RATED or tile.rating is None:
            raise TileNotRatedError(f"square ({idx.i}, {idx.j}) has no rating in this session")
        key = self._rating_key(session, tile.square)
        record = self.cache.get(key)
        if record is None:
            raise TileNotRatedError(f"no cached context for square ({idx.i}, {idx.j})")
        fetched_at = record.get("corpus_fetched_at", "")
        exp_key = explanation_key(key)
        cached = self.cache.get(exp_key)
        if cached is not None:
            return (
                Explanation(text=cached["text"], square=idx, rating_value=cached["rating_value"]),
                fetched_at,
            )
        bundle = PromptBundle(
            system_text=record["bundle"]["system_text"],
            user_text=record["bundle"]["user_text"],
        )
        explanation = rater.explain(self.backend, bundle, tile.rating)
        self.cache.put(
            exp_key, {"text": explanation.text, "rating_value": explanation.rating_value}
        )
        return explanation, fetched_at

    def export_geojson(self, session_id: str) -> dict:
        """GeoJSON FeatureCollection of this session's tiles (spiral order)."""
        session = self.get_session(session_id)
        features = []
        generated_at = session.effective_dt.isoformat()
        for tile in session.tiles.values():
            sw, se, ne, nw = tile.square.corners
            ring = [[p.lon, p.lat] for p in (sw, se, ne, nw, sw)]
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                    "properties": {
                        "i": tile.square.index.i,
                        "j": tile.square.index.j,
                        "rating": tile.rating.value if tile.rating else None,
                        "status": tile.status,
                        "color": tile.color.to_hex() if tile.color else None,
                        "persona": session.cfg.persona.descriptor,
                        "generated_at": generated_at,
                    },
                }
            )
        return {"type": "FeatureCollection", "features": features}
