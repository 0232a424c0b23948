"""HTTP service: sessions, tile event stream, explanations, GeoJSON export.

Endpoints:
    POST /api/session                       -> {"session_id", "tile_budget"}
    GET  /api/session/{id}/tiles?count=N    -> server-sent event stream
    POST /api/session/{id}/explain          -> explanation JSON for {i, j}
    GET  /api/session/{id}/export.geojson   -> FeatureCollection
    GET  /healthz                           -> liveness probe

The tile stream is ``text/event-stream``: one ``data: <json>`` message per
tile event (pending placeholders first, then final states in spiral order),
closed by a ``{"type": "done"}`` message.
"""

from __future__ import annotations

import asyncio
import json
import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .errors import (
    SessionValidationError,
    TileNotRatedError,
    UnknownSessionError,
)
from .geogrid import SquareIndex
from .service import RatingService, session_config_from_dict

logger = logging.getLogger(__name__)


def _sse(payload: dict) -> str:
    return f"data: {json.dumps(payload, ensure_ascii=False)}\n\n"


def create_app(service: RatingService) -> FastAPI:
    """Build the FastAPI app around a wired :class:`RatingService`."""
    app = FastAPI(title="safetiles", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = service

    @app.exception_handler(SessionValidationError)
    async def _validation_error(_request: Request, exc: SessionValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "fields": exc.fields})

    @app.exception_handler(UnknownSessionError)
    async def _unknown_session(_request: Request, exc: UnknownSessionError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(TileNotRatedError)
    async def _tile_not_rated(_request: Request, exc: TileNotRatedError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/api/session")
    async def start_session(payload: dict):
        cfg = session_config_from_dict(payload)
        session_id = service.start_session(cfg)
        return {"session_id": session_id, "tile_budget": cfg.tile_budget}

    @app.get("/api/session/{session_id}/tiles")
    async def tiles(session_id: str, count: int = 9):
        # Validate before streaming: handlers cannot reach a started stream.
        session = service.get_session(session_id)
        if count < 1:
            raise SessionValidationError("count must be >= 1", ["count"])
        if count > session.cfg.tile_budget:
            raise SessionValidationError(
                f"count {count} exceeds the session tile budget of {session.cfg.tile_budget}",
                ["count"],
            )

        async def stream():
            emitted = 0
            async for event in service.expand(session_id, count):
                yield _sse(event.tile.payload(event.phase))
                if event.phase == "final":
                    emitted += 1
            yield _sse({"type": "done", "count": emitted})

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/session/{session_id}/explain")
    async def explain(session_id: str, payload: dict):
        try:
            idx = SquareIndex(int(payload["i"]), int(payload["j"]))
        except (KeyError, TypeError, ValueError):
            return JSONResponse(
                status_code=400, content={"detail": "payload must carry integer i and j"}
            )
        explanation, fetched_at = await asyncio.to_thread(
            service.explain_tile, session_id, idx
        )
        return {
            "i": explanation.square.i,
            "j": explanation.square.j,
            "rating": explanation.rating_value,
            "text": explanation.text,
            "corpus_fetched_at": fetched_at,
        }

    @app.get("/api/session/{session_id}/export.geojson")
    async def export_geojson(session_id: str):
        doc = service.export_geojson(session_id)
        return JSONResponse(content=doc, media_type="application/geo+json")

    return app
