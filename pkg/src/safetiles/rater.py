"""Rating backends: numeric response parsing, retries, and explanations.

A backend maps a rendered prompt bundle to a 0-100 integer safety rating.
``MockBackend`` is the deterministic offline backend used by tests and batch
runs; ``ChatHttpBackend`` speaks the chat-completion JSON protocol of hosted
model APIs. Both enforce an in-flight cap (default 1: the model call is the
one pipeline stage that must stay serialized).
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal

import httpx

from .errors import (
    DomainError,
    ProtocolError,
    RatingParseError,
    RatingUnavailableError,
    TransportError,
)
from .geogrid import SquareIndex
from .promptkit import PromptBundle, render_explanation_request

logger = logging.getLogger(__name__)

REMINDER_TEXT = "Respond with only a single integer between 0 and 100."

DEFAULT_API_KEY_ENV = "SAFETILES_API_KEY"

# Substring lexicons scanned against POI labels by the mock heuristic.
RISK_LEXICON = ("nightclub", "abandoned", "construction", "prison", "casino")
SAFETY_LEXICON = ("street lamp", "police", "hospital", "fire station")

# Deterministic seed-keyed jitter values; seed 0 maps to no jitter.
JITTER_TABLE = (0, 1, -1, 2, -2, 3, -3)

_STRICT_RE = re.compile(r"^[+-]?\d+$")
_NUMBER_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)(?![\w])(?!\.\d)")
_TIME_RE = re.compile(r"It is .*?(\d{1,2}):(\d{2}) (AM|PM) local time\.")


@dataclass(frozen=True)
class BackendConfig:
    """How to construct and drive a rating backend."""

    kind: str = "mock"
    base_url: str = ""
    model_name: str = "mock-rater"
    temperature: float = 0.0
    top_p: float = 1.0
    max_inflight: int = 1
    timeout_s: float = 60.0
    seed: int = 0
    api_key_env: str = DEFAULT_API_KEY_ENV

    def __post_init__(self):
        if self.kind not in ("mock", "chat_http"):
            raise DomainError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise DomainError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_inflight < 1:
            raise DomainError(f"max_inflight must be >= 1, got {self.max_inflight}")
        if self.kind == "chat_http" and not self.base_url:
            raise DomainError("chat_http backend requires base_url")


@dataclass(frozen=True)
class SafetyRating:
    """A parsed rating plus its provenance."""

    value: int
    raw_response: str
    square: SquareIndex
    persona_digest: str
    created_at: str
    backend: str

    def __post_init__(self):
        if not 0 <= self.value <= 100:
            raise DomainError(f"rating value {self.value} outside [0, 100]")


@dataclass(frozen=True)
class Explanation:
    """Prose explanation for one rated square."""

    text: str
    square: SquareIndex
    rating_value: int


@dataclass(frozen=True)
class CallContext:
    """Metadata attached to a backend call for recording and seeding."""

    square: SquareIndex = SquareIndex(0, 0)
    persona_digest: str = ""
    purpose: str = "rate"


@dataclass
class BackendCall:
    """One recorded backend invocation (mock backend keeps a full log)."""

    square: SquareIndex
    persona_digest: str
    purpose: str
    prompt_digest: str
    started_at: float
    concurrent: int


def parse_rating(raw: str) -> int:
    """Parse a backend reply into an integer rating in [0, 100].

    Strict path: the trimmed reply is a bare integer in range. Salvage path:
    the reply contains exactly one distinct standalone number in range
    (decimals are rounded half-up). Everything else fails.

    Raises:
        RatingParseError: no in-range number, out-of-range bare integer, or
            several conflicting in-range numbers.
    """
    trimmed = raw.strip()
    if _STRICT_RE.match(trimmed):
        value = int(trimmed)
        if 0 <= value <= 100:
            return value
        raise RatingParseError(f"rating {value} outside [0, 100]")
    candidates: list[int] = []
    for token in _NUMBER_RE.findall(raw):
        value = int(Decimal(token).quantize(Decimal("1"), rounding=ROUND_HALF_UP))
        if 0 <= value <= 100:
            candidates.append(value)
    if not candidates:
        raise RatingParseError(f"no rating in [0, 100] found in reply {raw!r}")
    if len(set(candidates)) > 1:
        raise RatingParseError(f"ambiguous reply with several candidate ratings: {raw!r}")
    return candidates[0]


def _extract_local_hour(user_text: str) -> int | None:
    match = _TIME_RE.search(user_text)
    if not match:
        return None
    hour, _minute, ampm = int(match.group(1)), match.group(2), match.group(3)
    hour %= 12
    if ampm == "PM":
        hour += 12
    return hour


def _extract_poi_labels(user_text: str) -> list[str]:
    labels = []
    for line in user_text.split("\n"):
        if line.startswith("- "):
            labels.append(re.sub(r" \(\d+m\)$", "", line[2:]))
    return labels


def _clamp(value: int) -> int:
    return max(0, min(100, value))


def mock_rate(
    bundle: PromptBundle,
    seed: int,
    *,
    square: SquareIndex = SquareIndex(0, 0),
    persona_digest: str = "",
    risk_lexicon: tuple[str, ...] = RISK_LEXICON,
    safety_lexicon: tuple[str, ...] = SAFETY_LEXICON,
) -> SafetyRating:
    """Deterministic heuristic rating, fully reproducible from its inputs.

    Base 70; minus 30 when the rendered local hour falls in [22, 06); minus 1
    per POI label matching the risk lexicon and plus 1 per label matching the
    safety lexicon; clamped to [0, 100]; then seed-keyed jitter in [-3, +3]
    (zero for seed 0) and a final clamp.
    """
    score = 70
    hour = _extract_local_hour(bundle.user_text)
    if hour is not None and (hour >= 22 or hour < 6):
        score -= 30
    for label in _extract_poi_labels(bundle.user_text):
        lowered = label.lower()
        if any(term in lowered for term in risk_lexicon):
            score -= 1
        if any(term in lowered for term in safety_lexicon):
            score += 1
    score = _clamp(score)
    score = _clamp(score + JITTER_TABLE[seed % len(JITTER_TABLE)])
    return SafetyRating(
        value=score,
        raw_response=str(score),
        square=square,
        persona_digest=persona_digest,
        created_at=datetime.now(timezone.utc).isoformat(),
        backend="mock",
    )


class Backend:
    """Base class: bounded in-flight calls around :meth:`_complete`."""

    name = "backend"

    def __init__(self, max_inflight: int = 1):
        self._slots = threading.BoundedSemaphore(max_inflight)

    def complete(self, messages: list[dict], context: CallContext) -> str:
        with self._slots:
            return self._complete(messages, context)

    def _complete(self, messages: list[dict], context: CallContext) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """Offline deterministic backend with a call recorder.

    The per-call jitter seed mixes the configured seed with a stable key of
    the prompt's persona line, so distinct personas shift ratings by a small
    constant while everything else stays reproducible.
    """

    name = "mock"

    def __init__(
        self,
        seed: int = 0,
        *,
        max_inflight: int = 1,
        risk_lexicon: tuple[str, ...] = RISK_LEXICON,
        safety_lexicon: tuple[str, ...] = SAFETY_LEXICON,
        latency_s: float = 0.0,
    ):
        super().__init__(max_inflight)
        self.seed = seed
        self.risk_lexicon = risk_lexicon
        self.safety_lexicon = safety_lexicon
        self.latency_s = latency_s
        self.calls: list[BackendCall] = []
        self._lock = threading.Lock()
        self._inflight = 0
        self.max_observed_inflight = 0

    @staticmethod
    def _persona_key(user_text: str) -> int:
        first_line = user_text.split("\n", 1)[0]
        return int.from_bytes(hashlib.sha256(first_line.encode("utf-8")).digest()[:4], "big")

    def _record(self, messages: list[dict], context: CallContext):
        digest = hashlib.sha256(
            "\x00".join(m.get("content", "") for m in messages).encode("utf-8")
        ).hexdigest()[:16]
        with self._lock:
            self._inflight += 1
            self.max_observed_inflight = max(self.max_observed_inflight, self._inflight)
            self.calls.append(
                BackendCall(
                    square=context.square,
                    persona_digest=context.persona_digest,
                    purpose=context.purpose,
                    prompt_digest=digest,
                    started_at=time.monotonic(),
                    concurrent=self._inflight,
                )
            )

    def _complete(self, messages: list[dict], context: CallContext) -> str:
        self._record(messages, context)
        try:
            if self.latency_s:
                time.sleep(self.latency_s)
            system_text = next(
                (m["content"] for m in messages if m.get("role") == "system"), ""
            )
            user_text = next(
                (m["content"] for m in messages if m.get("role") == "user"), ""
            )
            last_user = next(
                (m["content"] for m in reversed(messages) if m.get("role") == "user"), ""
            )
            if last_user.startswith("You rated this location"):
                return self._explanation_text(last_user)
            bundle = PromptBundle(system_text=system_text, user_text=user_text)
            call_seed = self.seed + self._persona_key(user_text)
            rating = mock_rate(
                bundle,
                call_seed,
                square=context.square,
                persona_digest=context.persona_digest,
                risk_lexicon=self.risk_lexicon,
                safety_lexicon=self.safety_lexicon,
            )
            return rating.raw_response
        finally:
            with self._lock:
                self._inflight -= 1

    @staticmethod
    def _explanation_text(request_text: str) -> str:
        match = re.search(r"You rated this location (\d+)\.", request_text)
        value = match.group(1) if match else "?"
        return (
            f"- The rating of {value} weighs the country-level advisory guidance for the area.\n"
            f"- The wikipedia crime overview indicates typical urban property crime.\n"
            f"- The numbeo crime statistics describe how residents perceive local safety.\n"
            f"- Nearby POIs (lighting, gates, open businesses) adjusted the rating slightly."
        )

    def rating_calls(self) -> list[BackendCall]:
        return [c for c in self.calls if c.purpose.startswith("rate")]


class ChatHttpBackend(Backend):
    """Chat-completion JSON protocol over HTTP.

    Sends the system/user message array with the configured sampling
    parameters; the API key is read from the configured environment
    variable at call time.
    """

    def __init__(self, cfg: BackendConfig, transport: httpx.BaseTransport | None = None):
        super().__init__(cfg.max_inflight)
        self.cfg = cfg
        self.name = cfg.model_name
        self._client = httpx.Client(timeout=cfg.timeout_s, transport=transport)

    def _complete(self, messages: list[dict], context: CallContext) -> str:
        headers = {}
        api_key = os.environ.get(self.cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
        }
        try:
            response = self._client.post(
                f"{self.cfg.base_url.rstrip('/')}/chat/completions",
                json=payload,
                headers=headers,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"backend request failed: {exc}") from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise TransportError(f"backend HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProtocolError(f"backend HTTP {response.status_code}: {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed chat completion payload: {exc}") from exc


def build_backend(cfg: BackendConfig, transport: httpx.BaseTransport | None = None) -> Backend:
    """Construct the backend named by ``cfg.kind``."""
    if cfg.kind == "mock":
        return MockBackend(seed=cfg.seed, max_inflight=cfg.max_inflight)
    return ChatHttpBackend(cfg, transport=transport)


def _messages_for(bundle: PromptBundle) -> list[dict]:
    return [
        {"role": "system", "content": bundle.system_text},
        {"role": "user", "content": bundle.user_text},
    ]


def rate(
    backend: Backend,
    bundle: PromptBundle,
    *,
    square: SquareIndex = SquareIndex(0, 0),
    persona_digest: str = "",
) -> SafetyRating:
    """Obtain a rating for a rendered bundle.

    On a parse failure the backend gets exactly one reminder retry with the
    conversation so far plus the "single integer" instruction appended.

    Raises:
        TransportError: network-level failure (callers may leave the tile
            pending and retry later).
        RatingUnavailableError: refusal or parse failure after the retry.
    """
    messages = _messages_for(bundle)
    context = CallContext(square=square, persona_digest=persona_digest, purpose="rate")
    raw = backend.complete(messages, context)
    try:
        value = parse_rating(raw)
    except RatingParseError as first_error:
        logger.info("unparseable reply for %s (%s); sending reminder", square, first_error)
        retry_messages = messages + [
            {"role": "assistant", "content": raw},
            {"role": "user", "content": REMINDER_TEXT},
        ]
        retry_context = CallContext(
            square=square, persona_digest=persona_digest, purpose="rate_retry"
        )
        raw = backend.complete(retry_messages, retry_context)
        try:
            value = parse_rating(raw)
        except RatingParseError as exc:
            raise RatingUnavailableError(
                f"no usable rating after reminder retry: {exc}"
            ) from exc
    return SafetyRating(
        value=value,
        raw_response=raw,
        square=square,
        persona_digest=persona_digest,
        created_at=datetime.now(timezone.utc).isoformat(),
        backend=backend.name,
    )


def explain(backend: Backend, bundle: PromptBundle, rating: SafetyRating) -> Explanation:
    """Ask the backend to explain a rating it previously gave.

    Replays the original conversation (system, user, the raw numeric answer)
    and appends the explanation request as a follow-up user turn.

    Raises:
        RatingUnavailableError: empty explanation text.
        TransportError / ProtocolError: as for :func:`rate`.
    """
    followup = render_explanation_request(bundle, rating.value)
    messages = _messages_for(bundle) + [
        {"role": "assistant", "content": rating.raw_response},
        {"role": "user", "content": followup},
    ]
    context = CallContext(
        square=rating.square, persona_digest=rating.persona_digest, purpose="explain"
    )
    text = backend.complete(messages, context)
    if not text or not text.strip():
        raise RatingUnavailableError("backend returned an empty explanation")
    return Explanation(text=text, square=rating.square, rating_value=rating.value)
