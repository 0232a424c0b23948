"""Prompt rendering: templates, slots, and heredoc-fenced external data.

Templates are plain UTF-8 files with ``{{slot}}`` markers. External corpus
texts land inside heredoc fences (``<<<BEGIN[tag]`` / ``>>>END[tag]`` on
their own lines) so a rating backend can cite the source tag in its
explanations. Rendering is deterministic: identical inputs produce identical
bytes, which the golden tests rely on.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

from .errors import DomainError, TemplateError
from .geogrid import GeoPoint

TRAVEL_MODES = ("solo", "group")

# Wording of the travel-mode slot; only "solo" appears in the published
# example, the group wording is this project's choice.
_TRAVEL_MODE_TEXT = {"solo": "solo", "group": "in a group"}

_SLOT_RE = re.compile(r"\{\{([a-z_]+)\}\}")

_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")

_BEGIN_RE = re.compile(r"^<<<BEGIN\[(?P<tag>[^\]]*)\]$")
_END_RE = re.compile(r"^>>>END\[(?P<tag>[^\]]*)\]$")

EXPLANATION_REQUEST = (
    "You rated this location {rating}. Explain the rating in 3-5 bullet points, "
    "referencing the tagged sources (country-level advisory, wikipedia, "
    "numbeo crime statistics) and nearby POIs where relevant."
)


@dataclass(frozen=True)
class Persona:
    """Traveler attributes that personalize every prompt."""

    descriptor: str
    age: int
    travel_mode: str = "solo"

    def __post_init__(self):
        problems = self.problems(self.descriptor, self.age, self.travel_mode)
        if problems:
            raise DomainError("invalid persona: " + "; ".join(problems.values()))

    @staticmethod
    def problems(descriptor, age, travel_mode) -> dict[str, str]:
        """Field-keyed validation problems; empty when the values are valid."""
        problems = {}
        if not isinstance(descriptor, str) or not descriptor.strip():
            problems["descriptor"] = "descriptor must be a nonempty string"
        if not isinstance(age, int) or isinstance(age, bool) or not 1 <= age <= 120:
            problems["age"] = f"age must be an integer in [1, 120], got {age!r}"
        if travel_mode not in TRAVEL_MODES:
            problems["travel_mode"] = (
                f"travel_mode must be one of {TRAVEL_MODES}, got {travel_mode!r}"
            )
        return problems


@dataclass(frozen=True)
class QueryContext:
    """Per-query context: local civil time, POI radius, and the rated point."""

    local_datetime: datetime
    radius_m: float
    point: GeoPoint

    def __post_init__(self):
        if self.radius_m <= 0:
            raise DomainError(f"radius_m must be > 0, got {self.radius_m}")


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered system + user prompt pair."""

    system_text: str
    user_text: str
    slot_report: dict[str, str] = field(default_factory=dict)

    @property
    def total_bytes(self) -> int:
        return len(self.system_text.encode("utf-8")) + len(self.user_text.encode("utf-8"))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.system_text.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.user_text.encode("utf-8"))
        return h.hexdigest()


def persona_digest(persona: Persona) -> str:
    """Stable opaque hash over exactly the personalization variables."""
    raw = f"{persona.descriptor}\x00{persona.age}\x00{persona.travel_mode}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


class TemplateStore:
    """Loaded system/user templates, immutable after construction.

    ``TemplateStore(path)`` reads ``system.txt`` and ``user.txt`` from a
    directory; ``TemplateStore.default()`` loads the packaged templates.
    """

    def __init__(self, directory: str | Path):
        directory = Path(directory)
        self.directory = directory
        self.system_template = self._load(directory / "system.txt")
        self.user_template = self._load(directory / "user.txt")
        self._digest = hashlib.sha256(
            self.system_template.encode("utf-8") + b"\x00" + self.user_template.encode("utf-8")
        ).hexdigest()[:16]

    @staticmethod
    def _load(path: Path) -> str:
        if not path.is_file():
            raise TemplateError(f"template file not found: {path}")
        text = path.read_text(encoding="utf-8")
        return text.replace("\r\n", "\n").replace("\r", "\n")

    @classmethod
    def default(cls) -> "TemplateStore":
        return cls(resources.files("safetiles").joinpath("templates"))

    def template_digest(self) -> str:
        return self._digest

    def slot_names(self) -> set[str]:
        return set(_SLOT_RE.findall(self.system_template)) | set(
            _SLOT_RE.findall(self.user_template)
        )


def _substitute(template: str, values: dict[str, str]) -> str:
    def replace(match: re.Match) -> str:
        slot = match.group(1)
        if slot not in values:
            raise TemplateError(f"unresolved template slot {{{{{slot}}}}}", slot=slot)
        return values[slot]

    return _SLOT_RE.sub(replace, template)


def format_dms(value: float, positive: str, negative: str) -> str:
    """One coordinate as degrees-minutes-seconds, e.g. 37°56'34.66"N."""
    hemi = positive if value >= 0 else negative
    v = abs(value)
    degrees = int(v)
    minutes_f = (v - degrees) * 60.0
    minutes = int(minutes_f)
    seconds = round((minutes_f - minutes) * 60.0, 2)
    if seconds >= 60.0:
        seconds -= 60.0
        minutes += 1
    if minutes >= 60:
        minutes -= 60
        degrees += 1
    return f"{degrees}°{minutes}'{seconds:.2f}\"{hemi}"


def format_geocoords(p: GeoPoint) -> str:
    """DMS pair followed by the decimal pair, as shown in the user prompt."""
    return (
        f"{format_dms(p.lat, 'N', 'S')}, {format_dms(p.lon, 'E', 'W')}"
        f" ({p.lat!r}, {p.lon!r})"
    )


def format_local_datetime(dt: datetime) -> str:
    """Civil timestamp with weekday, e.g. "Wednesday, Aug 16, 2023, 1:59 PM".

    Locale-independent on purpose: golden prompts must not depend on the
    host's LC_TIME.
    """
    hour12 = dt.hour % 12 or 12
    ampm = "AM" if dt.hour < 12 else "PM"
    return (
        f"{_WEEKDAYS[dt.weekday()]}, {_MONTHS[dt.month - 1]} {dt.day}, {dt.year},"
        f" {hour12}:{dt.minute:02d} {ampm}"
    )


def _format_radius(radius_m: float) -> str:
    return f"{radius_m:g}"


def _check_heredoc_fencing(text: str, expected_tags: tuple[str, ...]):
    open_tag: str | None = None
    seen: list[str] = []
    for line in text.split("\n"):
        begin = _BEGIN_RE.match(line)
        end = _END_RE.match(line)
        if begin:
            if open_tag is not None:
                raise TemplateError(
                    f"nested heredoc block [{begin.group('tag')}] inside [{open_tag}]"
                )
            open_tag = begin.group("tag")
        elif end:
            if open_tag != end.group("tag"):
                raise TemplateError(
                    f"heredoc END[{end.group('tag')}] without matching BEGIN"
                )
            seen.append(open_tag)
            open_tag = None
    if open_tag is not None:
        raise TemplateError(f"heredoc block [{open_tag}] never closed")
    if tuple(seen) != expected_tags:
        raise TemplateError(
            f"expected heredoc blocks {list(expected_tags)}, rendered {seen}"
        )


def render_system(persona: Persona, entry, store: TemplateStore | None = None) -> str:
    """Render the system prompt for a persona and a corpus entry.

    The output carries, in order: the instruction header with the travel
    mode inlined, the safety and scale definitions, the risky-area list, and
    three heredoc blocks wrapping the corpus texts verbatim.

    Raises:
        TemplateError: unresolved slot, or broken heredoc fencing (e.g. a
            corpus text smuggling delimiter lines past ingestion).
    """
    store = store or TemplateStore.default()
    values = {
        "travelmode": _TRAVEL_MODE_TEXT[persona.travel_mode],
        "country": entry.country,
        "city": entry.city,
        "advisory": entry.advisory_text,
        "crimeincountry": entry.wikipedia_text,
        "cityadvisory": entry.numbeo_text,
    }
    text = _substitute(store.system_template, values)
    _check_heredoc_fencing(
        text, ("country-level advisory", "wikipedia", "numbeo crime statistics")
    )
    return text


def render_user(
    persona: Persona,
    ctx: QueryContext,
    place,
    poi_text: str,
    store: TemplateStore | None = None,
) -> str:
    """Render the user prompt: persona, time, location block, POIs, and the
    closing instruction with the lowest administrative area inlined.

    Empty location fields are kept as empty values after their labels, as in
    the published example prompt.
    """
    store = store or TemplateStore.default()
    values = {
        "gender": persona.descriptor,
        "age": str(persona.age),
        "travelmode": _TRAVEL_MODE_TEXT[persona.travel_mode],
        "datetime": format_local_datetime(ctx.local_datetime),
        "geocoords": format_geocoords(ctx.point),
        "road": place.road,
        "neighborhood": place.neighborhood,
        "city_district": place.city_district,
        "city": place.city,
        "address": place.admin_address,
        "radius": _format_radius(ctx.radius_m),
        "pois": poi_text,
        "lowest_admin_area": place.lowest_admin_area,
    }
    return _substitute(store.user_template, values)


def render_bundle(
    persona: Persona,
    ctx: QueryContext,
    place,
    poi_text: str,
    entry,
    store: TemplateStore | None = None,
) -> PromptBundle:
    """Render the full system + user pair and account for every slot used."""
    store = store or TemplateStore.default()
    system_text = render_system(persona, entry, store)
    user_text = render_user(persona, ctx, place, poi_text, store)
    slot_report = {
        "gender": persona.descriptor,
        "age": str(persona.age),
        "travelmode": _TRAVEL_MODE_TEXT[persona.travel_mode],
        "datetime": format_local_datetime(ctx.local_datetime),
        "geocoords": format_geocoords(ctx.point),
        "road": place.road,
        "neighborhood": place.neighborhood,
        "city_district": place.city_district,
        "city": place.city,
        "address": place.admin_address,
        "radius": _format_radius(ctx.radius_m),
        "pois": poi_text,
        "country": entry.country,
        "advisory": entry.advisory_text,
        "crimeincountry": entry.wikipedia_text,
        "cityadvisory": entry.numbeo_text,
        "lowest_admin_area": place.lowest_admin_area,
    }
    return PromptBundle(system_text=system_text, user_text=user_text, slot_report=slot_report)


def render_explanation_request(bundle: PromptBundle, rating: int) -> str:
    """Follow-up user turn asking the backend to explain a rating it gave.

    Raises:
        DomainError: if ``rating`` is outside [0, 100].
    """
    if not isinstance(rating, int) or isinstance(rating, bool) or not 0 <= rating <= 100:
        raise DomainError(f"rating must be an integer in [0, 100], got {rating!r}")
    return EXPLANATION_REQUEST.format(rating=rating)
