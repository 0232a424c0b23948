"""Pre-scraped safety corpus: ingestion and lookup.

The corpus is a directory tree with one directory per country holding
``advisory.txt`` and ``wikipedia.txt``, plus ``cities/<city>/numbeo.txt`` for
each city with crowdsourced crime statistics. A YAML manifest lists the
countries, cities, and advisory aliases (country A served country B's
advisory, e.g. when a government publishes no advice for its own country).

Ingested text is kept byte-identical to the source files apart from newline
unification to LF. Text containing heredoc delimiter lines is rejected at
ingest so prompt assembly can always fence corpus text safely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .errors import CorpusNotFoundError, IngestError

logger = logging.getLogger(__name__)

# Lines starting with either prefix would collide with prompt heredoc fences.
DELIMITER_PREFIXES = ("<<<BEGIN[", ">>>END[")


@dataclass(frozen=True)
class CorpusEntry:
    """Safety texts served for one (country, city) query.

    ``city`` is the requested city name; ``numbeo_text`` is empty when the
    city has no crowdsourced statistics (country-level fallback).
    """

    country: str
    city: str
    advisory_text: str
    wikipedia_text: str
    numbeo_text: str
    fetched_at: datetime


@dataclass
class _CountryDocs:
    advisory_text: str
    wikipedia_text: str
    cities: dict[str, str] = field(default_factory=dict)
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


class CorpusStore:
    """Immutable lookup table of ingested corpus texts."""

    def __init__(self, entries: dict[str, _CountryDocs], aliases: dict[str, str]):
        self._entries = entries
        self._aliases = aliases

    @property
    def size(self) -> int:
        """Number of (country, city) pairs, counting city-less countries once."""
        return sum(max(1, len(docs.cities)) for docs in self._entries.values())

    def countries(self) -> list[str]:
        return sorted(self._entries)

    def cities(self, country: str) -> list[str]:
        docs = self._entries.get(country)
        return sorted(docs.cities) if docs else []

    def aliases(self) -> dict[str, str]:
        return dict(self._aliases)

    def lookup(self, country: str, city: str = "") -> CorpusEntry:
        """Corpus texts for a (country, city) pair.

        Prefers the exact city match and falls back to the country-level
        entry with empty ``numbeo_text`` for unknown cities. Advisory aliases
        substitute ``advisory_text`` only; all other texts stay the
        requested country's own.

        Raises:
            CorpusNotFoundError: if the country is not in the corpus.
        """
        docs = self._entries.get(country)
        if docs is None:
            raise CorpusNotFoundError(f"no corpus entry for country {country!r}")
        advisory = docs.advisory_text
        alias_target = self._aliases.get(country)
        if alias_target is not None:
            advisory = self._entries[alias_target].advisory_text
        return CorpusEntry(
            country=country,
            city=city,
            advisory_text=advisory,
            wikipedia_text=docs.wikipedia_text,
            numbeo_text=docs.cities.get(city, ""),
            fetched_at=docs.fetched_at,
        )


def _read_source(path: Path, source: str) -> str:
    if not path.is_file():
        raise IngestError(f"missing corpus file: {path}")
    text = path.read_text(encoding="utf-8")
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    for line in text.split("\n"):
        if line.startswith(DELIMITER_PREFIXES):
            raise IngestError(
                f"heredoc delimiter collision in source {source!r} ({path}): {line.strip()!r}"
            )
    return text


def _parse_fetched_at(raw, path: Path) -> datetime:
    if raw is None:
        return datetime.fromtimestamp(path.stat().st_mtime, tz=timezone.utc)
    if isinstance(raw, datetime):
        return raw
    try:
        return datetime.fromisoformat(str(raw))
    except ValueError as exc:
        raise IngestError(f"bad fetched_at {raw!r} in manifest: {exc}") from exc


def ingest(manifest_path: str | Path) -> CorpusStore:
    """Load the corpus described by a manifest file.

    Manifest format (paths relative to the manifest's directory)::

        countries:
          - name: Greece
            advisory: Greece/advisory.txt
            wikipedia: Greece/wikipedia.txt
            fetched_at: "2024-05-01T00:00:00+00:00"   # optional
            cities:
              - name: Athens
                numbeo: Greece/cities/Athens/numbeo.txt
        aliases:
          - from: Germany
            to: Austria

    A country with an alias may omit its own ``advisory`` file. Ingestion is
    idempotent: re-running on the same manifest yields an equal store.

    Raises:
        IngestError: missing/unreadable files, delimiter collisions, unknown
            alias targets, malformed manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestError(f"manifest not found: {manifest_path}")
    try:
        manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise IngestError(f"manifest does not parse: {exc}") from exc
    if not isinstance(manifest, dict) or "countries" not in manifest:
        raise IngestError(f"manifest {manifest_path} has no 'countries' list")
    root = manifest_path.parent

    aliases: dict[str, str] = {}
    for alias in manifest.get("aliases") or []:
        try:
            aliases[str(alias["from"])] = str(alias["to"])
        except (TypeError, KeyError) as exc:
            raise IngestError(f"malformed alias entry {alias!r}") from exc

    entries: dict[str, _CountryDocs] = {}
    for spec in manifest["countries"]:
        name = str(spec.get("name") or "").strip()
        if not name:
            raise IngestError(f"country entry without a name: {spec!r}")
        advisory_rel = spec.get("advisory")
        if advisory_rel is None and name not in aliases:
            raise IngestError(f"country {name!r} has no advisory file and no alias")
        advisory = (
            _read_source(root / advisory_rel, "country-level advisory") if advisory_rel else ""
        )
        wikipedia_rel = spec.get("wikipedia")
        if wikipedia_rel is None:
            raise IngestError(f"country {name!r} has no wikipedia file")
        wikipedia = _read_source(root / wikipedia_rel, "wikipedia")
        cities: dict[str, str] = {}
        for city_spec in spec.get("cities") or []:
            city_name = str(city_spec.get("name") or "").strip()
            if not city_name:
                raise IngestError(f"city entry without a name under {name!r}")
            cities[city_name] = _read_source(
                root / city_spec["numbeo"], "numbeo crime statistics"
            )
        entries[name] = _CountryDocs(
            advisory_text=advisory,
            wikipedia_text=wikipedia,
            cities=cities,
            fetched_at=_parse_fetched_at(spec.get("fetched_at"), manifest_path),
        )

    for source, target in aliases.items():
        if target not in entries:
            raise IngestError(f"alias target {target!r} (for {source!r}) not in manifest")

    logger.info("ingested corpus: %d countries, %d aliases", len(entries), len(aliases))
    return CorpusStore(entries, aliases)
