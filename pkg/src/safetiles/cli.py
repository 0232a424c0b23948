"""Operator CLI: batch rendering, prompt preview, regression runs, corpus tools.

Exit codes: 0 ok, 1 hard failure, 2 usage error.
"""

from __future__ import annotations

import asyncio
import json
import logging
import statistics
import sys
from datetime import datetime
from pathlib import Path

import click
import yaml

from . import corpus as corpus_mod
from .config import AppConfig, build_geodata_clients, build_service, load_config
from .errors import SafetilesError, TemplateError
from .geogrid import GeoPoint, GridSpec
from .promptkit import Persona, QueryContext, TemplateStore, render_bundle
from .rater import BackendConfig, build_backend, rate
from .service import (
    STATUS_GEODATA_UNAVAILABLE,
    STATUS_RATED,
    SessionConfig,
)
from .geodata import format_pois

logger = logging.getLogger(__name__)

PREVIEW_MARKER = "----- user prompt -----"


def _parse_sets(values: tuple[str, ...]) -> dict[str, str]:
    overrides = {}
    for item in values:
        if "=" not in item:
            raise click.UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = value
    return overrides


def _app_config(config: str | None, sets: tuple[str, ...]) -> AppConfig:
    try:
        return load_config(config, _parse_sets(sets))
    except (OSError, yaml.YAMLError, SafetilesError, TypeError) as exc:
        raise click.ClickException(f"bad config: {exc}") from exc


def config_options(fn):
    fn = click.option(
        "--set", "sets", multiple=True, metavar="KEY=VALUE",
        help="Override a config value by dotted key, e.g. backend.seed=7.",
    )(fn)
    fn = click.option(
        "--config", type=click.Path(exists=True, dir_okay=False), default=None,
        help="YAML config file (endpoints, backend, corpus manifest, caps).",
    )(fn)
    return fn


def persona_options(fn):
    fn = click.option("--travel-mode", type=click.Choice(["solo", "group"]), default="solo")(fn)
    fn = click.option("--age", type=int, default=35, show_default=True)(fn)
    fn = click.option("--descriptor", default="Man", show_default=True,
                      help="Persona descriptor, e.g. 'Woman' or 'Blind man with a cane'.")(fn)
    return fn


def _parse_datetime(value: str | None) -> datetime | None:
    if not value:
        return None
    try:
        return datetime.fromisoformat(value)
    except ValueError as exc:
        raise click.UsageError(f"--datetime must be ISO format: {exc}") from exc


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def main(verbose: bool):
    """Per-tile travel-safety ratings: render maps, preview prompts, regress variants."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@config_options
@click.option("--host", default=None, help="Bind host (overrides config).")
@click.option("--port", type=int, default=None, help="Bind port (overrides config).")
def serve(config, sets, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .server import create_app

    cfg = _app_config(config, sets)
    try:
        service = build_service(cfg)
    except SafetilesError as exc:
        raise click.ClickException(str(exc)) from exc
    uvicorn.run(create_app(service), host=host or cfg.host, port=port or cfg.port)


@main.command()
@config_options
@persona_options
@click.option("--lat", type=float, required=True, help="Origin latitude.")
@click.option("--lon", type=float, required=True, help="Origin longitude.")
@click.option("--count", type=int, default=9, show_default=True, help="Tiles to rate.")
@click.option("--side", "side_m", type=float, default=75.0, show_default=True)
@click.option("--datetime", "datetime_str", default=None,
              help="Local civil time override (ISO), e.g. 2023-08-16T13:59:00.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="GeoJSON output path.")
def render(config, sets, descriptor, age, travel_mode, lat, lon, count, side_m, datetime_str, out):
    """Rate a tile map headlessly and write it as GeoJSON."""
    cfg = _app_config(config, sets)
    try:
        service = build_service(cfg)
        session_cfg = SessionConfig(
            persona=Persona(descriptor, age, travel_mode),
            grid=GridSpec(GeoPoint(lat, lon), side_m),
            tile_budget=max(count, 1),
            radius_m=cfg.geodata.radius_m,
            local_datetime_override=_parse_datetime(datetime_str),
        )
        session_id = service.start_session(session_cfg)

        async def run():
            async for _event in service.expand(session_id, count):
                pass

        asyncio.run(run())
        doc = service.export_geojson(session_id)
    except SafetilesError as exc:
        raise click.ClickException(str(exc)) from exc

    statuses: dict[str, int] = {}
    for feature in doc["features"]:
        status = feature["properties"]["status"]
        statuses[status] = statuses.get(status, 0) + 1
    Path(out).write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                         encoding="utf-8")
    summary = ", ".join(f"{k}={v}" for k, v in sorted(statuses.items()))
    click.echo(f"wrote {len(doc['features'])} tiles to {out} ({summary})")
    if statuses.get(STATUS_GEODATA_UNAVAILABLE, 0) == len(doc["features"]):
        raise click.ClickException("geodata upstream unreachable for every tile")


@main.group()
def prompt():
    """Prompt inspection tools."""


@prompt.command("preview")
@config_options
@persona_options
@click.option("--lat", type=float, required=True)
@click.option("--lon", type=float, required=True)
@click.option("--datetime", "datetime_str", required=True,
              help="Local civil time (ISO), e.g. 2023-08-16T13:59:00.")
@click.option("--radius", "radius_m", type=float, default=None,
              help="POI radius in meters (defaults to config geodata.radius_m).")
@click.option("--country", default=None, help="Corpus country key (default: from geocoder).")
@click.option("--city", default=None, help="Corpus city key (default: from geocoder).")
def prompt_preview(config, sets, descriptor, age, travel_mode, lat, lon, datetime_str,
                   radius_m, country, city):
    """Print the exact system and user prompt a rating call would send."""
    cfg = _app_config(config, sets)
    try:
        store = corpus_mod.ingest(cfg.corpus_manifest)
        templates = (
            TemplateStore(cfg.templates_dir) if cfg.templates_dir else TemplateStore.default()
        )
        geocoder, poi_client = build_geodata_clients(cfg.geodata)
        point = GeoPoint(lat, lon)
        place = geocoder.lookup(point)
        radius = radius_m or cfg.geodata.radius_m
        pois = poi_client.pois_within(point, radius)
        entry = store.lookup(country or place.country, city if city is not None else place.city)
        ctx = QueryContext(
            local_datetime=_parse_datetime(datetime_str), radius_m=radius, point=point
        )
        bundle = render_bundle(
            Persona(descriptor, age, travel_mode), ctx, place, format_pois(pois, radius),
            entry, templates,
        )
    except TemplateError as exc:
        raise click.ClickException(
            f"template failed to render ({exc.slot or 'fencing'}): {exc}"
        ) from exc
    except SafetilesError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(bundle.system_text, nl=False)
    click.echo(PREVIEW_MARKER)
    click.echo(bundle.user_text, nl=False)


@main.command()
@config_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Regression manifest (variants, fixtures, backend, repeats).")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Report path; a .json sidecar lands next to it.")
def regress(config, sets, manifest, out):
    """Rate every fixture under every template variant and report the spread."""
    cfg = _app_config(config, sets)
    manifest_path = Path(manifest)
    spec = yaml.safe_load(manifest_path.read_text(encoding="utf-8")) or {}
    variants = [str(v) for v in spec.get("template_variants") or []]
    fixtures = spec.get("fixtures") or []
    repeats = int(spec.get("repeats", 1))
    if not variants or not fixtures or repeats < 1:
        raise click.UsageError("manifest needs >=1 template variant, >=1 fixture, repeats >= 1")

    try:
        store = corpus_mod.ingest(cfg.corpus_manifest)
        geocoder, poi_client = build_geodata_clients(cfg.geodata)
        backend_cfg = BackendConfig(**(spec.get("backend") or {}))
        backend = build_backend(backend_cfg)
    except (SafetilesError, TypeError) as exc:
        raise click.ClickException(str(exc)) from exc

    report = _run_regression(
        variants, fixtures, repeats, manifest_path.parent,
        store=store, geocoder=geocoder, poi_client=poi_client,
        backend=backend, default_radius=cfg.geodata.radius_m,
    )

    out_path = Path(out)
    out_path.write_text(_format_regression_report(report), encoding="utf-8")
    sidecar = out_path.with_suffix(out_path.suffix + ".json")
    sidecar.write_text(json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                       encoding="utf-8")
    click.echo(f"wrote report to {out_path} (sidecar {sidecar})")


def _run_regression(variants, fixtures, repeats, base_dir, *, store, geocoder, poi_client,
                    backend, default_radius) -> dict:
    fixture_inputs = []
    for fx in fixtures:
        point = GeoPoint(float(fx["lat"]), float(fx["lon"]))
        place = geocoder.lookup(point)
        radius = float(fx.get("radius_m", default_radius))
        pois = poi_client.pois_within(point, radius)
        persona_raw = fx.get("persona") or {}
        entry = store.lookup(
            fx.get("country", place.country), fx.get("city", place.city)
        )
        fixture_inputs.append(
            {
                "name": str(fx.get("name") or f"{point.lat:.4f},{point.lon:.4f}"),
                "persona": Persona(
                    persona_raw.get("descriptor", "Man"),
                    int(persona_raw.get("age", 35)),
                    persona_raw.get("travel_mode", "solo"),
                ),
                "ctx": QueryContext(
                    local_datetime=datetime.fromisoformat(str(fx["datetime"])),
                    radius_m=radius,
                    point=point,
                ),
                "place": place,
                "poi_text": format_pois(pois, radius),
                "entry": entry,
            }
        )

    results: dict[str, dict] = {}
    for variant in variants:
        variant_dir = Path(variant)
        if not variant_dir.is_absolute():
            variant_dir = base_dir / variant_dir
        record: dict = {"fixtures": {}, "invalid": None}
        try:
            templates = TemplateStore(variant_dir)
            for fx in fixture_inputs:
                values = []
                for _ in range(repeats):
                    bundle = render_bundle(
                        fx["persona"], fx["ctx"], fx["place"], fx["poi_text"],
                        fx["entry"], templates,
                    )
                    rating = rate(backend, bundle)
                    values.append(rating.value)
                record["fixtures"][fx["name"]] = values
        except (SafetilesError, OSError) as exc:
            record = {"fixtures": {}, "invalid": str(exc)}
        results[variant] = record

    for variant, record in results.items():
        if record["invalid"]:
            continue
        all_values = [v for values in record["fixtures"].values() for v in values]
        fixture_means = {
            name: statistics.fmean(values) for name, values in record["fixtures"].items()
        }
        record["stats"] = {
            "n": len(all_values),
            "min": min(all_values),
            "max": max(all_values),
            "mean": round(statistics.fmean(all_values), 3),
            "stddev": round(statistics.pstdev(all_values), 3) if len(all_values) > 1 else 0.0,
            "utilization_span": round(max(fixture_means.values()) - min(fixture_means.values()), 3),
        }

    deltas: dict[str, dict[str, float]] = {}
    valid = [v for v in variants if not results[v]["invalid"]]
    for a_index, a in enumerate(valid):
        for b in valid[a_index + 1:]:
            for fx in fixture_inputs:
                name = fx["name"]
                mean_a = statistics.fmean(results[a]["fixtures"][name])
                mean_b = statistics.fmean(results[b]["fixtures"][name])
                deltas.setdefault(name, {})[f"{a} vs {b}"] = round(mean_a - mean_b, 3)

    return {
        "variants": results,
        "pairwise_deltas": deltas,
        "repeats": repeats,
        "backend": backend.name,
    }


def _format_regression_report(report: dict) -> str:
    lines = ["prompt variant regression report", "=" * 32, ""]
    for variant, record in report["variants"].items():
        lines.append(f"variant {variant}")
        if record["invalid"]:
            lines.append(f"  INVALID: {record['invalid']}")
            lines.append("")
            continue
        stats = record["stats"]
        lines.append(
            f"  ratings: n={stats['n']} min={stats['min']} max={stats['max']}"
            f" mean={stats['mean']} stddev={stats['stddev']}"
        )
        lines.append(f"  scale-utilization span (max-min across fixtures): {stats['utilization_span']}")
        for name, values in record["fixtures"].items():
            lines.append(f"  {name}: {values}")
        lines.append("")
    lines.append("pairwise variant deltas per fixture")
    if not report["pairwise_deltas"]:
        lines.append("  (fewer than two valid variants)")
    for name, pairs in report["pairwise_deltas"].items():
        for pair, delta in pairs.items():
            lines.append(f"  {name}: {pair}: {delta:+g}")
    lines.append("")
    return "\n".join(lines)


@main.group()
def corpus():
    """Corpus ingestion and inspection."""


@corpus.command("ingest")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
def corpus_ingest(manifest):
    """Validate and load a corpus manifest, reporting what it contains."""
    try:
        store = corpus_mod.ingest(manifest)
    except SafetilesError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        f"ingested {len(store.countries())} countries"
        f" ({store.size} country/city entries, {len(store.aliases())} aliases)"
    )


@corpus.command("ls")
@config_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Corpus manifest (defaults to the config's corpus_manifest).")
def corpus_ls(config, sets, manifest):
    """List corpus countries, cities, and advisory aliases."""
    if manifest is None:
        cfg = _app_config(config, sets)
        manifest = cfg.corpus_manifest
        if not manifest:
            raise click.UsageError("give --manifest or a --config with corpus_manifest")
    try:
        store = corpus_mod.ingest(manifest)
    except SafetilesError as exc:
        raise click.ClickException(str(exc)) from exc
    aliases = store.aliases()
    for country in store.countries():
        suffix = f" (advisory from {aliases[country]})" if country in aliases else ""
        click.echo(f"{country}{suffix}")
        for city in store.cities(country):
            click.echo(f"  {city}")


if __name__ == "__main__":
    sys.exit(main())
