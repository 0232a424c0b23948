import sys
from datetime import datetime
from pathlib import Path

import pytest

# Make the shared oracles importable from every test module.
sys.path.insert(0, str(Path(__file__).parent))

FIXTURES_DIR = Path(__file__).parent / "fixtures"
CORPUS_MANIFEST = FIXTURES_DIR / "corpus" / "manifest.yaml"
GEODATA_DIR = FIXTURES_DIR / "geodata"
GOLDEN_DIR = FIXTURES_DIR / "golden"

# The canonical test location and civil time (a Wednesday afternoon).
PIRAEUS_LAT = 37.94295978729652
PIRAEUS_LON = 23.67040930647023
FIXTURE_DT = datetime.fromisoformat("2023-08-16T13:59:00")


@pytest.fixture(scope="session")
def corpus_store():
    from safetiles.corpus import ingest

    return ingest(CORPUS_MANIFEST)


@pytest.fixture(scope="session")
def greece_entry(corpus_store):
    return corpus_store.lookup("Greece", "Athens")


@pytest.fixture()
def replay_geocoder():
    from safetiles.geodata import ReplayTransport, ReverseGeocoder

    client = ReverseGeocoder("http://geo.test", transport=ReplayTransport(GEODATA_DIR))
    yield client
    client.close()


@pytest.fixture()
def replay_poi_client():
    from safetiles.geodata import PoiClient, ReplayTransport

    client = PoiClient("http://poi.test", transport=ReplayTransport(GEODATA_DIR))
    yield client
    client.close()


@pytest.fixture(scope="session")
def piraeus_point():
    from safetiles.geogrid import GeoPoint

    return GeoPoint(PIRAEUS_LAT, PIRAEUS_LON)


@pytest.fixture(scope="session")
def piraeus_place():
    from safetiles.geodata import PlaceInfo

    return PlaceInfo(
        road="Filonos",
        neighborhood="",
        city_district="3rd District of Piraeus",
        city="Athens",
        admin_address=(
            "Filonos, 3rd District of Piraeus, Municipality of Piraeus,"
            " Regional Unit of Piraeus, Attica, Greece"
        ),
        country="Greece",
    )


@pytest.fixture(scope="session")
def piraeus_poi_text():
    from safetiles.geodata import PoiClient, ReplayTransport
    from safetiles.geogrid import GeoPoint

    client = PoiClient("http://poi.test", transport=ReplayTransport(GEODATA_DIR))
    try:
        pois = client.pois_within(GeoPoint(PIRAEUS_LAT, PIRAEUS_LON), 75)
    finally:
        client.close()
    from safetiles.geodata import format_pois

    return format_pois(pois, 75)


@pytest.fixture()
def fixture_bundle(piraeus_point, piraeus_place, piraeus_poi_text, greece_entry):
    from safetiles.promptkit import Persona, QueryContext, render_bundle

    return render_bundle(
        Persona("Man", 35, "solo"),
        QueryContext(local_datetime=FIXTURE_DT, radius_m=75, point=piraeus_point),
        piraeus_place,
        piraeus_poi_text,
        greece_entry,
    )
