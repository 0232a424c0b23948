import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from safetiles.cli import PREVIEW_MARKER, main
from safetiles.promptkit import TemplateStore

from conftest import FIXTURES_DIR, GOLDEN_DIR, PIRAEUS_LAT, PIRAEUS_LON

CONFIG = str(FIXTURES_DIR / "config.yaml")


@pytest.fixture()
def runner():
    return CliRunner()


def default_templates_dir() -> Path:
    return Path(str(TemplateStore.default().directory))


# ---------------------------------------------------------------------------
# corpus subcommands
# ---------------------------------------------------------------------------

def test_corpus_ingest_reports_counts(runner):
    result = runner.invoke(
        main, ["corpus", "ingest", str(FIXTURES_DIR / "corpus" / "manifest.yaml")]
    )
    assert result.exit_code == 0, result.output
    assert "3 countries" in result.output


def test_corpus_ingest_missing_file_fails(runner, tmp_path):
    manifest = tmp_path / "manifest.yaml"
    manifest.write_text(
        "countries:\n  - name: X\n    advisory: missing.txt\n    wikipedia: missing.txt\n",
        encoding="utf-8",
    )
    result = runner.invoke(main, ["corpus", "ingest", str(manifest)])
    assert result.exit_code == 1
    assert "missing" in result.output


def test_corpus_ls_lists_entries_and_aliases(runner):
    result = runner.invoke(main, ["corpus", "ls", "--config", CONFIG])
    assert result.exit_code == 0, result.output
    assert "Greece" in result.output
    assert "  Athens" in result.output
    assert "Germany (advisory from Austria)" in result.output


# ---------------------------------------------------------------------------
# prompt preview
# ---------------------------------------------------------------------------

def preview_args(**overrides):
    args = {
        "--config": CONFIG,
        "--lat": str(PIRAEUS_LAT),
        "--lon": str(PIRAEUS_LON),
        "--descriptor": "Man",
        "--age": "35",
        "--travel-mode": "solo",
        "--datetime": "2023-08-16T13:59:00",
    }
    args.update(overrides)
    flat = ["prompt", "preview"]
    for key, value in args.items():
        flat += [key, value]
    return flat


def test_prompt_preview_matches_golden_bytes(runner):
    result = runner.invoke(main, preview_args())
    assert result.exit_code == 0, result.output
    system = (GOLDEN_DIR / "system_prompt.txt").read_text(encoding="utf-8")
    user = (GOLDEN_DIR / "user_prompt.txt").read_text(encoding="utf-8")
    assert result.output == system + PREVIEW_MARKER + "\n" + user


def test_prompt_preview_unresolved_slot_names_slot(runner, tmp_path):
    broken = tmp_path / "templates"
    shutil.copytree(default_templates_dir(), broken)
    (broken / "user.txt").write_text("{{no_such_slot}}\n", encoding="utf-8")
    result = runner.invoke(
        main, preview_args(**{"--set": f"templates_dir={broken}"})
    )
    assert result.exit_code == 1
    assert "no_such_slot" in result.output


def test_prompt_preview_usage_error_is_exit_2(runner):
    result = runner.invoke(main, ["prompt", "preview", "--config", CONFIG])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def test_render_writes_geojson(runner, tmp_path):
    out = tmp_path / "map.geojson"
    result = runner.invoke(
        main,
        [
            "render", "--config", CONFIG,
            "--lat", str(PIRAEUS_LAT), "--lon", str(PIRAEUS_LON),
            "--count", "9", "--datetime", "2023-08-16T13:59:00",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert len(doc["features"]) == 9
    assert all(f["properties"]["status"] == "rated" for f in doc["features"])
    assert "rated=9" in result.output


def test_render_unreachable_geodata_exits_nonzero(runner, tmp_path):
    empty_replay = tmp_path / "empty"
    (empty_replay / "reverse").mkdir(parents=True)
    (empty_replay / "pois").mkdir()
    out = tmp_path / "map.geojson"
    result = runner.invoke(
        main,
        [
            "render", "--config", CONFIG,
            "--set", f"geodata.replay_dir={empty_replay}",
            "--lat", str(PIRAEUS_LAT), "--lon", str(PIRAEUS_LON),
            "--count", "4", "--out", str(out),
        ],
    )
    assert result.exit_code == 1
    assert "unreachable" in result.output


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------

def _write_regress_setup(tmp_path: Path, include_broken: bool = False) -> Path:
    variant_a = tmp_path / "variants" / "default"
    shutil.copytree(default_templates_dir(), variant_a)
    variant_b = tmp_path / "variants" / "terse"
    shutil.copytree(default_templates_dir(), variant_b)
    user_b = (variant_b / "user.txt").read_text(encoding="utf-8")
    (variant_b / "user.txt").write_text(
        user_b.replace(
            "Please respond with a single number without any additional text or explanation.",
            "Reply with one integer only.",
        ),
        encoding="utf-8",
    )
    variants = ["variants/default", "variants/terse"]
    if include_broken:
        variant_c = tmp_path / "variants" / "broken"
        shutil.copytree(default_templates_dir(), variant_c)
        (variant_c / "system.txt").write_text("{{typo_slot}}\n", encoding="utf-8")
        variants.append("variants/broken")

    manifest = tmp_path / "regress.yaml"
    manifest.write_text(
        json.dumps(
            {
                "template_variants": variants,
                "fixtures": [
                    {
                        "name": "piraeus-day",
                        "persona": {"descriptor": "Man", "age": 35, "travel_mode": "solo"},
                        "lat": PIRAEUS_LAT,
                        "lon": PIRAEUS_LON,
                        "datetime": "2023-08-16T13:59:00",
                    },
                    {
                        "name": "piraeus-midnight",
                        "persona": {"descriptor": "Man", "age": 35, "travel_mode": "solo"},
                        "lat": PIRAEUS_LAT,
                        "lon": PIRAEUS_LON,
                        "datetime": "2023-08-17T00:05:00",
                    },
                ],
                "repeats": 2,
                "backend": {"kind": "mock", "seed": 0},
            }
        ),
        encoding="utf-8",
    )
    return manifest


def test_regress_produces_deterministic_report(runner, tmp_path):
    manifest = _write_regress_setup(tmp_path)

    def run(out_name: str) -> str:
        out = tmp_path / out_name
        result = runner.invoke(
            main, ["regress", "--config", CONFIG, "--manifest", str(manifest), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        return out.read_text(encoding="utf-8")

    first = run("report-a.txt")
    second = run("report-b.txt")
    assert first == second
    assert "scale-utilization span" in first
    assert "pairwise variant deltas per fixture" in first

    sidecar = json.loads((tmp_path / "report-a.txt.json").read_text(encoding="utf-8"))
    for variant, record in sidecar["variants"].items():
        assert record["stats"]["n"] == 4  # 2 fixtures x 2 repeats
        # Identical prompts per fixture under the mock: day vs midnight span is 30.
        assert record["stats"]["utilization_span"] == 30.0


def test_regress_identical_variants_have_zero_deltas(runner, tmp_path):
    manifest = _write_regress_setup(tmp_path)
    spec = json.loads(manifest.read_text(encoding="utf-8"))
    spec["template_variants"] = ["variants/default", "variants/default2"]
    shutil.copytree(tmp_path / "variants" / "default", tmp_path / "variants" / "default2")
    manifest.write_text(json.dumps(spec), encoding="utf-8")
    out = tmp_path / "report.txt"
    result = runner.invoke(
        main, ["regress", "--config", CONFIG, "--manifest", str(manifest), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    sidecar = json.loads((tmp_path / "report.txt.json").read_text(encoding="utf-8"))
    for pairs in sidecar["pairwise_deltas"].values():
        assert all(delta == 0 for delta in pairs.values())


def test_regress_flags_invalid_variant_and_continues(runner, tmp_path):
    manifest = _write_regress_setup(tmp_path, include_broken=True)
    out = tmp_path / "report.txt"
    result = runner.invoke(
        main, ["regress", "--config", CONFIG, "--manifest", str(manifest), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = out.read_text(encoding="utf-8")
    assert "INVALID" in report
    assert "typo_slot" in report
    sidecar = json.loads((tmp_path / "report.txt.json").read_text(encoding="utf-8"))
    assert sidecar["variants"]["variants/broken"]["invalid"]
    assert sidecar["variants"]["variants/default"]["stats"]["n"] == 4


def test_regress_usage_error_without_variants(runner, tmp_path):
    manifest = tmp_path / "regress.yaml"
    manifest.write_text(json.dumps({"template_variants": [], "fixtures": []}), encoding="utf-8")
    out = tmp_path / "report.txt"
    result = runner.invoke(
        main, ["regress", "--config", CONFIG, "--manifest", str(manifest), "--out", str(out)]
    )
    assert result.exit_code == 2
