import json
from pathlib import Path

import pytest

from simple_resonance.cli import ExperimentConfig, main
from simple_resonance.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_roundtrip_through_json(tmp_path, name):
    cfg = ExperimentConfig.load(CONFIGS / name)
    again = ExperimentConfig.load(write(tmp_path, "c.json", json.dumps(cfg.to_json())))
    assert again.to_json() == cfg.to_json()


def test_ini_values_are_typed():
    cfg = ExperimentConfig.load(CONFIGS / "effpot.ini")
    assert cfg["parameters"]["eps"] == 3.2689951689427653e-43
    assert isinstance(cfg["parameters"]["K2"], int)


def test_mode_list_syntax():
    cfg = ExperimentConfig.from_mapping({"average": {"ks": "1,0; 0,1"}})
    assert cfg["average"]["ks"] == [[1, 0], [0, 1]]


@pytest.mark.parametrize(
    "text",
    [
        "[parameters]\nepsilon = 1\n",
        "[nonsense]\nx = 1\n",
        "[parameters]\neps = lots\n",
        "[run]\nmode = sloppy\n",
        "not an ini file at all",
    ],
)
def test_bad_config_exits_64(tmp_path, text):
    assert main(["average", "--config", write(tmp_path, "bad.ini", text), "--out", str(tmp_path / "o")]) == 64


def test_bad_json_config(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write(tmp_path, "bad.json", "[1, 2]"))
    assert main(["cover", "--config", write(tmp_path, "b.json", "{"), "--out", str(tmp_path)]) == 64


def test_missing_config_file(tmp_path):
    assert main(["cover", "--config", str(tmp_path / "absent.ini")]) == 64


def test_average_passes_at_small_eps(tmp_path):
    cfg = write(tmp_path, "a.ini", "[parameters]\neps = 1e-16\n[average]\nks = 1,0\n")
    assert main(["average", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "average.json").read_text())
    assert report["passed"] and report["resonant"][0]["k"] == [1, 0]
    assert (tmp_path / "o" / "average.timing.json").exists()


def test_strict_failure_is_recorded_and_exits_2(tmp_path):
    cfg = write(tmp_path, "a.ini", "[parameters]\neps = 1e-14\n[average]\nks = 1,0\n")
    assert main(["average", "--config", cfg, "--out", str(tmp_path / "s")]) == 2
    row = json.loads((tmp_path / "s" / "average.json").read_text())["resonant"][0]
    assert row["error"] == "DivisorTooSmall" and not row["passed"]


def test_explore_mode_runs_through_with_warnings(tmp_path):
    cfg = write(tmp_path, "a.ini", "[parameters]\neps = 1e-14\n[average]\nks = 1,0\n")
    assert main(["average", "--config", cfg, "--out", str(tmp_path / "x"), "--mode", "explore"]) == 2
    row = json.loads((tmp_path / "x" / "average.json").read_text())["resonant"][0]
    assert "error" not in row
    assert not row["normalForm"]["hypothesesMet"]
    assert any("divisor" in w for w in row["normalForm"]["warnings"])


def test_effpot_skips_modes_below_tau0(tmp_path):
    text = (CONFIGS / "effpot.ini").read_text().replace("[effpot]", "[effpot]\nks = 1,2; 1,-27", 1)
    if "[effpot]" not in text:
        text += "\n[effpot]\nks = 1,2; 1,-27\n"
    cfg = write(tmp_path, "e.ini", text)
    assert main(["effpot", "--config", cfg, "--out", str(tmp_path / "e")]) == 0
    report = json.loads((tmp_path / "e" / "effpot.json").read_text())
    assert [s["k"] for s in report["skipped"]] == [[1, 2]]
    assert "below tau0" in report["skipped"][0]["reason"]
    assert [r["k"] for r in report["admissible"]] == [[1, -27]]
    assert (tmp_path / "e" / "portrait_1_-27.csv").exists()


def test_generic_is_byte_reproducible(tmp_path):
    cfg = str(CONFIGS / "generic.ini")
    for out in ("a", "b"):
        assert main(["generic", "--config", cfg, "--out", str(tmp_path / out)]) == 0
    assert (tmp_path / "a" / "generic.json").read_bytes() == (tmp_path / "b" / "generic.json").read_bytes()


def test_generic_seed_changes_numbers_not_verdicts(tmp_path):
    cfg = str(CONFIGS / "generic.ini")
    main(["generic", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["generic", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
    a = json.loads((tmp_path / "a" / "generic.json").read_text())
    b = json.loads((tmp_path / "b" / "generic.json").read_text())
    assert [r["passed"] for r in a["sweep"]] == [r["passed"] for r in b["sweep"]]
    assert [r["fractionInside"] for r in a["sweep"]] != [r["fractionInside"] for r in b["sweep"]]


def test_cartan_and_cover_configs(tmp_path):
    assert main(["cartan", "--config", str(CONFIGS / "cartan.ini"), "--out", str(tmp_path / "c")]) == 0
    assert main(["cover", "--config", str(CONFIGS / "cover.ini"), "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "cover_raster.csv").read_text().startswith("y1,y2,label\n")


def test_negative_seed_rejected(tmp_path):
    assert main(["generic", "--seed", "-1", "--out", str(tmp_path)]) == 64


def test_worker_count_does_not_change_the_report(tmp_path):
    cfg = write(tmp_path, "a.ini", "[parameters]\neps = 1e-16\n[average]\nks = 1,0; 0,1; 1,1\n")
    main(["average", "--config", cfg, "--out", str(tmp_path / "one"), "--jobs", "1"])
    main(["average", "--config", cfg, "--out", str(tmp_path / "two"), "--jobs", "2"])
    assert (tmp_path / "one" / "average.json").read_bytes() == (tmp_path / "two" / "average.json").read_bytes()
