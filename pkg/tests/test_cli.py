import json
import subprocess
import sys

import pytest

from condinf.cli.config import SCHEMAS, load_config, validate
from condinf.cli.main import EXIT_CONFIG, EXIT_OK, run
from condinf.exceptions import ConfigError

SMALL = {
    "sufficiency-scan": {"family": "gamma", "statistic": "log", "params": {"shape": 2.0, "scale": 1.0},
                         "sweep": "shape", "grid_points": 5},
    "rao-blackwell": {"family": "gamma", "params": {"shape": 2.0, "scale": 1.0}, "n": 30, "k_grid": [2, 10],
                      "outer_reps": 6, "inner_reps": 20},
    "mc-test": {"model": "normal_parabola", "interest": 1.0, "nuisance": 2.0, "L": 20, "nr_start": 1.5},
    "power": {"model": "gamma_shape", "interest0": 2.0, "nuisance": 1.0, "interest_grid": [2.0, 3.0],
              "datasets_per_theta": 4, "n": 30, "L": 20},
    "condmle-profile": {"n": 40, "k": 39, "theta_grid": [0.5, 1.0, 1.5]},
    "oracle-check": {"n_values": [20, 50], "draws": 2000, "tilt_points": 3, "ks_level": 0.001, "tv_max": 0.06},
}


def _run(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = run([command, "--config", str(path), "--out", str(out), "--quiet", *extra])
    return code, out


def _csvs(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


@pytest.mark.parametrize("command", sorted(SMALL))
def test_rerun_is_byte_identical(tmp_path, command):
    code_a, a = _run(tmp_path, command, SMALL[command], "--seed", "5", "--jobs", "1", name="a")
    code_b, b = _run(tmp_path, command, SMALL[command], "--seed", "5", "--jobs", "2", name="b")
    assert code_a == code_b == EXIT_OK
    assert _csvs(a) and _csvs(a) == _csvs(b)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == command and manifest["config"]["seed"] == 5
    assert sorted(manifest["outputs"]) == sorted(_csvs(a))


def test_seed_changes_output(tmp_path):
    cfg = SMALL["mc-test"]
    _, a = _run(tmp_path, "mc-test", cfg, "--seed", "1", name="a")
    _, b = _run(tmp_path, "mc-test", cfg, "--seed", "2", name="b")
    assert _csvs(a) != _csvs(b)


def test_both_methods_carry_seed(tmp_path):
    code, out = _run(tmp_path, "mc-test", SMALL["mc-test"], "--seed", "9")
    assert code == EXIT_OK
    names = set(_csvs(out))
    assert {"mc_test_conditional.csv", "mc_test_bootstrap.csv"} <= names
    for method in ("conditional", "bootstrap"):
        header, row = (out / f"mc_test_{method}.csv").read_text().splitlines()[:2]
        cols = dict(zip(header.split(","), row.split(",")))
        assert cols["seed"] == "9"


def test_single_point_grid_is_flat(tmp_path):
    cfg = dict(SMALL["sufficiency-scan"], grid=[2.0])
    code, out = _run(tmp_path, "sufficiency-scan", cfg)
    assert code == EXIT_OK
    text = (out / "sufficiency_scan.csv").read_text()
    assert "flatness" in text
    footer = [line for line in text.splitlines() if line.startswith("flatness,")][0]
    assert float(footer.split(",")[1]) == 0.0


def test_single_k_gives_one_row(tmp_path):
    cfg = dict(SMALL["rao-blackwell"], k_grid=[2])
    code, out = _run(tmp_path, "rao-blackwell", cfg)
    assert code == EXIT_OK
    lines = (out / "rao_blackwell.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("2,")


@pytest.mark.parametrize("cfg", [
    {**SMALL["mc-test"], "colour": "blue"},
    {"interest": 1.0, "nuisance": 2.0},
    {**SMALL["mc-test"], "L": 10},
    {**SMALL["mc-test"], "method": "exact"},
    {**SMALL["mc-test"], "n": "a hundred"},
], ids=["unknown", "missing", "range", "choice", "type"])
def test_bad_config_exits_1(tmp_path, cfg):
    code, out = _run(tmp_path, "mc-test", cfg)
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"model": "gamma_shape",\n "n": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_config("mc-test", str(path))


def test_defaults_validate():
    for command in SCHEMAS:
        cfg = load_config(command, None)
        assert cfg["seed"] == 0
    assert validate("condmle-profile", {})["k"] == 99
    with pytest.raises(ConfigError):
        load_config("oracle-check", None, {"k": 0})


def test_k_override_and_exit_codes(tmp_path):
    code, out = _run(tmp_path, "condmle-profile", SMALL["condmle-profile"], "--k", "20")
    assert code == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["config"]["k"] == 20
    # k outside the admissible range surfaces as a config error
    code, _ = _run(tmp_path, "mc-test", SMALL["mc-test"], "--k", "99", name="bad")
    assert code == EXIT_CONFIG


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "condinf", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for command in SCHEMAS:
        assert command in res.stdout
