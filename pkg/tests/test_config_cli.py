import json

import numpy as np
import pytest

from delaysynth import config as cfgmod
from delaysynth.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, build_export, exit_code_for,
                            load_gain, main, validate)
from delaysynth.errors import ConfigError, DimensionMismatch, NoProgress, SolverFailure
from delaysynth.fixtures import EXAMPLE1_A, EXAMPLE1_B, EXAMPLE1_REFERENCE_GAINS
from delaysynth.lmi import solve
from delaysynth.sdpa import read_sdpa, solve_sdpa

ANALYSIS_TOML = """\
name = "scalar"
mode = "analyze"
N = [1]
A = [[0.0]]
Ad = [[-1.0]]
h = 1.0

[algorithm]
h_cap = 3.0
"""

EX1_TOML = """\
name = "ex1"
mode = "ssf"
N = [1]
A = [[0.2, 0.0], [0.2, -0.2]]
B = [[-1.0, 0.0], [-1.0, -1.0]]
K0 = [[1.2, 0.0], [-1.0, 1.8]]
h = 4.5
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_bundled_configs_load():
    assert set(cfgmod.bundled_names()) >= {"example1", "example2"}
    ex1 = cfgmod.bundled("example1")
    np.testing.assert_array_equal(ex1.A, EXAMPLE1_A)
    assert ex1.N == (1, 2, 3) and ex1.mode == "ssf"
    ex2 = cfgmod.bundled("example2")
    assert ex2.system().m == 1
    with pytest.raises(ConfigError):
        cfgmod.bundled("nope")


def test_round_trip_dict():
    cfg = cfgmod.loads(EX1_TOML)
    again = cfgmod.from_dict(cfg.to_dict())
    np.testing.assert_array_equal(again.K0, cfg.K0)
    assert again.algorithm == cfg.algorithm


@pytest.mark.parametrize("text,field,line", [
    ("A = [[1.0]]\nmode = \"analyze\"\nAd = [[0.0]]\nbogus = 1\n", "bogus", 4),
    ("A = [[1.0, 2.0]]\nB = [[1.0]]\n", "A", 1),
    ("A = [[1.0]]\nB = [[1.0], [2.0]]\n", "B", 2),
    ("A = [[1.0]]\nB = [[1.0]]\nmode = \"fast\"\n", "mode", 3),
    ("A = [[1.0]]\nB = [[1.0]]\nh = -2\n", "h", 3),
    ("A = [[1.0]]\nB = [[1.0]]\nN = [1, \"x\"]\n", "N", 3),
    ("A = [[1.0]]\nB = [[1.0]]\n[algorithm]\nh0 = \"big\"\n", "algorithm.h0", 4),
    ("A = [[1.0]]\nB = [[1.0]]\n[algorithm]\nspeed = 2\n", "algorithm.speed", 4),
    ("A = [[1.0]]\nB = [[1.0]]\nK0 = [[1.0, 2.0]]\n", "K0", 3),
    ("A = [[1.0]]\nB = [[1.0]]\nmethod = \"magic\"\n", "method", 3),
])
def test_config_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as err:
        cfgmod.loads(text)
    assert err.value.field == field
    assert err.value.line == line
    assert field in str(err.value) and f"line {line}" in str(err.value)


def test_malformed_toml_reports_line():
    with pytest.raises(ConfigError) as err:
        cfgmod.loads("A = [[1.0]]\nB = [[1.0\n")
    assert err.value.line is not None


def test_missing_input_for_synthesis():
    with pytest.raises(ConfigError) as err:
        cfgmod.loads("A = [[1.0]]\n")
    assert err.value.field == "B"


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
    assert exit_code_for(DimensionMismatch("x")) == EXIT_CONFIG
    assert exit_code_for(NoProgress("x")) == EXIT_INFEASIBLE
    assert exit_code_for(SolverFailure("x")) == 4


def test_cli_config_error_exit(tmp_path, capsys):
    path = _write(tmp_path, "A = [[1.0]]\nB = [[1.0]]\nzzz = 3\n")
    assert main(["synth-ssf", "--config", str(path)]) == EXIT_CONFIG
    assert "zzz" in capsys.readouterr().err
    assert main(["analyze"]) == EXIT_CONFIG


def test_cli_analyze_certifies_scalar_delay(tmp_path, capsys):
    path = _write(tmp_path, ANALYSIS_TOML)
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(path), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    row = rep["rows"][0]
    assert row["certified"] is True and row["oracle_verdict"] == "stable"
    assert (out / "report.csv").exists() and (out / "table.txt").exists()


def test_cli_maxdelay_matches_half_pi(tmp_path):
    path = _write(tmp_path, ANALYSIS_TOML)
    out = tmp_path / "out"
    assert main(["maxdelay", "--config", str(path), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    row = rep["rows"][0]
    assert row["h_max_spectral"] == pytest.approx(np.pi / 2, abs=1e-3)
    assert row["h_max_lmi"] <= row["h_max_spectral"] + 1e-3
    assert row["h_max_lmi"] > 1.4


def test_cli_infeasible_exit(tmp_path):
    path = _write(tmp_path, "A = [[1.0]]\nB = [[0.0]]\nK0 = [[0.0]]\n[algorithm]\nh_cap = 1.0\n")
    assert main(["synth-ssf", "--config", str(path)]) == EXIT_INFEASIBLE


def test_validate_verdicts(tmp_path, capsys):
    cfg = cfgmod.loads(EX1_TOML)
    K3 = np.array(EXAMPLE1_REFERENCE_GAINS[3])
    assert validate(cfg, K3, 4.98, 1)["verdict"] in ("certified-at-h", "spectral-stable-at-h")
    assert validate(cfg, np.zeros((2, 2)), 1.0)["verdict"] == "neither"
    with pytest.raises(DimensionMismatch):
        validate(cfg, np.zeros((1, 2)), 1.0)
    cfg_path = _write(tmp_path, EX1_TOML)
    gain = tmp_path / "gain.json"
    gain.write_text(json.dumps({"K": K3.tolist(), "h": 4.0}))
    assert main(["validate", "--config", str(cfg_path), "--gain", str(gain)]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["verdict"] == "certified-at-h" and res["h"] == 4.0
    gain.write_text(json.dumps([[1.0, 2.0]]))
    assert main(["validate", "--config", str(cfg_path), "--gain", str(gain)]) == EXIT_CONFIG


def test_load_gain_formats(tmp_path):
    p = tmp_path / "g.toml"
    p.write_text("K = [[1.0, 2.0]]\nh = 0.5\n")
    K, h = load_gain(p)
    assert K.shape == (1, 2) and h == 0.5
    p.write_text("not a gain")
    with pytest.raises(ConfigError):
        load_gain(p)


@pytest.mark.parametrize("problem,h", [("ssf", 0.05), ("ssf", 4.5), ("analysis", 1.0), ("analysis", 1.7)])
def test_export_sdpa_agrees_with_native_solve(tmp_path, problem, h):
    text = ANALYSIS_TOML if problem == "analysis" else EX1_TOML
    cfg_path = _write(tmp_path, text)
    out = tmp_path / "sdpa"
    assert main(["export-sdpa", "--config", str(cfg_path), "--out", str(out), "--N", "1",
                 "--h", str(h), "--problem", problem]) == EXIT_OK
    (path,) = out.glob("*.dat-s")
    native = solve(build_export(cfgmod.loads(text), 1, h, problem)).status
    assert native in ("feasible", "infeasible")
    assert solve_sdpa(read_sdpa(path.read_text())) == native


def test_export_is_deterministic(tmp_path, capsys):
    path = _write(tmp_path, ANALYSIS_TOML)
    main(["export-sdpa", "--config", str(path)])
    first = capsys.readouterr().out
    main(["export-sdpa", "--config", str(path)])
    assert capsys.readouterr().out == first
    assert first.startswith('"')


def test_reproduce_reports_are_byte_stable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "--only", "example2", "--out", str(a)]) == EXIT_OK
    assert main(["reproduce", "--only", "example2", "--out", str(b)]) == EXIT_OK
    for name in ("report.json", "report.csv", "table.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    table = (a / "table.txt").read_text()
    assert "iterations" in table.lower()


def test_synthesized_gain_shape_from_cli(tmp_path):
    cfg = cfgmod.loads(EX1_TOML.replace("h = 4.5\n", "[algorithm]\nh_cap = 0.5\n"))
    assert cfg.algorithm.h_cap == 0.5
    assert cfg.delayed_matrix(cfg.K0).shape == (2, 2)
    np.testing.assert_allclose(cfg.delayed_matrix(cfg.K0), EXAMPLE1_B @ cfg.K0)
