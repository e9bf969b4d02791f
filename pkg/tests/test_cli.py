"""Command-line contract: schemas, artifacts, exit codes, reproducibility."""

import json
import math

import pytest

from kplab import cli


def run(argv):
    return cli.main([str(a) for a in argv])


def test_bands_artifact_and_format(tmp_path, capsys):
    assert run(["bands", "--v", "1.0", "--l-max", "3",
                "--out", tmp_path]) == 0
    raw = (tmp_path / "bands.csv").read_bytes()
    assert raw.startswith(b"l,E_low,E_high\n")
    assert b"\r" not in raw
    lines = raw.decode().strip().split("\n")
    assert len(lines) == 4
    # floats are written with 17 significant digits: they round-trip
    _, lo, hi = lines[1].split(",")
    assert float(hi) == math.pi ** 2
    assert float(lo) == pytest.approx(0.92196267358973878, rel=1e-15)
    out = capsys.readouterr().out
    assert lines[1] in out
    manifest = json.loads((tmp_path / "bands_manifest.json").read_text())
    assert manifest["command"] == "bands"
    assert manifest["artifacts"] == ["bands.csv"]
    assert manifest["config"]["v"] == 1.0


def test_reruns_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    for out in (a, b):
        assert run(["bands", "--v", "1.5", "--l-max", "2",
                    "--out", out]) == 0
    assert (a / "bands.csv").read_bytes() == (b / "bands.csv").read_bytes()
    assert (a / "bands_manifest.json").read_bytes() == \
        (b / "bands_manifest.json").read_bytes()


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"v": 1.0, "l_mx": 3}))
    assert run(["bands", "--config", cfg, "--out", tmp_path]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_bad_flag_value_exits_2(tmp_path):
    # argparse handles enum choices itself and exits(2) directly
    with pytest.raises(SystemExit) as info:
        run(["lyapunov", "--side", "sideways", "--out", tmp_path])
    assert info.value.code == 2
    # grid syntax is checked at resolve time and returns 2
    assert run(["transport", "--t-grid", "nonsense", "--out", tmp_path]) == 2


def test_config_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"v": 2.0, "l_max": 3}))
    assert run(["bands", "--config", cfg, "--l-max", "1",
                "--out", tmp_path]) == 0
    manifest = json.loads((tmp_path / "bands_manifest.json").read_text())
    assert manifest["config"]["v"] == 2.0       # from config
    assert manifest["config"]["l_max"] == 1     # flag wins
    raw = (tmp_path / "bands.csv").read_text()
    assert len(raw.strip().split("\n")) == 2


def test_toml_config(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('v = 2.0\nl_max = 2\n')
    assert run(["bands", "--config", cfg, "--out", tmp_path]) == 0
    manifest = json.loads((tmp_path / "bands_manifest.json").read_text())
    assert manifest["config"]["v"] == 2.0


def test_green_free_rows(tmp_path):
    assert run(["green", "--model", "free", "--x-grid", "0.5:20.5:21",
                "--out", tmp_path]) == 0
    lines = (tmp_path / "green.csv").read_text().strip().split("\n")
    assert lines[0] == "x,y,re_G,im_G"
    assert len(lines) == 22


def test_verify_nodes_suite(tmp_path, capsys):
    assert run(["verify", "--suite", "nodes", "--out", tmp_path]) == 0
    out = capsys.readouterr().out
    assert "AC-4 PASS" in out
    results = json.loads((tmp_path / "verify_results.json").read_text())
    assert len(results) == 1
    assert results[0]["name"] == "AC-4"
    assert results[0]["pass"] is True


def test_lyapunov_starved_budget_exits_3(tmp_path, capsys):
    code = run(["lyapunov", "--side", "below", "--eps-grid", "1e-3:1e-2:4",
                "--n-steps", "20000", "--samples", "8", "--seed", "42",
                "--out", tmp_path])
    assert code == 3
    assert "noise exceeded the scaling signal" in capsys.readouterr().err
    lines = (tmp_path / "lyapunov.csv").read_text().strip().split("\n")
    assert lines[0] == "epsilon,gamma_mean,gamma_stderr"
    assert len(lines) == 4  # partial series: 3 of 4 grid points
    assert not (tmp_path / "lyapunov_fit.json").exists()


def test_idos_under_budget_exits_3(tmp_path, capsys):
    code = run(["idos", "--eps-grid", "1e-3:1e-2:4", "--n-cells", "60",
                "--samples", "8", "--seed", "42", "--out", tmp_path])
    assert code == 3
    assert "need n_cells" in capsys.readouterr().err
    lines = (tmp_path / "idos.csv").read_text().strip().split("\n")
    assert lines[0] == "epsilon,idos_mean,idos_stderr"
    assert len(lines) == 5  # granularity rejects after the full grid


def test_transport_short_grid_exits_2(tmp_path, capsys):
    code = run(["transport", "--model", "free", "--t-grid", "1e1:1e2:3",
                "--out", tmp_path])
    assert code == 2
    assert "two decades" in capsys.readouterr().err


def test_transport_free_ballistic(tmp_path, capsys):
    assert run(["transport", "--model", "free", "--q", "2.0",
                "--t-grid", "1e1:1e3:5", "--samples", "1",
                "--out", tmp_path]) == 0
    fit = json.loads((tmp_path / "transport_fit.json").read_text())
    assert fit["pass"] is True
    assert fit["fit"]["exponent"] == pytest.approx(2.0, abs=0.1)
    assert fit["theory"]["exponent"] == 2.0
    lines = (tmp_path / "transport.csv").read_text().strip().split("\n")
    assert lines[0] == "T,q,moment_mean,moment_stderr"
    assert len(lines) == 6


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        run(["--version"])
    assert info.value.code == 0
