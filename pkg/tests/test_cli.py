import json
import math

import pytest

from polarsturm import cli
from polarsturm.config import SCHEMA_VERSION, config_digest, load_config, parse_config
from polarsturm.errors import ConfigError


def _write(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return str(path)


HARMONIC = {"schema_version": SCHEMA_VERSION, "kind": "morse", "n": 1, "t": 5.0,
            "coefficients": {"A": 1, "B": 0, "C": 1}, "N": [[0]]}


def test_parse_config_options():
    raw = dict(HARMONIC, options={"lambda": 2.5, "h": 0.002, "count": 4})
    cfg = parse_config(raw)
    assert cfg.options.lam == 2.5 and cfg.options.h == 0.002 and cfg.options.count == 4
    assert cfg.digest == config_digest(raw)
    assert cfg.model().n == 1


@pytest.mark.parametrize("raw", [
    {"kind": "morse", "t": 1.0},
    {"schema_version": 99, "kind": "morse", "t": 1.0},
    {"schema_version": SCHEMA_VERSION, "kind": "unknown"},
    {"schema_version": SCHEMA_VERSION, "kind": "morse"},
    {"schema_version": SCHEMA_VERSION, "kind": "morse", "t": -1.0},
    {"schema_version": SCHEMA_VERSION, "kind": "morse", "t": 1.0, "extra": 1},
    {"schema_version": SCHEMA_VERSION, "kind": "morse", "t": 1.0,
     "options": {"lambda_min": 2.0, "lambda_max": 1.0}},
])
def test_parse_config_rejects(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "{not json"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "[1, 2]"))


def test_config_matrix_shapes(tmp_path):
    raw = dict(HARMONIC, N=[[0, 0], [0, 0]])
    with pytest.raises(ConfigError):
        parse_config(raw).N()


def test_morse_command(tmp_path):
    code, text, _ = cli.run(["morse", "--config", _write(tmp_path, HARMONIC), "--oracle", "200"])
    assert code == 0
    out = json.loads(text)
    assert out["command"] == "morse"
    assert out["outputs"]["mu"] == 2
    assert out["outputs"]["oracle_mu"] == 2 and out["outputs"]["oracle_agrees"]
    assert "diagnostics" not in out


def test_conjugate_points(tmp_path):
    code, text, _ = cli.run(["conjugate", "--config", _write(tmp_path, HARMONIC)])
    assert code == 0
    points = [e["param"] for e in json.loads(text)["outputs"]["events"]]
    assert points == pytest.approx([math.pi / 2, 3 * math.pi / 2], abs=1e-8)


def test_singular_end_gives_numeric_exit(tmp_path):
    raw = dict(HARMONIC, t=math.pi / 2)
    code, text, _ = cli.run(["morse", "--config", _write(tmp_path, raw)])
    assert code == cli.EXIT_NUMERIC
    assert text.startswith("numerical error")


def test_config_error_exit(tmp_path):
    code, text, _ = cli.run(["morse", "--config", _write(tmp_path, {"kind": "morse"})])
    assert code == cli.EXIT_CONFIG
    code, _, _ = cli.run(["sl-eigs", "--config", _write(tmp_path, HARMONIC)])
    assert code == cli.EXIT_CONFIG
    code, _, _ = cli.run(["morse", "--config", _write(tmp_path, HARMONIC), "--seed", "-1"])
    assert code == cli.EXIT_CONFIG


def test_sl_eigs_and_eigenfunction(data_dir):
    cfg = str(data_dir / "cli" / "sl.json")
    code, text, _ = cli.run(["sl-eigs", "--config", cfg, "--count", "3"])
    assert code == 0
    values = [e["eigenvalue"] for e in json.loads(text)["outputs"]["eigenvalues"]]
    assert values == pytest.approx([0.25, 2.25, 6.25], rel=1e-8)
    code, text, _ = cli.run(["sl-eigenfunction", "--config", cfg, "--k", "1"])
    assert code == 0
    header, first = text.splitlines()[:2]
    assert header.startswith("tau,q_1")
    assert float(first.split(",")[0]) == 0.0


def test_angles_csv_and_json(data_dir):
    cfg = str(data_dir / "cli" / "harm.json")
    code, text, _ = cli.run(["angles", "--config", cfg])
    assert code == 0 and text.splitlines()[0] == "param,phi_1"
    code, text, _ = cli.run(["angles", "--config", cfg, "--format", "json"])
    out = json.loads(text)["outputs"]
    assert "columns" in out and "rows" in out


def test_verify_and_classify(data_dir):
    code, text, _ = cli.run(["verify", "--config", str(data_dir / "cli" / "bc.json")])
    out = json.loads(text)["outputs"]
    assert code == 0 and out["selfadjoint"]["ok"] and out["condition_b"]["ok"]
    code, text, _ = cli.run(["classify-n1", "--config", str(data_dir / "cli" / "app.json")])
    out = json.loads(text)["outputs"]
    assert code == 0 and out["symplectic_family"]


def test_timings_are_opt_in(tmp_path):
    code, text, _ = cli.run(["morse", "--config", _write(tmp_path, HARMONIC), "--timings"])
    assert code == 0
    assert json.loads(text)["diagnostics"]["runtime_s"] >= 0


def test_main_writes_out_file(tmp_path, capsys):
    out = tmp_path / "result.json"
    code = cli.main(["morse", "--config", _write(tmp_path, HARMONIC), "--out", str(out)])
    assert code == 0
    assert json.loads(out.read_text())["outputs"]["mu"] == 2
    assert capsys.readouterr().out == ""


def test_main_reports_errors_on_stderr(tmp_path, capsys):
    code = cli.main(["morse", "--config", str(tmp_path / "nope.json")])
    assert code == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_output_is_deterministic(data_dir):
    argv = ["sl-eigs", "--config", str(data_dir / "cli" / "sl.json")]
    assert cli.run(argv) == cli.run(argv)
