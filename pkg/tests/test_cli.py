"""End-to-end `matw` CLI: configs, artifacts, exit codes, determinism."""

import json

import pytest

from matweight import __version__
from matweight.cli import (EXIT_ERROR, EXIT_OK, ExperimentConfig,
                           emit_plot_scripts, main, run)
from matweight.errors import ConfigError, MissingReport
from matweight.grid import read_matw1

WEIGHT_TOML = """\
kind = "power_radial"
d = 1
n = 1
matrix = [[1.0]]
gamma = [[0.5]]
id = "sqrtx"
"""

PROBLEM_TOML = """\
base = {low = [-1.0, -1.0], scale = 1}
resolution = 32
coefficient = "identity"
boundary = "harmonic_saddle"
"""


@pytest.fixture
def weight_file(tmp_path):
    path = tmp_path / "w.toml"
    path.write_text(WEIGHT_TOML)
    return path


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == f"matw {__version__}"


def test_char_pipeline_writes_deterministic_csv(tmp_path, weight_file):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        code = main(["char", "--weight", str(weight_file), "--p", "2.0",
                     "--depth", "3", "--out", str(out)])
        assert code == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    text = outs[0].decode()
    assert text.startswith(f"# matweight {__version__}\n")
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0].split(",")[:3] == ["weight_id", "p", "q"]
    weight_id, _, _, _, value = lines[1].split(",")[:5]
    assert weight_id == "sqrtx"
    assert float(value) > 1.0  # non-constant weight


def test_missing_weight_file_is_config_error(tmp_path, capsys):
    code = main(["char", "--weight", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "o.csv")])
    assert code == EXIT_ERROR
    assert "config error" in capsys.readouterr().err


def test_unknown_weight_key_rejected(tmp_path, capsys):
    path = tmp_path / "w.toml"
    path.write_text(WEIGHT_TOML + 'frobnicate = 1\n')
    code = main(["char", "--weight", str(path),
                 "--out", str(tmp_path / "o.csv")])
    assert code == EXIT_ERROR
    assert "frobnicate" in capsys.readouterr().err


def test_experiment_config_validation(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('pipeline = "char"\nseed = 3\n')
    parsed = ExperimentConfig.from_file(cfg)
    assert (parsed.pipeline, parsed.seed) == ("char", 3)
    assert len(parsed.hash) == 16
    cfg.write_text('pipeline = "frob"\n')
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(cfg)
    cfg.write_text('pipeline = "char"\nextra = 1\n')
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(cfg)
    cfg.write_text('seed = 1\n')
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(cfg)


def test_run_with_toml_config(tmp_path, weight_file):
    out = tmp_path / "char.csv"
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        'pipeline = "char"\nseed = 7\n'
        f'[options]\nweight = "{weight_file}"\ndepth = 3\n'
        f'out = "{out}"\n'
    )
    assert run(cfg) == EXIT_OK
    assert out.exists()


def test_run_with_json_config(tmp_path, weight_file):
    out = tmp_path / "char.csv"
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "pipeline": "char", "seed": 7,
        "options": {"weight": str(weight_file), "depth": 3,
                    "out": str(out)},
    }))
    assert run(cfg) == EXIT_OK
    assert out.exists()


def test_sparse_pipeline(tmp_path, weight_file):
    out = tmp_path / "sparse.csv"
    code = main(["sparse", "--weight", str(weight_file),
                 "--resolution", "32", "--count", "2", "--out", str(out)])
    assert code == EXIT_OK
    rows = [l for l in out.read_text().splitlines()
            if not l.startswith("#")]
    assert rows[0].split(",")[-1] == "invariants_ok"
    assert all(r.split(",")[-1] == "true" for r in rows[1:])


def test_op_pipeline(tmp_path, weight_file):
    out = tmp_path / "op.csv"
    code = main(["op", "--weight", str(weight_file), "--op", "max",
                 "--resolution", "32", "--depth", "3", "--count", "2",
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = [l.split(",") for l in out.read_text().splitlines()
            if not l.startswith("#")]
    assert rows[0][2] == "op"
    assert all(float(r[6]) > 0 for r in rows[1:])


def test_ineq_pipeline_auto_eps(tmp_path, weight_file):
    out = tmp_path / "ineq.csv"
    code = main(["ineq", "--weight", str(weight_file),
                 "--kind", "poincare", "--resolution", "64",
                 "--count", "2", "--out", str(out)])
    assert code == EXIT_OK
    rows = [l.split(",") for l in out.read_text().splitlines()
            if not l.startswith("#")]
    eps = float(rows[1][2])
    char = float(rows[1][6])
    assert 0.0 < eps < 1.0
    assert char >= 1.0


def test_solve_diagnose_roundtrip(tmp_path):
    prob = tmp_path / "prob.toml"
    prob.write_text(PROBLEM_TOML)
    sol_path = tmp_path / "sol.matw1"
    assert main(["solve", "--problem", str(prob),
                 "--out", str(sol_path)]) == EXIT_OK
    data, n, d, dims = read_matw1(sol_path)
    assert (n, d, dims) == (1, 2, (33, 33))
    sidecar = json.loads((tmp_path / "sol.matw1.json").read_text())
    assert sidecar["version"] == __version__
    assert float(sidecar["residual"]) < 1e-8

    rep_path = tmp_path / "cacc.json"
    assert main(["diagnose", "--sol", str(sol_path),
                 "--check", "caccioppoli", "--center", "0.0", "0.0",
                 "--radius", "0.5", "--out", str(rep_path)]) == EXIT_OK
    rep = json.loads(rep_path.read_text())
    assert rep["check"] == "caccioppoli"
    assert float(rep["ratio"]) >= 0.0


def test_plot_scripts(tmp_path, weight_file):
    out = tmp_path / "char.csv"
    main(["char", "--weight", str(weight_file), "--out", str(out)])
    written = emit_plot_scripts([out], tmp_path / "plots")
    assert len(written) == 1
    assert written[0].suffix == ".gp"
    assert "set datafile separator" in written[0].read_text()
    with pytest.raises(MissingReport):
        emit_plot_scripts([tmp_path / "missing.csv"], tmp_path / "plots")


def test_suite_acceptance_fast(tmp_path, capsys):
    code = main(["suite", "acceptance", "--fast",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "acceptance.csv").exists()
    assert "PASS" in capsys.readouterr().out
