import json
import subprocess
import sys

import numpy as np
import pytest

from qgmaps.cli import ExperimentConfig, main, parse_levels
from qgmaps.errors import ConfigError


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_levels_parsing():
    assert parse_levels("1..4") == [1, 2, 3, 4]
    assert parse_levels("2,5") == [2, 5]
    with pytest.raises(ConfigError):
        parse_levels("a..b")


def test_validate(capsys):
    code, out, _ = _run(["validate", "--map", "doubling", "--format", "json"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["measure_preserving"] and rep["endpoints_forward_invariant"]


def test_validate_failing_map(tmp_path, capsys):
    path = tmp_path / "half.json"
    path.write_text(json.dumps({"M0": 1, "branches": [{"slope": "1/2", "intercept": "0"}]}))
    code, out, _ = _run(["validate", "--map", str(path), "--format", "json"], capsys)
    assert code == 2
    assert json.loads(out)["measure_preserving"] is False


def test_dump_b(capsys):
    code, out, _ = _run(["dump-b", "--map", "tent", "--level", "1"], capsys)
    assert code == 0
    assert out.splitlines()[:3] == ["row,col,value", "0,0,1/2", "0,1,1/2"]


def test_quantize_npz(tmp_path, capsys):
    out = tmp_path / "u.npz"
    code, _, _ = _run(["quantize", "--map", "doubling", "--level", "3", "--format", "npz",
                       "--out", str(out)], capsys)
    assert code == 0
    data = np.load(out)
    assert tuple(data["shape"]) == (16, 16) and len(data["data"]) == 32


def test_sweep_and_manifest_rerun(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = _run(["sweep", "--map", "doubling", "--obs", "cosine", "--levels", "1..3",
                       "--out", str(out)], capsys)
    assert code == 0
    manifest = json.loads((tmp_path / "sweep.csv.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["_run"]["seed"] == 0
    first = out.read_bytes()
    out.unlink()
    code, _, _ = _run(["run", str(tmp_path / "sweep.csv.manifest.json")], capsys)
    assert code == 0
    assert out.read_bytes() == first


def test_inline_observable_json(capsys):
    code, out, _ = _run(["egorov", "--map", "tent", "--obs", '{"kind": "linear"}',
                         "--levels", "1..3"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "n,M,defect,block_max,fitted_exponent"


def test_oracle(capsys):
    code, out, _ = _run(["oracle", "--map", "tent", "--level", "3", "--obs", "linear"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["passed"] and res["checks"]["unique_trajectories"]


def test_config_error_exit(capsys):
    code, _, err = _run(["sweep", "--map", "nowhere.json", "--obs", "cosine", "--levels", "1"],
                        capsys)
    assert code == 2
    assert json.loads(err)["exit_code"] == 2


def test_loosening_tolerance_rejected(capsys):
    code, _, err = _run(["quantize", "--map", "doubling", "--level", "1",
                         "--tolerance", "unitarity=1e-3"], capsys)
    assert code == 2 and "loosen" in err


def test_numerical_failure_exit(capsys):
    code, _, err = _run(["quantize", "--map", "doubling", "--level", "2",
                         "--tolerance", "unitarity=1e-40"], capsys)
    assert code == 3
    assert json.loads(err)["exit_code"] == 3


def test_budget_exit(capsys):
    code, _, _ = _run(["sweep", "--map", "doubling", "--obs", "cosine", "--levels", "4",
                       "--T-rule", "12", "--budget", "100"], capsys)
    assert code == 4


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "sweep", "colour": "blue"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "paint"})
    cfg = ExperimentConfig.from_dict({"command": "sweep", "levels": "1..3", "_run": {}})
    assert cfg.levels == [1, 2, 3] and cfg.seed == 0


def test_module_entry_point(tmp_path):
    out = tmp_path / "b.csv"
    subprocess.run([sys.executable, "-m", "qgmaps.cli", "dump-b", "--map", "doubling",
                    "--level", "0", "--out", str(out)], check=True)
    assert out.read_text() == "row,col,value\n0,0,1/2\n0,1,1/2\n1,0,1/2\n1,1,1/2\n"
