import json
import subprocess
import sys

import pytest

from conftest import CONFIGS, ROOT, config_dict
from thinjunction.cli import EXIT_OK, EXIT_VALIDATION, config_hash, main


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_validate_worked(tmp_path):
    out = tmp_path / "o"
    assert main(["validate", str(CONFIGS / "worked.json"), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "validation.json").read_text())
    names = {c["name"]: c["passed"] for c in rep["checks"]}
    assert names["node_geometry"] is False and names["cond_1"] is True
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "validate" and man["outputs"] == ["validation.json"]
    assert man["config_hash"] == config_hash(CONFIGS / "worked.json")


def test_validate_failure_names_assumption(tmp_path, capsys):
    data = config_dict("worked_thin")
    data["velocity"]["transverse"] = [
        {"profile": {"bump": {"amplitude": 1.0, "support": [0.4, 0.6]}}, "matrix": [[0, 0], [0, 0]], "offset": [0.5, 0.0]},
        None,
        None,
    ]
    data["diffusion"]["cross_matrices"][0] = [[0.4, 0.0], [0.0, 0.4]]
    data["diffusion"]["axial_constants"][0] = 0.4
    code = main(["validate", str(_write(tmp_path, data)), "--out", str(tmp_path / "o")])
    assert code == EXIT_VALIDATION
    assert "assum_2[1]" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    data = config_dict("worked")
    data["geometry"]["ell0"] = 2.0
    assert main(["validate", str(_write(tmp_path, data)), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_limit_outputs_deterministic(tmp_path):
    outs = []
    for n in range(2):
        out = tmp_path / f"o{n}"
        assert main(["limit", str(CONFIGS / "generic.json"), "--out", str(out)]) == EXIT_OK
        outs.append(out)
    assert (outs[0] / "limit.csv").read_bytes() == (outs[1] / "limit.csv").read_bytes()
    info = json.loads((outs[0] / "limit.json").read_text())
    assert abs(info["kirchhoff_residual"]) <= 1e-12
    assert info["w0_at_base"][:2] == pytest.approx([1.0, 2.0], abs=1e-12)


def test_config_hash_ignores_layout(tmp_path):
    data = config_dict("generic")
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(data, indent=4))
    b.write_text(json.dumps(data, separators=(",", ":")))
    assert config_hash(a) == config_hash(b)


def test_expand_eval(tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("x1,x2,x3\n0,0,1\n0,0.6,0.01\n")
    out = tmp_path / "o"
    assert main(["expand", str(CONFIGS / "worked.json"), "--order", "1", "--eval", str(pts), "--out", str(out)]) == EXIT_OK
    rows = (out / "eval.csv").read_text().splitlines()
    assert rows[0] == "x1,x2,x3,value"
    assert float(rows[1].split(",")[-1]) == pytest.approx(3.0)
    assert float(rows[2].split(",")[-1]) == pytest.approx(2.0)


def test_run_worked_module_entry(tmp_path):
    out = tmp_path / "o"
    res = subprocess.run(
        [sys.executable, "-m", "thinjunction", "run", str(CONFIGS / "worked.json"), "--order", "1", "--out", str(out)],
        capture_output=True, text=True, cwd=ROOT, timeout=600,
    )
    assert res.returncode == EXIT_OK, res.stderr
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["passed"]
    man = json.loads((out / "manifest.json").read_text())
    for name in man["outputs"]:
        assert (out / name).exists()
    assert "residuals.csv" in man["outputs"]
