import csv
import json
import subprocess
import sys

import pytest

from isaacs_fd import ConfigParseError
from isaacs_fd.cli import main, parse_config, run_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


HEAT_RATES = {
    "problem": {"name": "heat_1d"},
    "grid": {"T": 0.25, "h": [0.125, 0.0625, 0.03125]},
    "study": {"kind": "rates"},
}


def test_rates_study(tmp_path):
    out = tmp_path / "out"
    assert main(["rates", "--config", str(write(tmp_path, HEAT_RATES)), "--out", str(out)]) == 0
    rows = read_rows(out / "results.csv")
    assert rows[0] == ["h", "sup_error", "pairwise_order"]
    assert len(rows) == 4
    assert rows[1][2] == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["fitted_exponent"] > 0
    assert len(manifest["solver_stats"]) == 3
    assert manifest["config"] == HEAT_RATES


def test_solve_with_zero_data(tmp_path):
    cfg = {
        "problem": {"name": "constant_coefficient", "params": {"a": [[1.0, 0.0], [0.0, 1.0]]}},
        "grid": {"T": 0.1, "h": [0.125]},
        "study": {"kind": "solve"},
    }
    out = tmp_path / "out"
    assert run_config(write(tmp_path, cfg), out_dir=out) == 0
    rows = read_rows(out / "results.csv")
    assert rows[0] == ["t", "x1", "x2", "value"]
    assert len(rows) > 1
    assert all(float(r[-1]) == 0.0 for r in rows[1:])


def test_consistent_affine_solve_is_exact(tmp_path):
    cfg = {
        "problem": {
            "name": "constant_coefficient",
            "params": {"a": [[1.0]], "b": [0.5], "f": "consistent", "g": {"kind": "affine", "p": [2.0], "q": 1.0}},
        },
        "grid": {"T": 0.1, "h": [0.125]},
        "study": {"kind": "solve"},
    }
    out = tmp_path / "out"
    assert run_config(write(tmp_path, cfg), out_dir=out) == 0
    assert json.loads((out / "manifest.json").read_text())["sup_error"] <= 1e-8


def test_bad_horizon_names_field(tmp_path, capsys):
    cfg = json.loads(json.dumps(HEAT_RATES))
    cfg["grid"]["T"] = 0
    with pytest.raises(ConfigParseError, match=r"grid\.T"):
        parse_config(cfg)
    assert run_config(write(tmp_path, cfg)) == 2
    assert "grid.T" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda c: c["grid"].update(h=[0.0625, 0.125]), "grid.h"),
        (lambda c: c["grid"].update(T=0.01), "grid.T"),
        (lambda c: c.update(extra=1), "<root>"),
        (lambda c: c["problem"].update(name="wave"), "problem.name"),
        (lambda c: c.update(solver={"sweep_mode": "diagonal"}), "solver.sweep_mode"),
    ],
)
def test_config_errors(mutate, field):
    cfg = json.loads(json.dumps(HEAT_RATES))
    mutate(cfg)
    with pytest.raises(ConfigParseError) as info:
        parse_config(cfg)
    assert str(info.value).startswith(field)


def test_study_mismatch(tmp_path):
    assert run_config(write(tmp_path, HEAT_RATES), study="kgap", out_dir=tmp_path / "o") == 2


def test_kgap_and_regularity(tmp_path):
    base = {"problem": {"name": "heat_1d"}, "grid": {"T": 0.25, "h": [0.0625]}}
    kg = dict(base, study={"kind": "kgap", "K_list": [1, 2, 4]})
    assert run_config(write(tmp_path, kg, "k.json"), out_dir=tmp_path / "k") == 0
    rows = read_rows(tmp_path / "k" / "results.csv")
    assert rows[0] == ["K", "gap"] and len(rows) == 4
    reg = dict(base, study={"kind": "regularity", "epsilon_list": [0.1, 0.2, 0.4], "chi": 0.5})
    assert run_config(write(tmp_path, reg, "r.json"), out_dir=tmp_path / "r") == 0
    rows = read_rows(tmp_path / "r" / "results.csv")
    assert rows[0] == ["epsilon", "seminorm"] and len(rows) == 4
    assert "log_log_slope" in json.loads((tmp_path / "r" / "manifest.json").read_text())


def test_manifest_round_trip_is_bit_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_config(write(tmp_path, HEAT_RATES), out_dir=out1) == 0
    echoed = json.loads((out1 / "manifest.json").read_text())["config"]
    assert run_config(write(tmp_path, echoed, "echo.json"), out_dir=out2) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    # floats are stored in shortest round-trip form
    for row in read_rows(out1 / "results.csv")[1:]:
        assert repr(float(row[1])) == row[1]


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "isaacs_fd", "rates", "--config", str(write(tmp_path, HEAT_RATES)),
         "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "manifest.json").exists()
