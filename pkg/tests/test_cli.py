import json
import subprocess
import sys


from vcpi.cli import Exit, main


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr()
    return code, out.out, out.err


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


TWO_BUS = {"buses": [{"id": 1, "kind": "generator", "p": 0.2, "v_set": 1.0},
                     {"id": 2, "kind": "load", "p": -0.2, "q": -0.05}],
           "branches": [{"from": 1, "to": 2, "g": 0.5, "b": -8.0}]}


def test_indices_zero_q_case_is_all_zero(capsys):
    code, out, _ = run(capsys, "indices", "bundled:case3_noq", "--kind", "dVdQ", "--json")
    assert code == Exit.OK
    vals = json.loads(out)["dVdQ"]["values"]
    assert all(abs(v) < 1e-12 for v in vals.values())


def test_indices_ne39_with_fd_check(capsys):
    code, out, _ = run(capsys, "indices", "bundled:ne39", "--kind", "dVLdVG", "--fd",
                       "--reference", 31, "--json")
    assert code == Exit.OK
    res = json.loads(out)["dVLdVG"]
    assert res["fd_max_rel_dev"] <= 1e-6
    assert res["worst_bus"] == 12


def test_low_voltage_solution_is_rejected(capsys):
    assert run(capsys, "indices", "bundled:case2_nose")[0] == Exit.OK
    code, _, err = run(capsys, "indices", "bundled:case2_nose", "--init-v", 0.4)
    assert code == Exit.SPECTRAL
    assert "spectral condition violated" in err


def test_power_flow_failure_code(capsys, tmp_path):
    heavy = json.loads(json.dumps(TWO_BUS))
    heavy["buses"][1]["p"] = -20.0
    code, _, err = run(capsys, "indices", _write(tmp_path, "heavy.json", heavy))
    assert code == Exit.POWER_FLOW and "power flow" in err


def test_parse_failure_code(capsys, tmp_path):
    assert run(capsys, "indices", tmp_path / "missing.json")[0] == Exit.PARSE
    (tmp_path / "broken.json").write_text("{")
    assert run(capsys, "check", tmp_path / "broken.json")[0] == Exit.PARSE


def test_check_ne39(capsys):
    code, out, _ = run(capsys, "check", "bundled:ne39", "--reference", 31)
    assert code == Exit.OK
    assert "connectivity: ok" in out and "conventions: ok" in out
    assert "spectral condition: holds" in out
    assert "h_max 0.019159" in out and "rho 0.97" in out


def test_check_disconnected(capsys, tmp_path):
    data = json.loads(json.dumps(TWO_BUS))
    data["buses"].append({"id": 3, "kind": "load", "p": -0.1})
    code, out, _ = run(capsys, "check", _write(tmp_path, "split.json", data))
    assert code == Exit.PARSE and "disconnected" in out


def test_check_convention_warning(capsys, tmp_path):
    data = json.loads(json.dumps(TWO_BUS))
    data["branches"][0]["g"] = -0.5
    code, out, _ = run(capsys, "check", _write(tmp_path, "neg.json", data))
    assert code == Exit.OK and "conventions: WARN" in out


def test_simulate_writes_outputs(capsys, tmp_path, data_dir):
    code, out, _ = run(capsys, "simulate", data_dir / "case3_ramp.toml", "--out", tmp_path,
                       "--record-every", 50)
    assert code == Exit.OK
    assert "comparison (max error): PASS" in out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["comparison"]["passed"]
    hash_ = report["meta"]["config_hash"]
    assert f"config_hash={hash_}" in (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert json.loads((tmp_path / "trace.ndjson").read_text().splitlines()[0])["meta"]["config_hash"] == hash_


def test_simulate_is_deterministic(capsys, tmp_path, data_dir):
    for d in ("a", "b"):
        run(capsys, "simulate", data_dir / "case3_ramp.toml", "--out", tmp_path / d,
            "--seed", 5, "--record-every", 25)
    assert (tmp_path / "a" / "trace.csv").read_text() == (tmp_path / "b" / "trace.csv").read_text()


def test_jacobi_refused_when_it_would_diverge(capsys, tmp_path, data_dir):
    code, _, err = run(capsys, "simulate", data_dir / "resistive_ramp.toml", "--scheme", "jacobi",
                       "--out", tmp_path)
    assert code == Exit.REFUSED
    assert "spectral radius 1.58" in err
    assert not (tmp_path / "trace.csv").exists()


def test_bad_override_refused(capsys, tmp_path, data_dir):
    code, _, err = run(capsys, "simulate", data_dir / "case3_ramp.toml", "--h", 0.03,
                       "--out", tmp_path)
    assert code in (Exit.PARSE, Exit.REFUSED) and "whole number" in err


def test_collapse_exit_code(capsys, tmp_path, data_dir):
    text = (data_dir / "case3_ramp.toml").read_text().replace("factor = 1.2", "factor = 40.0")
    (tmp_path / "collapse.toml").write_text(text)
    code, _, err = run(capsys, "simulate", tmp_path / "collapse.toml", "--out", tmp_path / "out")
    assert code == Exit.COLLAPSE and "collapse at t=" in err
    assert (tmp_path / "out" / "report.json").exists()


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "vcpi", "indices"], capture_output=True)
    assert proc.returncode == Exit.USAGE
