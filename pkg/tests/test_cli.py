import json
import subprocess
import sys

import pytest

from cutofflab.cli import main


def run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_spectral_tv_csv(capsys):
    code, out, _ = run(["spectral-tv", "--walk", "dg1xn", "--n", "3", "--q", "5", "--t", "0,1,5"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# cutofflab spectral-tv schema")
    assert lines[1].split(",")[:4] == ["t", "l2_bound_sq", "l2_tv_bound", "exact_tv"]
    assert len(lines) == 5
    first = lines[2].split(",")
    assert float(first[1]) == 24 and float(first[3]) == pytest.approx(0.96)


def test_exit_codes(capsys):
    assert run(["spectral-tv", "--q", "1"], capsys)[0] == 1
    assert run(["spectral-tv", "--t", "-1"], capsys)[0] == 1
    assert run(["sweep-cutoff", "--c-grid", ""], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1
    assert run(["spectral-tv", "--walk", "dgnxn", "--n", "5", "--q", "11"], capsys)[0] == 2
    code, _, err = run(["verify", "--tamper", "psi"], capsys)
    assert code == 3 and "gamma-psi-identity" in err and "(0, 1)" in err


def test_verify_quick(capsys):
    code, out, _ = run(["verify", "--level", "quick"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and len(doc["checks"]) == 10


def test_oracle_check(capsys):
    code, out, _ = run(["oracle-check", "--walk", "dgnxn", "--n", "3", "--q", "3"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and doc["l1"] <= 1e-9


def test_theorem_times_variants(capsys):
    code, out, _ = run(["theorem-times", "--n", "8", "--q", "16", "--all-variants"], capsys)
    doc = json.loads(out)
    assert code == 0 and set(doc["variants"]) == {"theorem", "proof", "general-formula"}
    assert doc["variants"]["proof"]["t_upper"] > doc["variants"]["theorem"]["t_upper"]
    code, out, _ = run(["theorem-times", "--walk", "srw", "--n", "3", "--q", "40"], capsys)
    assert code == 0 and json.loads(out)["variants"]["theorem"]["t_upper"] > 0


def test_simulate_and_lower_bound(capsys):
    code, out, _ = run(["simulate", "--t", "2", "--samples", "2000", "--seed", "5"], capsys)
    doc = json.loads(out)
    assert code == 0 and abs(doc["psi_mean"] - doc["exact_psi_mean"]) < 4 * doc["ci95_halfwidth"]
    code, out, _ = run(["lower-bound", "--n", "6", "--q", "13", "--samples", "2000"], capsys)
    doc = json.loads(out)
    assert code == 0 and 0 <= doc["empirical_tv_lower_bound"] <= 1


def test_check_commands(capsys):
    code, out, _ = run(["check-lemmas", "--max-n", "1000"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(["check-conditions", "--walk", "dgnxn", "--n-range", "3,6", "--decay", "--n", "3", "--q", "30"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and "decay" in doc


def test_sweep_config_override_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": [2, 3], "q": [5, 5], "epsilon": 0.4, "grid": {"kind": "theory", "c": [0.1, 1.0]}}))
    outs = []
    for i in range(2):
        path = tmp_path / f"s{i}.csv"
        code, _, _ = run(["sweep-cutoff", "--config", str(cfg), "--epsilon", "0.25", "--output", str(path)], capsys)
        assert code == 0
        outs.append(path.read_bytes())
        meta = json.loads((tmp_path / f"s{i}.csv.meta.json").read_text())
        assert meta["command"] == "sweep-cutoff"
    assert outs[0] == outs[1]
    # the flag won over the file: the theory time depends on epsilon
    code, direct, _ = run(["sweep-cutoff", "--n", "2,3", "--q", "5,5", "--epsilon", "0.25", "--c-grid", "0.1,1"], capsys)
    assert direct.startswith(outs[0].decode())


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "cutofflab.cli", "sweep-cutoff", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "profile.csv" in res.stdout and "mc_lower_bound" in res.stdout
