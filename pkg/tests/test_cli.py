import json

import numpy as np
import pytest
import yaml

from mpcmci.cli import ValidationError, load_config, main


def run_cli(args):
    return main(args)


def test_appendix_command(tmp_path, capsys):
    assert run_cli(["appendix", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "feasible" in out and "infeasible" in out
    doc = json.loads((tmp_path / "appendix_summary.json").read_text())
    assert doc["verdicts"] == ["feasible", "infeasible"]
    assert doc["terminal_barrier"] == pytest.approx(0.75, abs=1e-12)


def test_feasibility_command_small(tmp_path, capsys):
    rc = run_cli(
        [
            "feasibility",
            "--case",
            "1",
            "--variant",
            "mpc-mci",
            "--horizons",
            "2,6",
            "--nx",
            "8",
            "--ny",
            "8",
            "--output-dir",
            str(tmp_path),
        ]
    )
    assert rc == 0
    csv_path = tmp_path / "feasibility_case1_mpc_mci.csv"
    assert csv_path.exists()
    summary = json.loads((tmp_path / "feasibility_case1_mpc_mci_summary.json").read_text())
    assert summary["horizons"]["2"]["feasible_count"] > 0
    assert str(csv_path) in summary["artifacts"][0]
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 1 + 64 * 2


def test_track_command_short(tmp_path):
    rc = run_cli(
        [
            "track",
            "--variant",
            "mpc-mci",
            "--horizon",
            "5",
            "--duration",
            "0.25",
            "--x0=-2,-2,0,0,0",
            "--output-dir",
            str(tmp_path),
        ]
    )
    assert rc == 0
    assert (tmp_path / "tracking_mpc_mci_N5.csv").exists()
    doc = json.loads((tmp_path / "tracking_mpc_mci_N5_summary.json").read_text())
    assert doc["steps"] == 5


def test_reach_command_small(tmp_path):
    rc = run_cli(
        [
            "reach",
            "--x0",
            "2.4,2.4,0,0,0",
            "--horizons",
            "1,2",
            "--nu",
            "3",
            "--output-dir",
            str(tmp_path),
        ]
    )
    assert rc == 0
    doc = json.loads((tmp_path / "reachability_summary.json").read_text())
    assert doc["missing_in_larger"] == {"1->2": 0}
    assert doc["failures"] == 0


def test_check_command_passes(tmp_path):
    rc = run_cli(
        ["check", "--samples", "500", "--points", "2", "--seed", "3", "--output-dir", str(tmp_path)]
    )
    assert rc == 0
    assert (tmp_path / "check_descent.csv").exists()
    doc = json.loads((tmp_path / "check_summary.json").read_text())
    assert doc["descent_violations"] == 0
    assert doc["derivative_max_discrepancy"] <= 1e-5


def test_invalid_grid_size_rejected(tmp_path):
    rc = run_cli(
        ["feasibility", "--case", "1", "--nx", "0", "--output-dir", str(tmp_path)]
    )
    assert rc == 1
    assert not list(tmp_path.iterdir())


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"grid": {"resolution": 7}}))
    rc = run_cli(["feasibility", "--config", str(cfg), "--output-dir", str(tmp_path / "out")])
    assert rc == 1


def test_unknown_plant_rejected(tmp_path):
    rc = run_cli(["appendix", "--plant", "hovercraft", "--output-dir", str(tmp_path)])
    assert rc == 1


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"grid": {"nx": 4, "ny": 4, "horizons": [2], "case": 1}}))
    out = tmp_path / "out"
    rc = run_cli(
        ["feasibility", "--config", str(cfg), "--nx", "5", "--output-dir", str(out)]
    )
    assert rc == 0
    lines = (out / "feasibility_case1_mpc_mci.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 5 * 4


def test_cli_outputs_deterministic_modulo_timing(tmp_path):
    args = [
        "feasibility",
        "--case",
        "1",
        "--variant",
        "nmpc-dcbf",
        "--horizons",
        "2",
        "--nx",
        "6",
        "--ny",
        "6",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli(args + ["--output-dir", str(out_a)]) == 0
    assert run_cli(args + ["--output-dir", str(out_b)]) == 0

    def strip_ms(path):
        return [",".join(l.split(",")[:-1]) for l in path.read_text().splitlines()]

    fa = out_a / "feasibility_case1_nmpc_dcbf.csv"
    fb = out_b / "feasibility_case1_nmpc_dcbf.csv"
    assert strip_ms(fa) == strip_ms(fb)
    sa = json.loads((out_a / "feasibility_case1_nmpc_dcbf_summary.json").read_text())
    sb = json.loads((out_b / "feasibility_case1_nmpc_dcbf_summary.json").read_text())
    sa["artifacts"] = sb["artifacts"] = None
    assert sa == sb


def test_load_config_schema(tmp_path):
    settings = load_config(None, {"solver.tol_feas": 1e-7})
    assert settings["solver"]["tol_feas"] == 1e-7
    assert settings["grid"]["nx"] == 100
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"grdi": {}}))
    with pytest.raises(ValidationError, match="grdi"):
        load_config(str(bad), {})
