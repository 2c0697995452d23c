import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from roughcm.cli import main

LINEAR = Path("examples/chekroun_linear.json").resolve()
NONLINEAR = Path("examples/chekroun_nonlinear.json").resolve()


@pytest.fixture()
def runner():
    return CliRunner()


class TestDerive:
    def test_linear_report(self, runner, tmp_path):
        result = runner.invoke(main, ["derive", "--spec", str(LINEAR),
                                      "--out-dir", str(tmp_path)])
        assert result.exit_code == 0
        assert "expansion order q = 4" in result.output
        assert "alpha_1 = 0, alpha_3 = 0" in result.output
        assert "dalpha_2" in result.output and "dalpha_4" in result.output
        assert "residual min degree: 6" in result.output
        doc = json.loads((tmp_path / "coefficient_system.json").read_text())
        assert doc["zero_flags"] == [1, 3]

    def test_nonlinear_report(self, runner, tmp_path):
        result = runner.invoke(main, ["derive", "--spec", str(NONLINEAR),
                                      "--out-dir", str(tmp_path)])
        assert result.exit_code == 0
        assert "expansion order q = 6" in result.output
        assert "residual min degree: 7" in result.output
        doc = json.loads((tmp_path / "coefficient_system.json").read_text())
        assert doc["g"]["6"] == ["alpha2**3"]

    def test_q_override(self, runner, tmp_path):
        result = runner.invoke(main, ["derive", "--spec", str(NONLINEAR),
                                      "--q", "4", "--out-dir", str(tmp_path)])
        assert result.exit_code == 0
        assert "expansion order q = 4" in result.output

    def test_invalid_spec_exits_2(self, runner, tmp_path):
        doc = json.loads(NONLINEAR.read_text())
        doc["Fc"] = [{"i": 0, "j": 0, "c": 1.0}]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        result = runner.invoke(main, ["derive", "--spec", str(bad)])
        assert result.exit_code == 2
        assert "validation failure" in result.output


class TestVerify:
    def run_small(self, runner, tmp_path, *extra):
        return runner.invoke(main, [
            "verify", "--spec", str(LINEAR), "--seeds", "1",
            "--grid-n", "32", "--window", "6", "--xi-min", "0.0125",
            "--xi-max", "0.1", "--xi-points", "4",
            "--out-dir", str(tmp_path), *extra])

    def test_report_and_exit(self, runner, tmp_path):
        result = self.run_small(runner, tmp_path)
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["q"] == 4 and report["threshold"] == 4.5
        assert len(report["per_seed"]) == 1
        assert report["median_slope"] >= 4.5
        row = report["per_seed"][0]
        assert len(row["xi_sweep"]) == 4
        assert not row["failures"]

    def test_csv_output(self, runner, tmp_path):
        result = self.run_small(runner, tmp_path, "--format", "csv")
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "verify_data.csv").read_text().strip().splitlines()
        assert lines[0] == "seed,xi,phi,hc,happ,abs_err_phi,abs_err_happ"
        assert len(lines) == 1 + 4

    def test_deterministic_reruns(self, runner, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        self.run_small(runner, a)
        self.run_small(runner, b)
        assert (a / "verify_report.json").read_text() == \
            (b / "verify_report.json").read_text()

    def test_xi_above_cutoff_warns_and_clips(self, runner, tmp_path):
        result = runner.invoke(main, [
            "verify", "--spec", str(LINEAR), "--seeds", "1",
            "--grid-n", "32", "--window", "6", "--cutoff-r", "0.05",
            "--xi-min", "0.0125", "--xi-max", "0.1", "--xi-points", "4",
            "--out-dir", str(tmp_path)])
        assert "warning" in result.output
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert max(report["per_seed"][0]["xi_sweep"]) <= 0.05

    def test_invalid_spec_exits_2(self, runner, tmp_path):
        doc = json.loads(NONLINEAR.read_text())
        doc["gamma"] = 0.2
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        result = runner.invoke(main, ["verify", "--spec", str(bad)])
        assert result.exit_code == 2
