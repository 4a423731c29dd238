import json

import pytest

from conftest import SCENARIO_DIR
from invfilter.main import build_parser, main


def _scenario(name):
    return str(SCENARIO_DIR / f"{name}.json")


class TestRun:
    def test_filtered_run_passes(self, tmp_path, capsys):
        assert main(["run", _scenario("cbf_1d"), "--out", str(tmp_path)]) == 0
        report = (tmp_path / "report.txt").read_text(encoding="utf-8")
        assert "Invariance: PASS" in report
        assert "time constant" in report
        assert report == capsys.readouterr().out
        header = (tmp_path / "trajectory.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "t,x_1,u_1,h_1,cpl,tier,min_residual"

    def test_priority_mission(self, tmp_path):
        assert main(["run", _scenario("priority_mission"), "--out", str(tmp_path)]) == 0
        report = (tmp_path / "report.txt").read_text(encoding="utf-8")
        assert "Trace: 1->2->3" in report
        assert "0 decreases" in report

    def test_unsafe_start_uses_the_convergence_monitor(self, tmp_path):
        assert main(["run", _scenario("cbf_1d_outside"), "--out", str(tmp_path)]) == 0
        assert "Convergence: PASS" in (tmp_path / "report.txt").read_text(encoding="utf-8")

    def test_unfiltered_run_fails_the_monitor(self, tmp_path):
        assert main(["run", _scenario("cbf_1d_unfiltered"), "--out", str(tmp_path)]) == 1
        assert "Invariance: FAIL" in (tmp_path / "report.txt").read_text(encoding="utf-8")

    def test_infeasible_run(self, tmp_path, capsys):
        doc = json.loads((SCENARIO_DIR / "cbf_1d_weak_box.json").read_text(encoding="utf-8"))
        doc["x0"] = [-2.0]
        path = tmp_path / "stuck.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 3
        err = capsys.readouterr().err
        assert "cbf:h" in err
        assert "Certificate: " in (tmp_path / "out" / "report.txt").read_text(encoding="utf-8")

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"name": "broken",', encoding="utf-8")
        assert main(["run", str(path), "--out", str(tmp_path)]) == 2
        assert f"error: {path}:1:" in capsys.readouterr().err

    def test_loosening_table_is_a_configuration_error(self, tmp_path):
        assert main(["run", _scenario("loosening_table"), "--out", str(tmp_path)]) == 2


class TestCheckEquivalence:
    @pytest.mark.parametrize("name", ["cbf_1d", "double_integrator_drift", "unicycle_keepout"])
    def test_matching_gains_agree(self, tmp_path, name):
        assert main(["check-equivalence", _scenario(name), "--samples", "2500", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "agreement.txt").read_text(encoding="utf-8")
        assert "Pairs checked: 2500" in text
        assert "Disagreements: 0" in text

    def test_mismatched_gain_disagrees(self, tmp_path):
        assert main(["check-equivalence", _scenario("cbf_1d_mismatched_k"), "--samples", "400", "--out", str(tmp_path)]) == 1
        rows = (tmp_path / "disagreements.csv").read_text(encoding="utf-8").splitlines()
        assert rows[0].startswith("x_1,u_1,")
        assert len(rows) > 1

    def test_needs_a_barrier(self, tmp_path):
        assert main(["check-equivalence", _scenario("priority_mission"), "--out", str(tmp_path)]) == 2

    def test_sample_count_must_be_positive(self, tmp_path):
        assert main(["check-equivalence", _scenario("cbf_1d"), "--samples", "0", "--out", str(tmp_path)]) == 2


class TestValidate:
    def test_valid_barrier(self, capsys):
        assert main(["validate", _scenario("cbf_1d")]) == 0
        out = capsys.readouterr().out
        assert "gradient of h: PASS" in out
        assert "cbf_1d: valid" in out

    def test_weak_box_fails_at_the_domain_edge(self, capsys):
        assert main(["validate", _scenario("cbf_1d_weak_box")]) == 1
        out = capsys.readouterr().out
        assert "worst x = ['-2']" in out
        assert "cbf_1d_weak_box: INVALID" in out

    def test_loosening_table(self):
        assert main(["validate", _scenario("loosening_table")]) == 2


def test_a_command_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
