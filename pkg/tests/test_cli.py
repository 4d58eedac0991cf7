import numpy as np
import pytest

from modalsimex.cli import main
from modalsimex.simstudy import Scenario, generate_replication


def write_csv(path, y, w):
    lines = ["y,w"] + [f"{float(yi)!r},{float(wi)!r}" for yi, wi in zip(y, w)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    write_csv(path, [1.0, 2.0, 3.2], [0.1, 0.6, 1.1])
    return path


class TestFit:
    def test_toy_smoke_s_modal(self, toy_csv, tmp_path, capsys):
        out = tmp_path / "report.txt"
        code = main([
            "fit", "--input", str(toy_csv), "--method", "s-modal",
            "--sigma-u2", "0.01", "--output", str(out),
        ])
        assert code == 0
        report = out.read_text()
        assert "alpha_simex = " in report and "beta_simex = " in report
        assert "lambda_trace:" in report

    def test_rejects_fewer_rows_than_parameters(self, tmp_path, capsys):
        path = tmp_path / "tiny.csv"
        write_csv(path, [1.0], [0.5])
        code = main(["fit", "--input", str(path), "--method", "n-mean"])
        assert code != 0
        assert "error:" in capsys.readouterr().err

    def test_malformed_csv_reports_line_number(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y,w\n1.0,0.1\noops,0.2\n", encoding="utf-8")
        code = main(["fit", "--input", str(path), "--method", "n-mean"])
        assert code != 0
        assert ":3:" in capsys.readouterr().err

    def test_bad_header_rejected(self, tmp_path, capsys):
        path = tmp_path / "hdr.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        code = main(["fit", "--input", str(path), "--method", "n-mean"])
        assert code != 0
        assert ":1:" in capsys.readouterr().err

    def test_simex_method_requires_sigma(self, toy_csv, capsys):
        code = main(["fit", "--input", str(toy_csv), "--method", "s-mean"])
        assert code != 0
        assert "sigma" in capsys.readouterr().err

    def test_lambda_points_extrapolant_mismatch_rejected(self, toy_csv, capsys):
        code = main([
            "fit", "--input", str(toy_csv), "--method", "s-mean",
            "--sigma-u2", "0.01", "--lambda-points", "2",
            "--extrapolant", "quadratic",
        ])
        assert code != 0
        assert "error:" in capsys.readouterr().err

    def test_naive_method_without_sigma(self, toy_csv, tmp_path):
        out = tmp_path / "naive.txt"
        code = main([
            "fit", "--input", str(toy_csv), "--method", "n-mean",
            "--output", str(out),
        ])
        assert code == 0
        assert "alpha = " in out.read_text()

    def test_single_replication_band(self, tmp_path):
        # One draw from the study's sampling distribution lands in a wide
        # sanity band around the modal-target rate.
        sc = Scenario(n=200, sigma_u2=0.01)
        y, _, w = generate_replication(sc, 0, 12345)
        path = tmp_path / "sim.csv"
        write_csv(path, y, w)
        out = tmp_path / "report.txt"
        code = main([
            "fit", "--input", str(path), "--method", "s-modal",
            "--sigma-u2", "0.01", "--bandwidth-c", "0.8",
            "--seed", "7", "--output", str(out),
        ])
        assert code == 0
        beta = float(
            [ln for ln in out.read_text().splitlines() if ln.startswith("beta_simex")][
                0
            ].split("=")[1]
        )
        assert 0.5 < beta < 1.5

    def test_trace_file(self, toy_csv, tmp_path):
        trace = tmp_path / "trace.csv"
        code = main([
            "fit", "--input", str(toy_csv), "--method", "s-mean",
            "--sigma-u2", "0.01", "--B", "3", "--lambda-points", "4",
            "--output", str(tmp_path / "r.txt"), "--trace", str(trace),
        ])
        assert code == 0
        lines = trace.read_text().splitlines()
        assert lines[0] == "lambda,b,converged,theta_1,theta_2,em_iterations"
        assert len(lines) == 1 + 4 * 3


class TestSimulate:
    MICRO = (
        "n = 60\nsigma_u2 = 0.01\nreps = 2\nlambda_points = 4\n"
        "B = 3\nseed = 5\nmethods = N-Mean, S-Mean\n"
    )

    def test_micro_run_emits_wellformed_csv(self, tmp_path):
        scn = tmp_path / "micro.txt"
        scn.write_text(self.MICRO, encoding="utf-8")
        out = tmp_path / "table.csv"
        code = main(["simulate", "--scenario", str(scn), "--output", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "parameter,statistic,method,value"
        assert len(lines) == 1 + 2 * 3 * 2
        for line in lines[1:]:
            float(line.rsplit(",", 1)[1])

    def test_byte_identical_reruns(self, tmp_path):
        scn = tmp_path / "micro.txt"
        scn.write_text(self.MICRO, encoding="utf-8")
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--scenario", str(scn), "--output", str(out1)]) == 0
        assert main(["simulate", "--scenario", str(scn), "--output", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_flag_overrides(self, tmp_path):
        out = tmp_path / "t.csv"
        code = main([
            "simulate", "--n", "50", "--reps", "2", "--B", "2",
            "--lambda-points", "4", "--methods", "N-Mean",
            "--seed", "3", "--output", str(out),
        ])
        assert code == 0
        assert "N-Mean" in out.read_text()

    def test_builtin_scenario_resolves(self, tmp_path):
        # Bundled table1 with micro overrides so it finishes quickly.
        out = tmp_path / "t.csv"
        code = main([
            "simulate", "--scenario", "table1", "--n", "40", "--reps", "1",
            "--B", "2", "--lambda-points", "4", "--methods", "N-Mean",
            "--output", str(out),
        ])
        assert code == 0

    def test_unknown_scenario_errors(self, tmp_path, capsys):
        code = main(["simulate", "--scenario", "tableX"])
        assert code != 0
        assert "error:" in capsys.readouterr().err

    def test_text_format(self, tmp_path):
        scn = tmp_path / "micro.txt"
        scn.write_text(self.MICRO, encoding="utf-8")
        out = tmp_path / "table.txt"
        code = main([
            "simulate", "--scenario", str(scn), "--format", "text",
            "--output", str(out),
        ])
        assert code == 0
        assert "alpha Mean" in out.read_text()


class TestOracleCheck:
    def test_passes(self, capsys):
        assert main(["oracle-check"]) == 0
        out = capsys.readouterr().out
        assert "analytic-extrapolation: PASS" in out
        assert "monte-carlo-correction: PASS" in out
