import json
import subprocess
import sys

import numpy as np
import pytest

from rlcm import DinaParams, ProportionVector, QMatrix, ThetaMatrix
from rlcm import fileio
from rlcm.cli import main

from helpers import stacked_identity


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


def _write_q(path, rows):
    fileio.write_qmatrix_csv(path, QMatrix(rows))
    return str(path)


def _write_params(path, params, k):
    fileio.write_item_params_json(path, params, k)
    return str(path)


def _write_p(path, probs):
    fileio.write_proportion_json(path, ProportionVector(probs))
    return str(path)


class TestCheck:
    def test_example_q_exit_3(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", [[1, 0], [0, 1], [1, 1]])
        code = main(["check", "--q", q])
        assert code == 3
        report = json.loads(capsys.readouterr().out)
        assert report["complete"] is True
        assert report["c1_holds"] is False

    def test_three_identities_exit_0(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", stacked_identity(2, 3).entries)
        assert main(["check", "--q", q]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] == "identifiable-by-sufficient-conditions"
        assert report["three_identity_sufficient"] is True

    def test_incomplete_exit_2(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", [[1, 1], [0, 1]])
        assert main(["check", "--q", q]) == 2

    def test_with_params_c2_decides(self, workdir, capsys):
        q = _write_q(workdir / "q.csv",
                     np.vstack([np.eye(2, dtype=int)] * 2 + [[[1, 1]]]))
        params = _write_params(workdir / "params.json",
                               [DinaParams(0.2, 0.1)] * 5, 2)
        assert main(["check", "--q", q, "--params", params]) == 3
        report = json.loads(capsys.readouterr().out)
        assert report["c1_holds"] is True and report["c2_holds"] is False

    def test_malformed_csv_exit_1(self, workdir, capsys):
        bad = workdir / "q.csv"
        bad.write_text("1,0\n0,x\n")
        assert main(["check", "--q", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "line 2" in err and "column 2" in err

    def test_missing_file_exit_1(self, workdir, capsys):
        assert main(["check", "--q", str(workdir / "nope.csv")]) == 1


class TestTmatrix:
    def test_single_item_csv(self, workdir, capsys):
        theta_path = workdir / "theta.json"
        fileio.write_theta_json(theta_path, ThetaMatrix([[0.1, 0.8]]))
        assert main(["tmatrix", "--theta", str(theta_path)]) == 0
        out = capsys.readouterr().out
        rows = [line for line in out.splitlines() if not line.startswith("#")]
        assert rows[0] == "0,1.0,1.0"
        assert rows[1] == "1,0.1,0.8"

    def test_weight_display_order(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", stacked_identity(2, 1).entries)
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 2, 2)
        assert main(["tmatrix", "--q", q, "--params", params,
                     "--display-order", "weight"]) == 0
        out = capsys.readouterr().out
        rows = [line for line in out.splitlines() if not line.startswith("#")]
        assert [r.split(",")[0] for r in rows] == ["0", "1", "2", "3"]

    def test_distribution_emitted_with_p(self, workdir, capsys):
        theta_path = workdir / "theta.json"
        fileio.write_theta_json(theta_path, ThetaMatrix([[0.1, 0.8]]))
        p = _write_p(workdir / "p.json", [0.5, 0.5])
        assert main(["tmatrix", "--theta", str(theta_path), "--p", p]) == 0
        out = capsys.readouterr().out
        dist_lines = out.splitlines()[out.splitlines().index(
            "# pattern,probability,dominance_probability") + 1:]
        assert dist_lines[0].startswith("0,0.55")
        assert dist_lines[1].startswith("1,0.45")


class TestCounterexample:
    def test_c1_only_roundtrip(self, workdir, capsys):
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 5, 2)
        extra = workdir / "extra.csv"
        extra.write_text("1\n")
        out_path = workdir / "pair.json"
        code = main(["counterexample", "--mode", "c1-only", "--k", "2",
                     "--extra-q", str(extra), "--params", params,
                     "--rho", "1.0", "--anchors", "0.12,0.08",
                     "--out", str(out_path)])
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert doc["verified_gap"] <= 1e-10
        assert doc["parameter_distance"] > 1e-6

        # re-read and re-verify through the CLI
        code = main(["verify-pair", "--pair", str(out_path)])
        assert code == 0
        reread = json.loads(capsys.readouterr().out)
        assert reread["max_distribution_gap"] <= 1e-10

    def test_incomplete_mode(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", [[1, 1], [0, 1]])
        params = _write_params(workdir / "params.json",
                               [DinaParams(0.2, 0.1), DinaParams(0.1, 0.2)], 2)
        p = _write_p(workdir / "p.json", [0.25] * 4)
        code = main(["counterexample", "--mode", "incomplete", "--q", q,
                     "--params", params, "--p", p])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["verified_gap"] <= 1e-12

    def test_incomplete_mode_rejects_complete_design(self, workdir, capsys):
        q = _write_q(workdir / "q.csv", [[1, 0], [0, 1]])
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 2, 2)
        p = _write_p(workdir / "p.json", [0.25] * 4)
        code = main(["counterexample", "--mode", "incomplete", "--q", q,
                     "--params", params, "--p", p])
        assert code == 1
        assert "does not apply" in capsys.readouterr().err


class TestVerifyTransform:
    def test_residual_small(self, capsys):
        assert main(["verify-transform", "--j", "6", "--k", "2", "--seed", "7"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["max_abs_residual"] <= 1e-12


class TestSimulateFitPipeline:
    def test_roundtrip_recovers_parameters(self, workdir, capsys):
        q_path = _write_q(workdir / "q.csv", stacked_identity(2, 3).entries)
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 6, 2)
        p = _write_p(workdir / "p.json", [0.25] * 4)
        data_path = workdir / "data.csv"
        assert main(["simulate", "--q", q_path, "--params", params, "--p", p,
                     "--n", "8000", "--seed", "3", "--out", str(data_path)]) == 0
        fit_path = workdir / "fit.json"
        assert main(["fit", "--q", q_path, "--data", str(data_path),
                     "--families", "DINA", "--restarts", "3", "--seed", "1",
                     "--out", str(fit_path)]) == 0
        doc = json.loads(fit_path.read_text())
        assert doc["converged"] is True
        for item in doc["item_params"]:
            assert abs(item["s"] - 0.2) <= 0.06
            assert abs(item["g"] - 0.1) <= 0.06
        assert np.abs(np.array(doc["p"]) - 0.25).max() <= 0.06

    def test_simulate_deterministic_given_seed(self, workdir):
        q_path = _write_q(workdir / "q.csv", stacked_identity(2, 1).entries)
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 2, 2)
        p = _write_p(workdir / "p.json", [0.25] * 4)
        out1, out2 = workdir / "a.csv", workdir / "b.csv"
        for out in (out1, out2):
            assert main(["simulate", "--q", q_path, "--params", params, "--p", p,
                         "--n", "100", "--seed", "5", "--out", str(out)]) == 0
        assert out1.read_text() == out2.read_text()


class TestExperimentCommand:
    def test_small_grid(self, workdir, capsys):
        q_path = _write_q(workdir / "q.csv", stacked_identity(2, 3).entries)
        params = _write_params(workdir / "params.json", [DinaParams(0.2, 0.1)] * 6, 2)
        p = _write_p(workdir / "p.json", [0.25] * 4)
        out = workdir / "table.json"
        code = main(["experiment", "--q", q_path, "--params", params, "--p", p,
                     "--families", "DINA", "--n-grid", "300,600",
                     "--replications", "1", "--restarts", "2",
                     "--max-iters", "300", "--seed", "2", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["format"] == "consistency-table"
        assert len(doc["rows"]) == 2


class TestSchema:
    def test_schema_flag(self, capsys):
        assert main(["--schema"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "theta-matrix" in doc and "q-matrix-csv" in doc

    def test_console_script_installed(self):
        result = subprocess.run([sys.executable, "-m", "rlcm.cli", "--schema"],
                                capture_output=True, text=True)
        assert result.returncode == 0
        assert "proportion-vector" in result.stdout


class TestFileFormats:
    def test_theta_roundtrip(self, workdir):
        theta = ThetaMatrix([[0.1, 0.8], [0.2, 0.9]])
        path = workdir / "theta.json"
        fileio.write_theta_json(path, theta)
        assert fileio.read_theta_json(path) == theta

    def test_params_roundtrip(self, workdir):
        from rlcm import GdinaParams, LlmParams, RrumParams
        params = [
            DinaParams(0.2, 0.1),
            GdinaParams({frozenset(): 0.1, frozenset({0, 1}): 0.7}),
            LlmParams(-0.5, (1.0, 2.0)),
            RrumParams(0.9, (0.3, 0.4)),
        ]
        path = workdir / "params.json"
        fileio.write_item_params_json(path, params, 2)
        back, k = fileio.read_item_params_json(path)
        assert k == 2
        assert back[0] == params[0]
        assert dict(back[1].beta) == dict(params[1].beta)
        assert back[2] == params[2] and back[3] == params[3]

    def test_foreign_order_rejected(self, workdir):
        path = workdir / "p.json"
        path.write_text(json.dumps({
            "format": "proportion-vector", "K": 1,
            "order": "gray-code", "probs": [0.5, 0.5]}))
        with pytest.raises(fileio.FileFormatError, match="order"):
            fileio.read_proportion_json(path)

    def test_pair_reread_reverifies(self, workdir):
        from rlcm import c1_only_counterexample
        pair = c1_only_counterexample(2, [[1]], [DinaParams(0.2, 0.1)] * 5,
                                      1.0, (0.12, 0.08))
        path = workdir / "pair.json"
        fileio.write_pair_json(path, pair)
        back = fileio.read_pair_json(path)
        assert back.max_distribution_gap <= 1e-10
        assert back.parameter_distance == pytest.approx(pair.parameter_distance)

    def test_tampered_pair_rejected(self, workdir, capsys):
        from rlcm import c1_only_counterexample
        pair = c1_only_counterexample(2, [[1]], [DinaParams(0.2, 0.1)] * 5,
                                      1.0, (0.12, 0.08))
        path = workdir / "pair.json"
        fileio.write_pair_json(path, pair)
        doc = json.loads(path.read_text())
        doc["second"]["theta"][0][0] += 0.2  # breaks the distribution equality
        path.write_text(json.dumps(doc))
        assert main(["verify-pair", "--pair", str(path)]) == 1
        assert "gap" in capsys.readouterr().err

    def test_response_csv_roundtrip(self, workdir):
        from rlcm import ResponseData
        data = ResponseData.from_matrix([[1, 0], [0, 1], [1, 1]])
        path = workdir / "data.csv"
        fileio.write_response_csv(path, data)
        assert np.array_equal(fileio.read_response_csv(path).codes, data.codes)
