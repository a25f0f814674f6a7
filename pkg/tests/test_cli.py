"""CLI behavior: subcommands, exit codes, deterministic output."""

import json
import subprocess
import sys

import numpy as np
import pytest

from steinlab.cli import main


def _run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSteinCheck:
    def test_smoke(self, capsys):
        code, out, err = _run(["stein-check", "--h", "cosine:a=1", "--p", "1",
                               "--grid-points", "9"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["pass"] is True
        assert payload["max_pde_residual"] <= 1e-3

    def test_dimension_conflict_is_usage_error(self, capsys):
        code, _, err = _run(["stein-check", "--h", "cosine:a=1", "--p", "2"],
                            capsys)
        assert code == 1 and "error" in err


class TestOracleModes:
    def test_degree_oracle_matches(self, capsys):
        code, out, _ = _run(["degree-count", "--n", "4", "--pi", "0.5",
                             "--degrees", "1", "--oracle"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["match"] is True
        np.testing.assert_allclose(payload["lambda_exact"], [1.5])

    def test_degree_oracle_refuses_large(self, capsys):
        code, _, err = _run(["degree-count", "--n", "9", "--pi", "0.5",
                             "--degrees", "1", "--oracle"], capsys)
        assert code == 1 and "too large" in err

    def test_color_oracle_matches(self, capsys):
        code, out, _ = _run(["color-match", "--graph", "complete:3",
                             "--colors", "0.5,0.5", "--oracle"], capsys)
        assert code == 0
        assert json.loads(out)["match"] is True


class TestExperiments:
    def test_degree_count_writes_report(self, tmp_path, capsys):
        out_file = tmp_path / "report.json"
        code, _, err = _run(["degree-count", "--n", "20", "--c", "2",
                             "--degrees", "1,2", "--samples", "2000",
                             "--seed", "3", "--out", str(out_file)], capsys)
        assert code == 0
        payload = json.loads(out_file.read_text())
        assert payload["pass"] is True
        assert payload["experiment"] == "degree-count"
        assert "wall" not in json.dumps(payload)  # timing stays on stderr
        assert "PASS" in err

    def test_color_match_stdout(self, capsys):
        code, out, _ = _run(["color-match", "--graph", "cycle:16",
                             "--colors", "0.5,0.5", "--samples", "2000",
                             "--seed", "1"], capsys)
        assert code == 0
        assert json.loads(out)["experiment"] == "color-match"

    def test_nonlinear(self, capsys):
        code, out, _ = _run(["nonlinear", "--model", "gauss:rho=0.1,n=20",
                             "--psi", "square", "--samples", "2000",
                             "--seed", "2"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["config"]["model"] == "gauss"

    def test_validate_couplings_subset(self, capsys):
        code, out, _ = _run(["validate-couplings", "--which",
                             "bernoulli-sum,exchangeable-pair",
                             "--samples", "20000", "--seed", "4"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["pass"] is True
        assert set(payload["results"]) == {"bernoulli-sum",
                                           "exchangeable-pair"}

    def test_unknown_coupler_is_usage_error(self, capsys):
        code, _, err = _run(["validate-couplings", "--which", "nope"],
                            capsys)
        assert code == 1


class TestSweep:
    def test_degree_sweep_csv(self, tmp_path, capsys):
        out_file = tmp_path / "sweep.csv"
        code, _, _ = _run(["sweep", "degree-count", "--n", "16,32",
                           "--c", "2", "--degrees", "1,2",
                           "--samples", "1500", "--seed", "5",
                           "--out", str(out_file)], capsys)
        assert code == 0
        lines = out_file.read_text().strip().splitlines()
        assert lines[0] == "n,bound,gap,gap_stderr"
        assert len(lines) == 3
        n_vals = [int(line.split(",")[0]) for line in lines[1:]]
        assert n_vals == [16, 32]

    def test_color_sweep(self, capsys):
        code, out, _ = _run(["sweep", "color-match", "--n", "12,24",
                             "--colors", "0.5,0.5", "--graph-family",
                             "cycle", "--samples", "1500", "--seed", "5"],
                            capsys)
        assert code == 0
        assert out.startswith("n,bound,gap")

    def test_missing_flags_are_usage_errors(self, capsys):
        code, _, _ = _run(["sweep", "degree-count", "--n", "16"], capsys)
        assert code == 1


class TestDeterminism:
    def test_same_argv_same_bytes(self, tmp_path):
        """Identical seed and chunking give byte-identical reports even
        when the thread cap changes."""
        argv = ["degree-count", "--n", "16", "--c", "2", "--degrees", "1,2",
                "--samples", "3000", "--seed", "11"]
        outputs = []
        for threads in ("1", "8"):
            proc = subprocess.run(
                [sys.executable, "-m", "steinlab.cli", *argv],
                capture_output=True, text=True,
                env={"PATH": "/usr/bin:/bin", "STEIN_LAB_THREADS": threads},
            )
            assert proc.returncode == 0, proc.stderr
            outputs.append(proc.stdout)
        assert outputs[0] == outputs[1]


class TestUsageErrors:
    def test_bad_flag(self, capsys):
        # argparse errors are remapped: 1 is usage, 2 is reserved for
        # bound violations
        assert main(["degree-count", "--badflag"]) == 1

    def test_invalid_pi(self, capsys):
        code, _, err = _run(["degree-count", "--n", "10", "--pi", "1.5",
                             "--degrees", "1"], capsys)
        assert code == 1 and "error" in err
