"""Command-line interface: wiring, validation, reproducibility."""

import json

import pytest

from linjump import (
    ModelParams,
    SamplingGrid,
    SeedSpec,
    score_vector,
    simulate_path,
    write_path_csv,
)
from linjump.cli import main

UNIT = ModelParams(1.0, 1.0, 1.0)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSimulateCommand:
    def test_path_rows_and_determinism(self, tmp_path, capsys):
        out = tmp_path / "path.csv"
        args = [
            "simulate", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--n", "1000", "--delta", "0.01", "--seed", "7", "--out", str(out),
        ]
        code, stdout, _ = run_cli(capsys, *args)
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "k,t,x,b_inc,n_inc"
        assert len(lines) == 1002  # header + 1001 state rows
        first = out.read_bytes()
        code, _, _ = run_cli(capsys, *args)
        assert code == 0
        assert out.read_bytes() == first

    def test_delta_above_one_exits_2(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            "simulate", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--n", "10", "--delta", "2", "--seed", "7",
            "--out", str(tmp_path / "x.csv"),
        )
        assert code == 2
        assert "delta" in err and "1" in err

    def test_missing_seed_exits_2(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys,
            "simulate", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--n", "10", "--delta", "0.1", "--out", str(tmp_path / "x.csv"),
        )
        assert code == 2
        assert "seed" in err

    def test_config_echo_round_trip(self, tmp_path, capsys):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        code, stdout, _ = run_cli(
            capsys,
            "simulate", "--theta", "0.5", "--sigma", "1.2", "--lambda", "0.8",
            "--n", "500", "--delta", "0.02", "--seed", "99", "--out", str(out1),
        )
        assert code == 0
        echo = tmp_path / "echo.json"
        echo.write_text(stdout)
        code, _, _ = run_cli(capsys, "simulate", "--config", str(echo), "--out", str(out2))
        assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_env_override(self, tmp_path, capsys, monkeypatch):
        out = tmp_path / "env.csv"
        ref = tmp_path / "ref.csv"
        monkeypatch.setenv("LINJUMP_SEED", "123")
        code, _, _ = run_cli(
            capsys,
            "simulate", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--n", "50", "--delta", "0.1", "--out", str(out),
        )
        assert code == 0
        monkeypatch.delenv("LINJUMP_SEED")
        code, _, _ = run_cli(
            capsys,
            "simulate", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--n", "50", "--delta", "0.1", "--seed", "123", "--out", str(ref),
        )
        assert code == 0
        assert out.read_bytes() == ref.read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"theta": 1, "bogus_key": 2}))
        code, _, err = run_cli(
            capsys,
            "simulate", "--config", str(cfg), "--sigma", "1", "--lambda", "1",
            "--n", "10", "--delta", "0.1", "--seed", "1",
            "--out", str(tmp_path / "x.csv"),
        )
        assert code == 2
        assert "bogus_key" in err


class TestSmallCommands:
    def test_fisher_matrix_json(self, capsys):
        code, stdout, _ = run_cli(capsys, "fisher", "--sigma", "1", "--lambda", "1")
        assert code == 0
        payload = json.loads(stdout)
        assert payload["schema_version"] == 1
        assert payload["result"]["matrix"] == [
            [1.0, 0.0, -1.0],
            [0.0, 2.0, 0.0],
            [-1.0, 0.0, 2.0],
        ]

    def test_score_matches_library(self, capsys):
        code, stdout, _ = run_cli(
            capsys,
            "score", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--delta", "0.1", "--dx", "0.3",
        )
        assert code == 0
        got = json.loads(stdout)["result"]
        vec = score_vector(UNIT, 0.1, 0.3)
        assert got["d_theta"] == pytest.approx(vec.d_theta)
        assert got["d_sigma"] == pytest.approx(vec.d_sigma)
        assert got["d_lambda"] == pytest.approx(vec.d_lambda)

    def test_csv_format(self, tmp_path, capsys):
        out = tmp_path / "fisher.csv"
        code, _, _ = run_cli(
            capsys, "fisher", "--sigma", "1", "--lambda", "1",
            "--format", "csv", "--out", str(out),
        )
        assert code == 0
        assert out.read_text().splitlines() == ["1,0,-1", "0,2,0", "-1,0,2"]
        code, _, err = run_cli(
            capsys, "fisher", "--sigma", "1", "--lambda", "1", "--format", "xml",
        )
        assert code == 2
        assert "format" in err

    def test_density_requires_one_of_y_dx(self, capsys):
        code, _, err = run_cli(
            capsys,
            "density", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--delta", "0.1", "--y", "0.3", "--dx", "0.3",
        )
        assert code == 2
        assert "exactly one" in err

    def test_malformed_perturbation_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main([
                "lan", "--theta", "1", "--sigma", "1", "--lambda", "1",
                "--u", "abc", "--v", "1", "--w", "1",
                "--n-list", "200", "--seed", "1",
                "--out", str(tmp_path / "r.json"),
            ])
        assert exc.value.code == 2


class TestLanCommand:
    def test_degenerate_run_and_jobs_invariance(self, tmp_path, capsys):
        outputs = []
        for jobs in ("1", "2"):
            out = tmp_path / f"lan{jobs}.json"
            lr_out = tmp_path / f"lr{jobs}.csv"
            code, _, _ = run_cli(
                capsys,
                "lan", "--theta", "1", "--sigma", "1", "--lambda", "1",
                "--u", "1", "--v", "0", "--w", "0",
                "--n-list", "300", "--replicates", "100", "--seed", "21",
                "--jobs", jobs, "--out", str(out), "--lr-out", str(lr_out),
            )
            assert code == 0
            outputs.append((out.read_bytes(), lr_out.read_bytes()))
        assert outputs[0] == outputs[1]
        payload = json.loads(outputs[0][0])
        row = payload["rows"][0]
        assert row["theory_var"] == pytest.approx(1.0)
        assert row["failures"] == 0
        lr_lines = outputs[0][1].decode().splitlines()
        assert lr_lines[0] == "n,replicate,lr"
        assert len(lr_lines) == 101


class TestDecomposeCommand:
    def test_residual_small(self, tmp_path, capsys):
        out = tmp_path / "dec.json"
        code, _, _ = run_cli(
            capsys,
            "decompose", "--theta", "1", "--sigma", "1", "--lambda", "1",
            "--u", "1", "--v", "1", "--w", "1",
            "--n", "500", "--delta", "0.02", "--seed", "11", "--out", str(out),
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["residual"] < 1e-6
        assert set(payload["totals"]) == {"xi", "h", "eta", "m_term", "beta", "r"}


class TestBoundsCommand:
    def test_sweep_csv_and_summary(self, tmp_path, capsys):
        out = tmp_path / "bounds.csv"
        summary = tmp_path / "summary.json"
        code, _, _ = run_cli(
            capsys,
            "bounds", "--alpha", "0.25", "--p", "0",
            "--deltas", "0.02,0.01,0.005,0.002", "--draws", "20000",
            "--seed", "5", "--out", str(out), "--summary-out", str(summary),
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "delta,alpha,p,m1_hat,m1_se,m2_hat,m2_se,slope"
        assert len(lines) == 5
        payload = json.loads(summary.read_text())
        assert payload["decay"]["slope"] < 0
        assert all(chk["violations"] == 0 for chk in payload["inequality_checks"] if chk["delta_strict"])


class TestMleCommand:
    def test_fit_from_increments_csv(self, tmp_path, capsys):
        grid = SamplingGrid(4000, 0.02)
        dx = simulate_path(UNIT, grid, SeedSpec(31, 0)).increments()
        data = tmp_path / "inc.csv"
        with open(data, "w") as fh:
            fh.write(f"# delta={grid.delta}\nincrement\n")
            for v in dx:
                fh.write(f"{v:.17g}\n")
        out = tmp_path / "est.json"
        code, _, _ = run_cli(capsys, "mle", "--input", str(data), "--out", str(out))
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["converged"]
        assert abs(payload["theta"] - 1.0) < 1.0
        assert abs(payload["sigma"] - 1.0) < 0.3
        assert abs(payload["lambda"] - 1.0) < 1.0

    def test_fit_from_path_csv(self, tmp_path, capsys):
        grid = SamplingGrid(2000, 0.02)
        path = simulate_path(UNIT, grid, SeedSpec(37, 0))
        data = tmp_path / "path.csv"
        with open(data, "w") as fh:
            write_path_csv(path, fh)
        code, stdout, _ = run_cli(
            capsys,
            "mle", "--input", str(data), "--path-csv", "--delta", str(grid.delta),
        )
        assert code == 0
        # result printed to stdout after the config echo
        decoder = json.JSONDecoder()
        _, end = decoder.raw_decode(stdout)
        payload = decoder.raw_decode(stdout[end:].lstrip())[0]
        assert payload["n_increments"] == 2000
        assert payload["converged"]
