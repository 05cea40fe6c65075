import json

import pytest

from partialmix.cli import main


def write_config(tmp_path, **overrides):
    config = {
        "experts": 3,
        "horizon": 60,
        "kernel": {"type": "fixed_share", "alpha": 0.05},
        "w_budget": 12.0,
        "loss": {
            "kind": "piecewise", "range": [0.0, 1.0],
            "best_arms": [1, 2], "boundaries": [0.5],
        },
        "feedback": {"kind": "bandit"},
        "competitor": {"kind": "best_k_switch", "switches": 1},
        "seed": 11,
        "runs": 4,
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestRun:
    def test_writes_csv_and_report(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        rounds = (out / "rounds.csv").read_text().splitlines()
        header = rounds[0].split(",")
        assert header[:13] == [
            "run", "t", "epsilon", "eta", "psi", "V", "D", "i_t", "loss",
            "cum_loss", "competitor_arm", "competitor_loss", "regret",
        ]
        assert header[13:] == ["q_1", "q_2", "q_3"]
        assert len(rounds) == 61
        report = json.loads((out / "report.json").read_text())
        assert {"realized_regret", "normalized_regret", "complexity",
                "bound_theorem", "diagnostics"} <= report.keys()
        assert all(v["passed"] for v in report["diagnostics"].values())

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(path), "--out", str(out2)]) == 0
        assert (out1 / "rounds.csv").read_bytes() == (out2 / "rounds.csv").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["run", "--config", str(path), "--out", str(out1)])
        main(["run", "--config", str(path), "--out", str(out2), "--seed", "99"])
        assert (out1 / "rounds.csv").read_bytes() != (out2 / "rounds.csv").read_bytes()

    def test_equal_losses_zero_regret(self, tmp_path):
        path = write_config(
            tmp_path,
            loss={"kind": "scripted", "range": [0, 1], "values": [[0.5, 0.5, 0.5]] * 60},
            competitor={"kind": "fixed", "expert": 2},
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["realized_regret"] == pytest.approx(0.0, abs=1e-9)

    def test_malformed_config_exits_2(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            feedback={"kind": "constant", "matrix": [[0.6, 0.3, 0.0], [0.3, 0.7, 0.0], [0.0, 0.0, 1.0]]},
        )
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
        err = capsys.readouterr().err
        assert "row 0" in err


class TestBatch:
    def test_batch_summary(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["batch", "--config", str(path), "--out", str(out)]) == 0
        summary = json.loads((out / "batch.json").read_text())
        assert summary["n_seeds"] == 4
        assert summary["std_error_defined"] is True
        low, high = summary["confidence_interval"]
        assert low <= summary["mean_regret"] <= high

    def test_write_rounds_per_run(self, tmp_path):
        path = write_config(tmp_path, write_rounds=True, runs=2)
        out = tmp_path / "out"
        assert main(["batch", "--config", str(path), "--out", str(out)]) == 0
        assert (out / "run_0000.csv").exists() and (out / "run_0001.csv").exists()
        assert (out / "batch.json").exists()

    def test_runs_override(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["batch", "--config", str(path), "--out", str(out), "--runs", "2"]) == 0
        assert json.loads((out / "batch.json").read_text())["n_seeds"] == 2


class TestSweep:
    def test_scaling_outputs(self, tmp_path):
        path = write_config(
            tmp_path, sweep={"horizons": [32, 48, 64, 96], "runs": 3}
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "scaling.csv").read_text().splitlines()
        assert lines[0].split(",")[:3] == ["T", "mean_regret", "std_error"]
        assert len(lines) == 5
        payload = json.loads((out / "sweep.json").read_text())
        assert payload["horizons"] == [32, 48, 64, 96]
        assert "slope" in payload

    def test_sweep_requires_block(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "x")]) == 2


class TestValidate:
    def test_default_suite_passes(self, tmp_path, capsys):
        code = main(["validate"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 3
        assert "FAIL" not in out

    def test_options_from_config(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            validate={"oracle_instances": 5, "lemma_configs": 3,
                      "lemma_horizon": 100, "affine_horizon": 100},
        )
        assert main(["validate", "--config", str(path)]) == 0
        assert capsys.readouterr().out.count("PASS") == 3

    def test_failures_exit_1(self, monkeypatch, capsys):
        from partialmix import cli
        from partialmix.validation import CheckResult

        monkeypatch.setattr(
            cli, "run_validation_suite",
            lambda **kwargs: [CheckResult("broken", False, "synthetic failure")],
        )
        assert main(["validate"]) == 1
        assert "FAIL broken" in capsys.readouterr().out
