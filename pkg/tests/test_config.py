import numpy as np
import pytest

from partialmix.classnet import ClassId
from partialmix.config import ConfigError, load_config, parse_config
from partialmix.environment import IIDLosses, PiecewiseLosses, ScriptedLosses


def base_config(**overrides):
    config = {
        "experts": 2,
        "horizon": 5,
        "kernel": {"type": "fixed"},
        "w_budget": 1.0,
        "loss": {"kind": "iid", "range": [0.0, 1.0], "arms": [
            {"dist": "uniform", "low": 0.0, "high": 0.5},
            {"dist": "bernoulli", "p": 0.4},
        ]},
        "feedback": {"kind": "bandit"},
        "competitor": {"kind": "best_fixed"},
        "seed": 3,
        "runs": 2,
    }
    config.update(overrides)
    return config


class TestParseConfig:
    def test_minimal_roundtrip(self):
        cfg = parse_config(base_config())
        assert cfg.n_experts == 2 and cfg.horizon == 5
        assert isinstance(cfg.loss_process, IIDLosses)
        assert cfg.learner.gamma_value == 1.0
        assert cfg.seed == 3 and cfg.runs == 2

    def test_fixed_share_kernel(self):
        cfg = parse_config(base_config(kernel={"type": "fixed_share", "alpha": 0.1}))
        row = cfg.learner.kernel.transition(ClassId(0), 1)
        assert row[ClassId(0)] == pytest.approx(0.9)

    def test_custom_kernel_one_based_experts(self):
        kernel_spec = {
            "type": "custom",
            "classes": [{"expert": 1}, {"expert": 2, "tag": "x"}],
            "prior": [0.7, 0.3],
            "transitions": [[0.6, 0.4], [0.5, 0.5]],
        }
        cfg = parse_config(base_config(kernel=kernel_spec))
        assert cfg.learner.kernel.class_set(1) == (ClassId(0), ClassId(1, "x"))

    def test_scripted_losses_and_explicit_competitor(self):
        values = [[0.1, 0.9]] * 5
        cfg = parse_config(
            base_config(
                loss={"kind": "scripted", "range": [0, 1], "values": values},
                competitor={"kind": "explicit", "sequence": [1, 1, 2, 2, 1]},
            )
        )
        assert isinstance(cfg.loss_process, ScriptedLosses)
        assert cfg.competitor.sequence == (0, 0, 1, 1, 0)

    def test_piecewise_losses(self):
        cfg = parse_config(
            base_config(
                loss={
                    "kind": "piecewise", "range": [0, 1],
                    "best_arms": [1, 2], "boundaries": [0.5], "gap": 0.3,
                }
            )
        )
        assert isinstance(cfg.loss_process, PiecewiseLosses)
        np.testing.assert_array_equal(cfg.loss_process.best_arm_path(4), [0, 0, 1, 1])

    def test_scripted_feedback(self):
        matrices = [[[1.0, 0.0], [0.0, 1.0]]] * 5
        cfg = parse_config(base_config(feedback={"kind": "scripted", "matrices": matrices}))
        cfg.feedback_process.check_horizon(5)

    def test_epsilon_schedule_override(self):
        cfg = parse_config(base_config(epsilon=[1.0, 0.8, 0.6, 0.5, 0.5]))
        assert cfg.learner.epsilon_at(3) == 0.6

    def test_sweep_block(self):
        cfg = parse_config(base_config(sweep={"horizons": [4, 5], "runs": 3}))
        assert cfg.sweep_horizons == (4, 5) and cfg.sweep_runs == 3


class TestDiagnostics:
    def test_row_sum_error_names_the_row(self):
        bad = base_config(
            feedback={"kind": "constant", "matrix": [[0.6, 0.3], [0.3, 0.7]]}
        )
        with pytest.raises(ConfigError, match=r"feedback\.matrix.*row 0"):
            parse_config(bad)

    def test_missing_field_names_path(self):
        bad = base_config()
        del bad["kernel"]
        with pytest.raises(ConfigError, match="kernel"):
            parse_config(bad)

    def test_expert_index_range_checked(self):
        bad = base_config(competitor={"kind": "fixed", "expert": 3})
        with pytest.raises(ConfigError, match=r"competitor\.expert"):
            parse_config(bad)

    def test_horizon_longer_than_script(self):
        bad = base_config(
            loss={"kind": "scripted", "range": [0, 1], "values": [[0.1, 0.2]] * 3}
        )
        with pytest.raises(ConfigError, match="loss"):
            parse_config(bad)

    def test_explicit_sequence_length_checked(self):
        bad = base_config(competitor={"kind": "explicit", "sequence": [1, 2]})
        with pytest.raises(ConfigError, match=r"competitor\.sequence"):
            parse_config(bad)

    def test_missing_budget_and_gamma(self):
        bad = base_config()
        del bad["w_budget"]
        with pytest.raises(ConfigError, match="gamma or w_budget"):
            parse_config(bad)

    def test_loss_csv_loading(self, tmp_path):
        csv_path = tmp_path / "losses.csv"
        csv_path.write_text("0.1,0.2\n0.3,0.4\n0.5,0.6\n0.7,0.8\n0.9,1.0\n")
        cfg = parse_config(
            base_config(loss={"kind": "scripted", "range": [0, 1], "csv": str(csv_path)})
        )
        values = cfg.loss_process.generate(5, np.random.default_rng(0))
        assert values[0, 1] == 0.2

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"experts": 2,\n  "horizon": }\n')
        with pytest.raises(ConfigError, match="line 2"):
            load_config(path)
