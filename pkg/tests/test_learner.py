import math

import numpy as np
import pytest

from partialmix.classnet import ClassId, TableKernel, fixed_kernel, fixed_share_kernel
from partialmix.feedback import (
    FeedbackMatrix,
    ObservationOutcome,
    full_feedback,
    identity_feedback,
)
from partialmix.learner import (
    LearnerConfig,
    LearnerState,
    ZeroObservationProbabilityError,
    epsilon_schedule,
    estimate,
    init_state,
    policy,
    select,
    step,
    update_rate,
)


def bandit_config(m=2, w=1.0, **kwargs):
    return LearnerConfig(n_experts=m, kernel=fixed_kernel(m), w_budget=w, **kwargs)


def play(config, matrix, losses, seed=0):
    """Drive the learner directly over a scripted loss matrix."""
    rng = np.random.default_rng(seed)
    state = init_state(config)
    records = []
    for t in range(losses.shape[0]):
        row = losses[t]
        record, state = step(state, config, matrix, lambda m: row[m], rng)
        records.append(record)
    return records, state


class TestEpsilonSchedule:
    def test_clamp_boundary(self):
        assert epsilon_schedule(8, 1.0, 8) == pytest.approx(1.0, abs=1e-12)

    def test_cube_root_decay(self):
        assert epsilon_schedule(1, 1.0, 1000) == pytest.approx(0.1, abs=1e-12)

    def test_clamped_at_one(self):
        assert epsilon_schedule(1, 1.0, 1) == 1.0

    def test_nonincreasing(self):
        values = [epsilon_schedule(4, 7.0, t) for t in range(1, 500)]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


class TestPolicy:
    def test_full_mixing_is_uniform(self):
        kernel = TableKernel(
            (ClassId(0), ClassId(1)), np.array([0.9, 0.1]), np.eye(2), 2
        )
        config = LearnerConfig(n_experts=2, kernel=kernel, gamma=1.0, epsilon=1.0)
        np.testing.assert_allclose(policy(init_state(config), config), [0.5, 0.5])

    def test_no_mixing_returns_marginals(self):
        kernel = TableKernel(
            (ClassId(0), ClassId(1)), np.array([0.9, 0.1]), np.eye(2), 2
        )
        config = LearnerConfig(n_experts=2, kernel=kernel, gamma=1.0, epsilon=0.0)
        np.testing.assert_allclose(policy(init_state(config), config), [0.9, 0.1], rtol=1e-12)

    def test_hand_mixture(self):
        kernel = TableKernel(
            (ClassId(0), ClassId(1)), np.array([0.9, 0.1]), np.eye(2), 2
        )
        config = LearnerConfig(n_experts=2, kernel=kernel, gamma=1.0, epsilon=0.5)
        np.testing.assert_allclose(policy(init_state(config), config), [0.7, 0.3], rtol=1e-12)

    def test_floor_holds_for_every_round(self):
        config = bandit_config(4, w=2.0)
        state = init_state(config)
        for t in (1, 10, 100, 10_000):
            object.__setattr__(state, "t", t)
            q = policy(state, config)
            assert np.all(q >= config.epsilon_at(t) / 4)


class TestSelect:
    def test_degenerate(self):
        rng = np.random.default_rng(0)
        assert all(select(np.array([1.0, 0.0, 0.0]), rng) == 0 for _ in range(50))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(1)
        m, n = 4, 10**5
        counts = np.bincount(
            [select(np.full(m, 0.25), rng) for _ in range(n)], minlength=m
        )
        four_se = 4 * math.sqrt(0.25 * 0.75 / n)
        np.testing.assert_allclose(counts / n, 0.25, atol=four_se)

    def test_deterministic_given_seed(self):
        q = np.array([0.3, 0.4, 0.3])
        a = [select(q, np.random.default_rng(5)) for _ in range(10)]
        b = [select(q, np.random.default_rng(5)) for _ in range(10)]
        assert a == b


class TestEstimate:
    def test_unobserved_is_zero(self):
        outcome = ObservationOutcome(np.array([0, 1]), {1: 0.7})
        phi = estimate(outcome, np.array([0.5, 0.5]), 0.7)
        assert phi[0] == 0.0

    def test_minimum_attains_zero(self):
        outcome = ObservationOutcome(np.array([1, 0]), {0: 0.4})
        phi = estimate(outcome, np.array([0.8, 0.2]), 0.4)
        np.testing.assert_allclose(phi, [0.0, 0.0])

    def test_hand_value(self):
        outcome = ObservationOutcome(np.array([1, 0]), {0: 0.8})
        phi = estimate(outcome, np.array([0.5, 0.5]), 0.2)
        assert phi[0] == pytest.approx(1.2, rel=1e-12)

    def test_zero_observation_probability(self):
        outcome = ObservationOutcome(np.array([1, 0]), {0: 0.8})
        with pytest.raises(ZeroObservationProbabilityError):
            estimate(outcome, np.array([0.0, 1.0]), 0.2)


class TestUpdateRate:
    def test_all_zero_phi_keeps_rate_unset(self):
        config = bandit_config(2)
        rate = update_rate(init_state(config), np.zeros(2), np.array([0.5, 0.5]), config)
        assert rate.eta is None and rate.V == 0.0 and rate.D == 0.0

    def test_hand_statistics(self):
        config = bandit_config(2, w=1.0, gamma=1.0)
        rate = update_rate(
            init_state(config), np.array([2.0, 0.0]), np.array([0.5, 0.5]), config
        )
        assert rate.v == pytest.approx(2.0) and rate.d == pytest.approx(2.0)
        assert rate.eta == pytest.approx(1.0 / math.sqrt(6.0), rel=1e-12)

    def test_rate_formula(self):
        config = bandit_config(2, gamma=1.0)
        state = LearnerState(
            t=5, psi=0.1, V=3.0, D=1.0, eta_prev=0.9,
            weights=init_state(config).weights,
        )
        rate = update_rate(state, np.zeros(2), np.array([0.5, 0.5]), config)
        assert rate.eta == pytest.approx(0.5, rel=1e-12)

    def test_fixed_eta_short_circuits(self):
        config = bandit_config(2, fixed_eta=0.123)
        rate = update_rate(
            init_state(config), np.array([1.0, 0.0]), np.array([0.5, 0.5]), config
        )
        assert rate.eta == 0.123


class TestStep:
    def test_single_expert_forced(self):
        config = bandit_config(1)
        losses = np.random.default_rng(2).uniform(size=(50, 1))
        records, _ = play(config, identity_feedback(1), losses)
        assert all(r.selected == 0 for r in records)
        assert sum(r.selected_loss for r in records) == pytest.approx(losses.sum())

    def test_bitwise_deterministic(self):
        config = bandit_config(3, w=2.0)
        losses = np.random.default_rng(3).uniform(size=(80, 3))
        first, _ = play(config, identity_feedback(3), losses, seed=9)
        second, _ = play(config, identity_feedback(3), losses, seed=9)
        for a, b in zip(first, second):
            assert a.selected == b.selected
            assert np.array_equal(a.q, b.q)
            assert np.array_equal(a.outcome.indicators, b.outcome.indicators)
            assert a.psi_t == b.psi_t and a.eta_t == b.eta_t and a.v_t == b.v_t

    def test_monotone_state_invariants(self):
        rng = np.random.default_rng(4)
        config = LearnerConfig(n_experts=3, kernel=fixed_share_kernel(3, 0.05), w_budget=8.0)
        matrix = FeedbackMatrix(np.vstack([rng.dirichlet(np.ones(3)) for _ in range(3)]))
        losses = rng.uniform(size=(300, 3))
        records, _ = play(config, matrix, losses, seed=11)
        psi = [r.psi_t for r in records]
        assert all(b <= a for a, b in zip(psi, psi[1:]))
        etas = [r.eta_t for r in records if r.eta_t is not None]
        assert all(b <= a + 1e-15 for a, b in zip(etas, etas[1:]))
        V = [r.V for r in records]
        D = [r.D for r in records]
        assert all(b >= a for a, b in zip(V, V[1:]))
        assert all(b >= a for a, b in zip(D, D[1:]))

    def test_phi_nonnegative_and_zero_when_unobserved(self):
        rng = np.random.default_rng(5)
        config = bandit_config(4, w=3.0)
        matrix = FeedbackMatrix(np.vstack([rng.dirichlet(np.ones(4)) for _ in range(4)]))
        losses = rng.uniform(size=(200, 4))
        records, _ = play(config, matrix, losses, seed=12)
        for r in records:
            assert np.all(r.phi >= 0.0)
            assert np.all(r.phi[r.outcome.indicators == 0] == 0.0)

    def test_observation_floor_every_round(self):
        rng = np.random.default_rng(6)
        config = bandit_config(5, w=4.0)
        matrix = FeedbackMatrix(np.vstack([rng.dirichlet(np.ones(5)) for _ in range(5)]))
        losses = rng.uniform(size=(200, 5))
        records, _ = play(config, matrix, losses, seed=13)
        for r in records:
            assert np.all(r.o >= r.epsilon_t / 5 * (1 - 1e-12))
            assert np.all(r.q >= r.epsilon_t / 5)

    def test_learner_queries_only_revealed_losses(self):
        rng = np.random.default_rng(7)
        config = bandit_config(3, w=2.0)
        matrix = FeedbackMatrix(np.vstack([rng.dirichlet(np.ones(3)) for _ in range(3)]))
        losses = rng.uniform(size=(100, 3))
        play_rng = np.random.default_rng(14)
        state = init_state(config)
        total_queried = 0
        total_observed = 0
        for t in range(100):
            queried = []
            row = losses[t]

            def oracle(m):
                queried.append(m)
                return row[m]

            record, state = step(state, config, matrix, oracle, play_rng)
            revealed = set(int(i) for i in record.outcome.observed_indices)
            assert set(queried) == revealed
            assert len(queried) == len(revealed)
            total_queried += len(queried)
            total_observed += int(record.outcome.indicators.sum())
        assert total_queried == total_observed

    def test_observation_floor_violation_aborts(self):
        # an unvalidated deficient scheme trips the runtime floor check
        matrix = FeedbackMatrix(np.array([[0.1, 0.0], [0.0, 0.1]]), "strict")
        config = bandit_config(2, w=1.0)
        with pytest.raises(RuntimeError, match="floor"):
            play(config, matrix, np.full((3, 2), 0.5))

    def test_selected_loss_nan_when_hidden(self):
        # scheme that reveals only the *other* arm
        matrix = FeedbackMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), "strict")
        config = bandit_config(2, w=1.0)
        losses = np.random.default_rng(8).uniform(size=(5, 2))
        records, _ = play(config, matrix, losses, seed=15)
        for r in records:
            assert math.isnan(r.selected_loss)
            assert r.outcome.indicators[r.selected] == 0

    def test_full_feedback_fixed_eta_matches_exponential_weights(self):
        # with everything revealed, o = 1 and the identity-kernel marginals
        # collapse to a softmax of -eta * cumulative losses (the psi
        # translation is common to all experts and cancels)
        rng = np.random.default_rng(16)
        m, horizon, eta = 3, 40, 0.7
        config = LearnerConfig(
            n_experts=m, kernel=fixed_kernel(m), gamma=1.0, epsilon=0.0, fixed_eta=eta
        )
        losses = rng.uniform(size=(horizon, m))
        records, state = play(config, full_feedback(m), losses, seed=17)
        from partialmix.classnet import expert_marginals

        got = expert_marginals(state.weights)
        scores = -eta * losses.sum(axis=0)
        expected = np.exp(scores - scores.max())
        expected /= expected.sum()
        np.testing.assert_allclose(got, expected, rtol=1e-10)

        # and the path-enumeration oracle agrees on the recorded estimates
        from partialmix.oracle import enumerate_weights

        phi_history = np.stack([r.phi for r in records[:6]])
        short, _ = play(config, full_feedback(m), losses[:6], seed=17)
        np.testing.assert_allclose(
            np.stack([r.phi for r in short]), phi_history, atol=1e-12
        )
        state6 = play(config, full_feedback(m), losses[:6], seed=17)[1]
        np.testing.assert_allclose(
            expert_marginals(state6.weights),
            enumerate_weights(config.kernel, phi_history, eta),
            rtol=1e-10,
        )


class TestLearnerConfig:
    def test_gamma_defaults_to_sqrt_budget(self):
        assert bandit_config(2, w=9.0).gamma_value == 3.0

    def test_requires_budget_or_gamma(self):
        with pytest.raises(ValueError):
            LearnerConfig(n_experts=2, kernel=fixed_kernel(2))

    def test_schedule_override_must_be_nonincreasing(self):
        with pytest.raises(ValueError, match="non-increasing"):
            LearnerConfig(
                n_experts=2, kernel=fixed_kernel(2), gamma=1.0, epsilon=[0.2, 0.5]
            )

    def test_schedule_override_lookup(self):
        config = LearnerConfig(
            n_experts=2, kernel=fixed_kernel(2), gamma=1.0, epsilon=[0.8, 0.4, 0.2]
        )
        assert config.epsilon_at(2) == 0.4
        with pytest.raises(ValueError):
            config.epsilon_at(4)

    def test_kernel_size_mismatch(self):
        with pytest.raises(ValueError, match="kernel covers"):
            LearnerConfig(n_experts=3, kernel=fixed_kernel(2), w_budget=1.0)
