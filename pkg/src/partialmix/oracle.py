"""Brute-force reference computations for tiny instances.

``enumerate_weights`` sums explicit class-path weights in the linear
domain, validating the log-domain class recursion at a fixed learning
rate (with adaptive rates the power of a sum is not the sum of powers, so
path weights are only defined at class granularity). ``exact_expected_regret``
walks the full selection-times-indicator outcome tree, validating the
Monte-Carlo estimate. Both are wired into the CLI ``validate`` subcommand
so the equivalences are reproducible without a test framework.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .classnet import TransitionKernel
from .environment import FeedbackProcess
from .feedback import ObservationOutcome
from .learner import LearnerConfig, finish_round, init_state, prepare_round


class PathExplosionError(ValueError):
    """The class-path product space exceeds the enumeration guard."""


class OutcomeExplosionError(ValueError):
    """The selection/observation outcome tree exceeds the enumeration guard."""


@dataclass(frozen=True)
class EnumerationLimit:
    max_paths: int = 10**6
    max_outcomes: int = 10**6

    def __post_init__(self) -> None:
        if self.max_paths < 1 or self.max_outcomes < 1:
            raise ValueError("enumeration limits must be positive")


DEFAULT_LIMIT = EnumerationLimit()


def enumerate_weights(
    kernel: TransitionKernel,
    phi_history: np.ndarray,
    eta: float,
    limit: EnumerationLimit = DEFAULT_LIMIT,
) -> np.ndarray:
    """Expert marginals after the given estimate history at a fixed rate,
    by explicit path enumeration.

    Sums, over every class path lambda_1..lambda_{T+1}, the product of its
    prior weight and ``exp(-eta * sum_t phi[t, expert(lambda_t)])``, then
    marginalizes the round-``T+1`` class to its expert. ``phi_history`` has
    shape (T, M); T = 0 returns the initial prior marginals.
    """
    phi_history = np.asarray(phi_history, dtype=float)
    if phi_history.ndim != 2:
        raise ValueError("phi history must have shape (T, M)")
    horizon = phi_history.shape[0]
    if eta <= 0.0:
        raise ValueError("the fixed rate must be positive")
    sets = [kernel.class_set(t) for t in range(1, horizon + 2)]
    n_paths = math.prod(len(s) for s in sets)
    if n_paths > limit.max_paths:
        raise PathExplosionError(f"{n_paths} class paths exceed the limit {limit.max_paths}")
    prior = kernel.initial_prior()
    index_1 = kernel.class_index(1)
    marginals = np.zeros(kernel.n_experts)
    for path in product(*sets):
        weight = float(prior[index_1[path[0]]])
        if weight == 0.0:
            continue
        for t in range(1, horizon + 1):
            weight *= kernel.transition(path[t - 1], t).get(path[t], 0.0)
            if weight == 0.0:
                break
        if weight == 0.0:
            continue
        exponent = sum(phi_history[t, path[t].expert] for t in range(horizon))
        marginals[path[horizon].expert] += weight * math.exp(-eta * exponent)
    total = marginals.sum()
    if total <= 0.0:
        raise ValueError("all enumerated paths carry zero weight")
    return marginals / total


def exact_expected_regret(
    config: LearnerConfig,
    losses: np.ndarray,
    feedback_process: FeedbackProcess,
    competitor_experts: np.ndarray | list[int],
    limit: EnumerationLimit = DEFAULT_LIMIT,
) -> float:
    """Exact expected realized regret on a tiny scripted instance.

    Enumerates every (selection, observation-indicator) combination with
    its probability, advancing the learner deterministically along each
    branch; the losses are fixed, so the expectation is over the learner's
    randomness only.
    """
    losses = np.asarray(losses, dtype=float)
    horizon, m = losses.shape
    competitor_experts = np.asarray(competitor_experts, dtype=int)
    if competitor_experts.shape != (horizon,):
        raise ValueError("competitor must cover exactly the scripted horizon")
    visited = 0

    def recurse(state, t: int, probability: float, learner_loss: float) -> float:
        nonlocal visited
        if t > horizon:
            return probability * learner_loss
        ctx = prepare_round(state, config, feedback_process.matrix_at(t))
        row = losses[t - 1]
        total = 0.0
        for i in range(m):
            q_i = float(ctx.q[i])
            if q_i == 0.0:
                continue
            column = feedback_process.matrix_at(t).entries[:, i]
            for pattern in product((0, 1), repeat=m):
                branch = q_i
                for mm, bit in enumerate(pattern):
                    branch *= column[mm] if bit else 1.0 - column[mm]
                    if branch == 0.0:
                        break
                if branch == 0.0:
                    continue
                visited += 1
                if visited > limit.max_outcomes:
                    raise OutcomeExplosionError(
                        f"outcome tree exceeds the limit {limit.max_outcomes}"
                    )
                indicators = np.array(pattern, dtype=np.int8)
                observed = {mm: float(row[mm]) for mm in np.flatnonzero(indicators)}
                outcome = ObservationOutcome(indicators, observed)
                _, next_state = finish_round(state, config, ctx, i, outcome)
                total += recurse(
                    next_state, t + 1, probability * branch, learner_loss + row[i]
                )
        return total

    expected_loss = recurse(init_state(config), 1, 1.0, 0.0)
    competitor_loss = float(losses[np.arange(horizon), competitor_experts].sum())
    return expected_loss - competitor_loss
