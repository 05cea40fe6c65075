"""Competition-class weight network.

Competitor sequences are grouped into equivalence classes keyed by the
parameters active at each round (at minimum the currently selected
expert). A transition kernel is a Markov prior over class successions:
its initial distribution plus row-stochastic transition weights
implicitly assign a prior weight to every competitor sequence, and the
negative log of that path weight measures how hard the competitor is to
track.

Class weights live in the natural-log domain: the exponential update can
reach ``exp(-eta * M * range / eps)`` scales that underflow linear
arithmetic. Each update applies the exponential step at the previous
learning rate, rescales the accumulated mass by the rate ratio so that
past updates stay consistent when the rate drops, then mixes through the
kernel.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

SUM_TOLERANCE = 1e-9
RATE_INCREASE_SLACK = 1e-12


class ClassNetError(ValueError):
    """Base class for class-network errors."""


class EmptyClassSetError(ClassNetError):
    """No class carries positive weight."""


class RateIncreaseError(ClassNetError):
    """Learning rates must be non-increasing."""


class NegativePhiError(ClassNetError):
    """Loss estimates fed to the weight update must be nonnegative."""


class ZeroTransitionError(ClassNetError):
    """A competitor sequence leaves the kernel's support."""


def logsumexp(a: np.ndarray, axis: int | None = None):
    """log(sum(exp(a))) with max-subtraction; tolerates -inf entries."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.exp(a - safe).sum(axis=axis, keepdims=True)) + safe
    if axis is None:
        return float(s.reshape(()))
    return np.squeeze(s, axis=axis)


@dataclass(frozen=True, order=True)
class ClassId:
    """Equivalence-class key: the current expert plus an opaque extension tag
    for kernels whose classes carry extra parameters."""

    expert: int
    tag: str | None = None


class TransitionKernel(ABC):
    """Markov prior over equivalence-class successions.

    ``class_set(t)`` enumerates the classes available at round ``t >= 1``;
    ``initial_prior`` is the distribution over ``class_set(1)``; and
    ``transition`` gives the row distribution from a class at round ``t``
    to ``class_set(t + 1)``. ``max_class_count(T)`` is the largest class
    set among rounds ``0..T-1``, where round 0 is the virtual root (size 1).
    Kernels are immutable and freely shareable across runs.
    """

    @property
    @abstractmethod
    def n_experts(self) -> int: ...

    @abstractmethod
    def class_set(self, t: int) -> tuple[ClassId, ...]: ...

    @abstractmethod
    def initial_prior(self) -> np.ndarray: ...

    @abstractmethod
    def transition(self, class_id: ClassId, t: int) -> dict[ClassId, float]: ...

    @abstractmethod
    def max_class_count(self, horizon: int) -> int: ...

    # Dense views used by the weight update. The generic implementations
    # rebuild arrays on every call; concrete kernels cache them.

    def class_index(self, t: int) -> dict[ClassId, int]:
        return {c: i for i, c in enumerate(self.class_set(t))}

    def class_experts(self, t: int) -> np.ndarray:
        return np.array([c.expert for c in self.class_set(t)], dtype=int)

    def log_transition_matrix(self, t: int) -> np.ndarray:
        """Log transition weights, rows over class_set(t), columns over
        class_set(t + 1); zero weights map to -inf."""
        rows = self.class_set(t)
        cols = self.class_index(t + 1)
        out = np.zeros((len(rows), len(cols)))
        for i, c in enumerate(rows):
            for succ, w in self.transition(c, t).items():
                out[i, cols[succ]] = w
        with np.errstate(divide="ignore"):
            return np.log(out)

    def unique_class_for_expert(self, t: int, expert: int) -> ClassId:
        matches = [c for c in self.class_set(t) if c.expert == expert]
        if len(matches) != 1:
            raise ClassNetError(
                f"expert {expert} maps to {len(matches)} classes at round {t}; "
                "an explicit class sequence is required"
            )
        return matches[0]

    def path_log_factors(self, classes: tuple[ClassId, ...]) -> np.ndarray:
        """Per-round log prior factors of a class path; the round-1 factor is
        the initial prior."""
        if not classes:
            raise ClassNetError("empty competitor sequence")
        idx1 = self.class_index(1)
        if classes[0] not in idx1:
            raise ZeroTransitionError(f"{classes[0]} is not in the round-1 class set")
        first = float(self.initial_prior()[idx1[classes[0]]])
        if first <= 0.0:
            raise ZeroTransitionError(f"{classes[0]} has zero initial prior")
        factors = [math.log(first)]
        for t in range(2, len(classes) + 1):
            weight = self.transition(classes[t - 2], t - 1).get(classes[t - 1], 0.0)
            if weight <= 0.0:
                raise ZeroTransitionError(
                    f"zero transition weight into {classes[t - 1]} at round {t}"
                )
            factors.append(math.log(weight))
        return np.array(factors)


class TableKernel(TransitionKernel):
    """Time-invariant kernel given by an explicit class list, an initial
    prior, and one row-stochastic transition table."""

    def __init__(
        self,
        classes: tuple[ClassId, ...] | list[ClassId],
        prior: np.ndarray,
        matrix: np.ndarray,
        n_experts: int | None = None,
    ):
        classes = tuple(classes)
        if not classes:
            raise EmptyClassSetError("kernel needs at least one class")
        if len(set(classes)) != len(classes):
            raise ClassNetError("duplicate class ids in kernel")
        prior = np.asarray(prior, dtype=float)
        matrix = np.asarray(matrix, dtype=float)
        n = len(classes)
        if prior.shape != (n,):
            raise ClassNetError(f"prior has shape {prior.shape}, expected ({n},)")
        if matrix.shape != (n, n):
            raise ClassNetError(f"transition table has shape {matrix.shape}, expected ({n}, {n})")
        if np.any(prior < 0.0) or np.any(matrix < 0.0):
            raise ClassNetError("kernel weights must be nonnegative")
        if abs(prior.sum() - 1.0) > SUM_TOLERANCE:
            raise ClassNetError(f"initial prior sums to {prior.sum():.12g}, not 1")
        row_sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(row_sums - 1.0) > SUM_TOLERANCE)
        if bad.size:
            raise ClassNetError(
                f"transition row {bad[0]} sums to {row_sums[bad[0]]:.12g}, not 1"
            )
        experts = np.array([c.expert for c in classes], dtype=int)
        inferred = int(experts.max()) + 1
        self._n_experts = inferred if n_experts is None else int(n_experts)
        if np.any(experts < 0) or np.any(experts >= self._n_experts):
            raise ClassNetError("class expert index out of range")
        self._classes = classes
        self._prior = prior
        self._matrix = matrix
        self._experts = experts
        self._index = {c: i for i, c in enumerate(classes)}
        with np.errstate(divide="ignore"):
            self._log_matrix = np.log(matrix)
        by_expert: dict[int, list[ClassId]] = {}
        for c in classes:
            by_expert.setdefault(c.expert, []).append(c)
        self._by_expert = by_expert

    @property
    def n_experts(self) -> int:
        return self._n_experts

    def class_set(self, t: int) -> tuple[ClassId, ...]:
        return self._classes

    def initial_prior(self) -> np.ndarray:
        return self._prior

    def transition(self, class_id: ClassId, t: int) -> dict[ClassId, float]:
        row = self._matrix[self._index[class_id]]
        return {c: float(w) for c, w in zip(self._classes, row) if w > 0.0}

    def max_class_count(self, horizon: int) -> int:
        # |class_set(0)| = 1 (virtual root), so a one-round horizon sees
        # only the root.
        if horizon < 1:
            raise ClassNetError("horizon must be at least 1")
        return 1 if horizon == 1 else len(self._classes)

    def class_index(self, t: int) -> dict[ClassId, int]:
        return self._index

    def class_experts(self, t: int) -> np.ndarray:
        return self._experts

    def log_transition_matrix(self, t: int) -> np.ndarray:
        return self._log_matrix

    def unique_class_for_expert(self, t: int, expert: int) -> ClassId:
        matches = self._by_expert.get(expert, [])
        if len(matches) != 1:
            raise ClassNetError(
                f"expert {expert} maps to {len(matches)} classes; "
                "an explicit class sequence is required"
            )
        return matches[0]

    def path_log_factors(self, classes: tuple[ClassId, ...]) -> np.ndarray:
        pos = np.array([self._index[c] for c in classes], dtype=int)
        logs = np.empty(len(classes))
        with np.errstate(divide="ignore"):
            logs[0] = np.log(self._prior[pos[0]])
            if len(classes) > 1:
                logs[1:] = self._log_matrix[pos[:-1], pos[1:]]
        if not np.all(np.isfinite(logs)):
            t = int(np.flatnonzero(~np.isfinite(logs))[0])
            raise ZeroTransitionError(
                f"zero prior weight into {classes[t]} at round {t + 1}"
            )
        return logs


def fixed_kernel(n_experts: int) -> TableKernel:
    """Fixed competition: one class per expert, uniform prior, identity
    transitions."""
    classes = tuple(ClassId(m) for m in range(n_experts))
    prior = np.full(n_experts, 1.0 / n_experts)
    return TableKernel(classes, prior, np.eye(n_experts), n_experts)


def fixed_share_kernel(n_experts: int, alpha: float) -> TableKernel:
    """Switching competition: stay with weight ``1 - alpha``, move to each
    other expert with weight ``alpha / (M - 1)``; uniform prior."""
    if not 0.0 <= alpha <= 1.0:
        raise ClassNetError(f"alpha must be in [0, 1], got {alpha}")
    if n_experts == 1:
        if alpha > 0.0:
            raise ClassNetError("alpha must be 0 with a single expert")
        return fixed_kernel(1)
    matrix = np.full((n_experts, n_experts), alpha / (n_experts - 1))
    for m in range(n_experts):
        matrix[m, m] = 1.0 - alpha
        # one compensation pass keeps the row sum at 1.0 to the last ulp
        matrix[m, m] += 1.0 - matrix[m].sum()
    classes = tuple(ClassId(m) for m in range(n_experts))
    prior = np.full(n_experts, 1.0 / n_experts)
    return TableKernel(classes, prior, matrix, n_experts)


@dataclass(frozen=True, eq=False)
class ClassWeights:
    """Log-domain weights over the currently active classes at round ``round``.

    Zero-weight classes are dropped, so every stored log weight is finite.
    All downstream probabilities are invariant to adding a constant to
    every log weight. ``experts`` mirrors ``classes`` and may be passed in
    precomputed (kernels cache it); it is derived otherwise.
    """

    classes: tuple[ClassId, ...]
    log_w: np.ndarray
    round: int
    n_experts: int
    experts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        log_w = np.asarray(self.log_w, dtype=float)
        if len(self.classes) != log_w.shape[0]:
            raise ClassNetError("classes and log weights disagree in length")
        if log_w.size and not np.all(np.isfinite(log_w)):
            raise ClassNetError("log weights must be finite; drop zero-weight classes")
        object.__setattr__(self, "log_w", log_w)
        if self.experts is None:
            object.__setattr__(
                self, "experts", np.array([c.expert for c in self.classes], dtype=int)
            )

    def as_dict(self) -> dict[ClassId, float]:
        return dict(zip(self.classes, self.log_w.tolist()))


def init_weights(kernel: TransitionKernel) -> ClassWeights:
    """Round-1 weights: the log of the kernel's initial prior, with
    zero-prior classes dropped."""
    classes = kernel.class_set(1)
    if not classes:
        raise EmptyClassSetError("kernel has an empty round-1 class set")
    prior = kernel.initial_prior()
    keep = prior > 0.0
    if not keep.any():
        raise EmptyClassSetError("initial prior carries no mass")
    if keep.all():
        return ClassWeights(
            classes, np.log(prior), 1, kernel.n_experts, kernel.class_experts(1)
        )
    kept = tuple(c for c, k in zip(classes, keep) if k)
    return ClassWeights(kept, np.log(prior[keep]), 1, kernel.n_experts)


def advance(
    weights: ClassWeights,
    phi: np.ndarray,
    eta_prev: float,
    eta_new: float,
    kernel: TransitionKernel,
) -> ClassWeights:
    """One weight update: exponential step, rate-ratio power correction,
    kernel mixing.

    In the log domain: ``log z = log w - eta_prev * phi[expert]`` per class,
    then for each successor class the new log weight is the logsumexp over
    predecessors of ``log T(succ | pred) + (eta_new / eta_prev) * log z``.
    The result is shifted so its maximum is 0, which leaves probabilities
    untouched.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0.0):
        raise NegativePhiError(f"loss estimates must be nonnegative, got min {phi.min()}")
    if eta_prev <= 0.0 or eta_new <= 0.0:
        raise ClassNetError("learning rates must be positive")
    if eta_new > eta_prev * (1.0 + RATE_INCREASE_SLACK):
        raise RateIncreaseError(f"rate increased from {eta_prev} to {eta_new}")
    t = weights.round
    full_matrix = kernel.log_transition_matrix(t)
    if weights.classes is kernel.class_set(t):
        rows = full_matrix
    else:
        index = kernel.class_index(t)
        positions = np.fromiter(
            (index[c] for c in weights.classes), dtype=int, count=len(weights.classes)
        )
        rows = full_matrix[positions, :]
    log_z = weights.log_w - eta_prev * phi[weights.experts]
    scaled = (eta_new / eta_prev) * log_z
    new_log = logsumexp(rows + scaled[:, None], axis=0)
    keep = np.isfinite(new_log)
    if not keep.any():
        raise EmptyClassSetError(f"all classes lost their mass advancing to round {t + 1}")
    successors = kernel.class_set(t + 1)
    if keep.all():
        out = new_log - new_log.max()
        return ClassWeights(
            successors, out, t + 1, weights.n_experts, kernel.class_experts(t + 1)
        )
    kept = tuple(c for c, k in zip(successors, keep) if k)
    out = new_log[keep]
    out = out - out.max()
    return ClassWeights(kept, out, t + 1, weights.n_experts)


def expert_marginals(weights: ClassWeights) -> np.ndarray:
    """Probability over experts obtained by summing class weights per expert
    and normalizing. Experts with no active class get probability 0."""
    if not weights.classes:
        raise EmptyClassSetError("cannot marginalize empty weights")
    # exponentiate against the max before grouping; log weights are kept
    # max-normalized by advance, so this is as stable as a grouped logsumexp
    mass = np.exp(weights.log_w - weights.log_w.max())
    per_expert = np.bincount(weights.experts, weights=mass, minlength=weights.n_experts)
    return per_expert / per_expert.sum()


@dataclass(frozen=True, eq=False)
class CompetitorSequence:
    """A deterministic class path; its expert components form the selection
    sequence the learner is scored against."""

    classes: tuple[ClassId, ...]
    experts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "experts", np.array([c.expert for c in self.classes], dtype=int)
        )

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def n_switches(self) -> int:
        return int(np.count_nonzero(self.experts[1:] != self.experts[:-1]))

    @classmethod
    def from_experts(
        cls, experts: np.ndarray | list[int], kernel: TransitionKernel
    ) -> "CompetitorSequence":
        classes = tuple(
            kernel.unique_class_for_expert(t + 1, int(e)) for t, e in enumerate(experts)
        )
        return cls(classes)


def complexity(kernel: TransitionKernel, competitor: CompetitorSequence) -> float:
    """Tracking complexity of a competitor: log of the largest class-set
    size seen, minus the log prior weight of its class path (the initial
    prior is the round-1 factor).

    Raises ``ZeroTransitionError`` if the path leaves the kernel's support.
    """
    factors = kernel.path_log_factors(competitor.classes)
    return math.log(kernel.max_class_count(len(competitor))) - float(factors.sum())
