"""Trust aggregation: EQOS reports -> completion probabilities.

A trust model maps everybody's subjective reports to one shared probability
of success per (performer, task). Task completions are then independent
Bernoulli events with those probabilities, which is the only joint law the
expected-value weights support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .core import (
    ABS_TOL,
    AgentId,
    Assignment,
    BundleTooLargeError,
    EqosMatrix,
    IncompleteEqosError,
    IncompleteTrustTableError,
    ReportProfile,
    TaskId,
    UnsupportedTrustModelError,
    ValuationMap,
)

WEIGHTED_SUM = "weighted_sum"
CUSTOM = "custom"

#: Exact subset enumeration is capped at this many tasks per bundle.
MAX_BUNDLE_TASKS = 16

CustomEval = Callable[[Mapping[AgentId, EqosMatrix], AgentId, TaskId], float]


@dataclass(frozen=True)
class TrustModel:
    """Aggregation rule turning EQOS matrices into a single POS estimate.

    ``monotone`` declares that every output is nondecreasing in every single
    EQOS entry; worst-case discount computations rely on it and reject models
    that do not declare it.
    """

    kind: str
    weights: Mapping[AgentId, float] | None = None
    custom_eval: CustomEval | None = None
    monotone: bool = True

    def __post_init__(self) -> None:
        if self.kind == WEIGHTED_SUM:
            if self.weights is None:
                raise UnsupportedTrustModelError("weighted-sum model needs weights")
            weights = {int(a): float(w) for a, w in self.weights.items()}
            object.__setattr__(self, "weights", weights)
            if any(w < -ABS_TOL or w > 1 + ABS_TOL for w in weights.values()):
                raise UnsupportedTrustModelError("weights must lie in [0, 1]")
            if abs(sum(weights.values()) - 1.0) > ABS_TOL:
                raise UnsupportedTrustModelError("weights must sum to 1")
        elif self.kind == CUSTOM:
            if self.custom_eval is None:
                raise UnsupportedTrustModelError("custom model needs an evaluator")
        else:
            raise UnsupportedTrustModelError(f"unknown trust model kind: {self.kind}")

    @staticmethod
    def weighted_sum(weights: Mapping[AgentId, float]) -> "TrustModel":
        return TrustModel(kind=WEIGHTED_SUM, weights=weights)

    @staticmethod
    def uniform(agents: Iterable[AgentId]) -> "TrustModel":
        """Equal-weight aggregate over all agents, the default model."""
        agents = list(agents)
        return TrustModel.weighted_sum({a: 1.0 / len(agents) for a in agents})

    @staticmethod
    def custom(fn: CustomEval, monotone: bool) -> "TrustModel":
        return TrustModel(kind=CUSTOM, custom_eval=fn, monotone=monotone)

    @staticmethod
    def self_trust() -> "TrustModel":
        """Each performer's POS is exactly its own report about itself."""

        def eval_self(matrices: Mapping[AgentId, EqosMatrix], performer: AgentId, task: TaskId) -> float:
            matrix = matrices.get(performer)
            value = matrix.get(performer, task) if matrix is not None else None
            if value is None:
                raise IncompleteEqosError(
                    f"incomplete EQOS: agent {performer} has no self report for task {task}"
                )
            return value

        return TrustModel(kind=CUSTOM, custom_eval=eval_self, monotone=True)


@dataclass(frozen=True)
class TrustTable:
    """Aggregated completion probabilities keyed by (performer, task)."""

    entries: Mapping[tuple[AgentId, TaskId], float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(self.entries))

    def prob(self, performer: AgentId, task: TaskId) -> float:
        try:
            return self.entries[(performer, task)]
        except KeyError:
            raise IncompleteTrustTableError(
                f"incomplete trust table: no entry for (performer {performer}, task {task})"
            ) from None

    def assignment_prob(self, assignment: Assignment) -> float:
        return self.prob(assignment.performer, assignment.task)


def weighted_sum_trust(
    model: TrustModel,
    eqos: Iterable[EqosMatrix],
    performer: AgentId,
    task: TaskId,
) -> float:
    """Weighted average of all reporters' estimates for one (performer, task).

    Reporters with zero weight may omit the entry; any nonzero-weight reporter
    missing it is an error rather than a silent default.
    """
    if model.kind != WEIGHTED_SUM:
        raise UnsupportedTrustModelError("weighted_sum_trust needs a weighted-sum model")
    matrices = {m.reporter: m for m in eqos}
    total = 0.0
    for reporter, weight in model.weights.items():
        if weight == 0.0:
            continue
        matrix = matrices.get(reporter)
        value = matrix.get(performer, task) if matrix is not None else None
        if value is None:
            raise IncompleteEqosError(
                f"incomplete EQOS: reporter {reporter} lacks"
                f" (performer {performer}, task {task})"
            )
        total += weight * value
    return total


def _evaluate(
    model: TrustModel,
    matrices: dict[AgentId, EqosMatrix],
    performer: AgentId,
    task: TaskId,
) -> float:
    if model.kind == WEIGHTED_SUM:
        return weighted_sum_trust(model, matrices.values(), performer, task)
    return model.custom_eval(matrices, performer, task)


def build_trust_table(
    model: TrustModel,
    profile: ReportProfile,
    override_reporter: tuple[AgentId, EqosMatrix] | None = None,
) -> TrustTable:
    """Evaluate the model for every (performer, task) pair with a submitted bid.

    ``override_reporter`` swaps one agent's matrix before evaluation; audits
    use it to mix an agent's true reports with everyone else's declared ones,
    and worst-case discounts use it to floor an agent's reports.
    """
    matrices = {m.reporter: m for m in profile.eqos}
    if override_reporter is not None:
        agent, matrix = override_reporter
        matrices[agent] = EqosMatrix(agent, matrix.entries)
    entries = {}
    for performer, task in profile.bid_pairs():
        value = _evaluate(model, matrices, performer, task)
        entries[(performer, task)] = min(1.0, max(0.0, float(value)))
    return TrustTable(entries)


def trust_without_reporter(
    model: TrustModel,
    profile: ReportProfile,
    excluded: AgentId,
) -> TrustTable:
    """Aggregate with one agent's reports removed and weights renormalised.

    Only defined for weighted-sum models; there is no canonical removal rule
    for arbitrary custom aggregates.
    """
    if model.kind != WEIGHTED_SUM:
        raise UnsupportedTrustModelError("report removal needs a weighted-sum model")
    remaining = {a: w for a, w in model.weights.items() if a != excluded and w > 0.0}
    total = sum(remaining.values())
    if total <= 0.0:
        raise UnsupportedTrustModelError(
            f"cannot remove reporter {excluded}: no weight left to renormalise"
        )
    reduced = TrustModel.weighted_sum({a: w / total for a, w in remaining.items()})
    matrices = {m.reporter: m for m in profile.eqos if m.reporter != excluded}
    entries = {}
    for performer, task in profile.bid_pairs():
        value = weighted_sum_trust(reduced, matrices.values(), performer, task)
        entries[(performer, task)] = min(1.0, max(0.0, float(value)))
    return TrustTable(entries)


def bundle_completion_trust(
    table: TrustTable,
    performer: AgentId,
    done: Iterable[TaskId],
    assigned: Iterable[TaskId],
) -> float:
    """Probability that exactly ``done`` out of ``assigned`` tasks complete."""
    done = frozenset(done)
    assigned = frozenset(assigned)
    if not done <= assigned:
        raise ValueError("done tasks must be a subset of assigned tasks")
    prob = 1.0
    for task in assigned:
        p = table.prob(performer, task)
        prob *= p if task in done else (1.0 - p)
    return prob


def allocation_completion_trust(
    table: TrustTable,
    requester: AgentId,
    done: Iterable[Assignment],
    assigned: Iterable[Assignment],
) -> float:
    """Probability that exactly ``done`` out of a requester's assignments complete.

    The product over performers of their bundle completion probabilities;
    identical to a plain product over assignments under independence.
    """
    done = frozenset(done)
    assigned = frozenset(assigned)
    if not done <= assigned:
        raise ValueError("done assignments must be a subset of assigned ones")
    for a in assigned:
        if a.requester != requester:
            raise ValueError(f"assignment {a} does not target requester {requester}")
    prob = 1.0
    for a in assigned:
        p = table.assignment_prob(a)
        prob *= p if a in done else (1.0 - p)
    return prob


def expected_subset_value(vmap: ValuationMap, task_probs: Mapping[TaskId, float]) -> float:
    """Expected realized value when each task completes independently.

    Sums the value of every completion pattern of the assigned task set,
    weighted by its probability; absent patterns contribute their default
    value of 0. Exact enumeration over all 2^n patterns, capped at
    MAX_BUNDLE_TASKS tasks.
    """
    tasks = sorted(task_probs)
    n = len(tasks)
    if n > MAX_BUNDLE_TASKS:
        raise BundleTooLargeError(
            f"bundle of {n} tasks exceeds the exact enumeration cap of {MAX_BUNDLE_TASKS}"
        )
    total = 0.0
    for mask in range(1 << n):
        done = []
        prob = 1.0
        for k, task in enumerate(tasks):
            p = task_probs[task]
            if (mask >> k) & 1:
                prob *= p
                done.append(task)
            else:
                prob *= 1.0 - p
        if prob != 0.0:
            total += vmap.value_of(done) * prob
    return total
