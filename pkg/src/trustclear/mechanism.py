"""Allocation and payment rules.

Four mechanism variants share this module:

* ``gtbm`` - the general clearing rule: allocate by maximum expected social
  utility under aggregated trust, then pay each agent the realized surplus of
  everyone else minus a report-independent discount.
* ``single-task-tbm`` - the same rule specialised to one requester and one
  task, with closed-form winner/loser payments.
* ``porter`` - allocation by self-reported success probability only; the
  winner receives its expected marginal contribution, conditioned on the
  observed outcome; losers receive nothing.
* ``naive-vickrey`` - the second-price baseline (raw or expected values) whose
  payment ignores execution, included as a known-broken reference point.

Payments are emitted as full contingent schedules over completion patterns of
the chosen allocation; realized transfers are schedule lookups.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .core import (
    ABS_TOL,
    AgentId,
    Assignment,
    BundleTooLargeError,
    ExecutionOutcome,
    InstanceShapeError,
    ReportProfile,
    TaskId,
    UnsupportedTrustModelError,
    uniform_eqos_matrix,
)
from .hypergraph import Allocation, build_hypergraph
from .solver import TIE_TOL, SolveResult, exclude_agents, solve
from .trust import CUSTOM, TrustModel, TrustTable, build_trust_table

#: Contingent schedules enumerate every completion pattern; cap the bit count.
MAX_PATTERN_BITS = 20


class MechanismKind(str, Enum):
    GTBM = "gtbm"
    SINGLE_TASK_TBM = "single-task-tbm"
    PORTER = "porter"
    NAIVE_VICKREY = "naive-vickrey"


@dataclass(frozen=True)
class DiscountPolicy:
    """How the per-agent discount (the amount withheld from payments) is set.

    ``zero`` guarantees participation, ``fixed`` applies one flat value to all
    agents (may sacrifice participation of low-trust types), ``min_marginal``
    charges each agent the worst-case welfare the rest of the market could
    achieve without it.
    """

    kind: str
    value: float = 0.0

    ZERO = "zero"
    FIXED = "fixed"
    MIN_MARGINAL = "min_marginal"

    def __post_init__(self) -> None:
        if self.kind not in (self.ZERO, self.FIXED, self.MIN_MARGINAL):
            raise ValueError(f"unknown discount policy: {self.kind}")
        if self.kind == self.FIXED and self.value < 0:
            raise ValueError("fixed discounts must be non-negative")

    @staticmethod
    def zero() -> "DiscountPolicy":
        return DiscountPolicy(DiscountPolicy.ZERO)

    @staticmethod
    def fixed(value: float) -> "DiscountPolicy":
        return DiscountPolicy(DiscountPolicy.FIXED, float(value))

    @staticmethod
    def min_marginal() -> "DiscountPolicy":
        return DiscountPolicy(DiscountPolicy.MIN_MARGINAL)

    @staticmethod
    def parse(text: str) -> "DiscountPolicy":
        """Parse the CLI spelling: ``zero``, ``fixed:<v>``, ``min-marginal``."""
        if text == "zero":
            return DiscountPolicy.zero()
        if text in ("min-marginal", "min_marginal"):
            return DiscountPolicy.min_marginal()
        if text.startswith("fixed:"):
            return DiscountPolicy.fixed(float(text.split(":", 1)[1]))
        raise ValueError(f"unknown discount policy: {text!r}")


@dataclass(frozen=True)
class PaymentSchedule:
    """Per-agent contingent payments over completion patterns.

    Pattern bit k corresponds to ``assignments[k]`` completing. Payments are
    defined for every agent in the profile, requesters and bystanders
    included.
    """

    assignments: tuple[Assignment, ...]
    agents: tuple[AgentId, ...]
    payments: Mapping[AgentId, tuple[float, ...]]
    b_values: Mapping[AgentId, float]
    performer_costs: Mapping[AgentId, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "payments", {a: tuple(v) for a, v in self.payments.items()})
        object.__setattr__(self, "b_values", dict(self.b_values))
        object.__setattr__(self, "performer_costs", dict(self.performer_costs))

    @property
    def n_patterns(self) -> int:
        return 1 << len(self.assignments)

    def payment(self, agent: AgentId, mask: int) -> float:
        return self.payments[agent][mask]

    def realized(self, agent: AgentId, outcome: ExecutionOutcome) -> float:
        return self.payments[agent][outcome.bitmask(self.assignments)]

    def pattern_probabilities(self, table: TrustTable) -> np.ndarray:
        """Probability of each completion pattern under independent completion."""
        masks = np.arange(self.n_patterns)
        probs = np.ones(self.n_patterns)
        for k, a in enumerate(self.assignments):
            p = table.assignment_prob(a)
            bit = (masks >> k) & 1
            probs *= np.where(bit == 1, p, 1.0 - p)
        return probs

    def expected(self, agent: AgentId, table: TrustTable) -> float:
        pay = np.asarray(self.payments[agent])
        return float(np.dot(self.pattern_probabilities(table), pay))

    def centre_balance(self, mask: int) -> float:
        """Centre surplus at one outcome: negative of everything it pays out."""
        return -sum(self.payments[a][mask] for a in self.agents)

    def to_json(self) -> dict:
        return {
            "assignments": [
                {"task": a.task, "requester": a.requester, "performer": a.performer}
                for a in self.assignments
            ],
            "payments": {
                str(agent): [
                    {"pattern": mask, "payment": self.payments[agent][mask]}
                    for mask in range(self.n_patterns)
                ]
                for agent in self.agents
            },
            "discounts": {str(a): self.b_values.get(a, 0.0) for a in self.agents},
        }


# ---------------------------------------------------------------------------
# general clearing rule
# ---------------------------------------------------------------------------


def gtbm_allocate(profile: ReportProfile, model: TrustModel) -> SolveResult:
    """Clear the market: aggregate trust, build the hypergraph, solve."""
    table = build_trust_table(model, profile)
    graph = build_hypergraph(profile, table)
    return solve(graph, profile.free_disposal)


def _spot_check_monotone(model: TrustModel, profile: ReportProfile, samples: int = 6) -> None:
    """Randomised sanity check of a custom model's declared monotonicity."""
    rng = random.Random(0x5EED)
    base = build_trust_table(model, profile)
    reporters = [m for m in profile.eqos if m.entries]
    if not reporters:
        return
    for _ in range(samples):
        matrix = rng.choice(reporters)
        pair = rng.choice(sorted(matrix.entries))
        old = matrix.entries[pair]
        bumped = matrix.with_entry(pair[0], pair[1], min(1.0, old + 0.1))
        table = build_trust_table(model, profile, override_reporter=(matrix.reporter, bumped))
        for key, value in table.entries.items():
            if value < base.entries[key] - ABS_TOL:
                raise UnsupportedTrustModelError(
                    "trust model declared monotone but a raised report lowered"
                    f" the aggregate for {key}"
                )


def min_marginal_discount(profile: ReportProfile, model: TrustModel, agent: AgentId) -> float:
    """Worst-case welfare of the market without one agent.

    The agent's reports are floored to the declared domain lower bound (the
    minimising report under a monotone model), its edges are removed, and the
    rest of the market is cleared. Requires a monotone trust model and
    subset-monotone valuations; anything else is rejected because an
    over-estimated floor would silently break participation guarantees.
    """
    if not model.monotone:
        raise UnsupportedTrustModelError("min-marginal unsupported for non-monotone trust")
    for vmap in profile.valuations:
        if not vmap.is_subset_monotone():
            raise UnsupportedTrustModelError(
                "min-marginal unsupported for non-monotone trust:"
                f" requester {vmap.requester} values a bundle above a superset"
            )
    if __debug__ and model.kind == CUSTOM:
        _spot_check_monotone(model, profile)

    floor_matrix = uniform_eqos_matrix(profile, agent, profile.eqos_domain[0])
    table = build_trust_table(model, profile, override_reporter=(agent, floor_matrix))
    graph = build_hypergraph(profile, table)
    result = solve(graph, profile.free_disposal, restriction=exclude_agents(agent))
    return result.objective


def discounts(
    profile: ReportProfile, model: TrustModel, policy: DiscountPolicy
) -> dict[AgentId, float]:
    if policy.kind == DiscountPolicy.ZERO:
        return {a: 0.0 for a in profile.agents}
    if policy.kind == DiscountPolicy.FIXED:
        return {a: policy.value for a in profile.agents}
    return {a: min_marginal_discount(profile, model, a) for a in profile.agents}


def contingent_schedule(
    profile: ReportProfile,
    allocation: Allocation,
    b_values: Mapping[AgentId, float],
) -> PaymentSchedule:
    """Payments for every completion pattern of the chosen allocation.

    Each agent receives, at every pattern, the sum over all *other* agents of
    the value they realize (their declared value of exactly the completed
    subset of their allocated bundle) minus their allocated cost, less the
    agent's own discount. Costs are incurred on attempt, so they do not vary
    with the pattern.
    """
    assignments = allocation.assignments()
    n = len(assignments)
    if n > MAX_PATTERN_BITS:
        raise BundleTooLargeError(
            f"allocation with {n} assignments exceeds the contingent schedule cap"
        )
    n_patterns = 1 << n

    requester_bits: dict[AgentId, list[tuple[int, TaskId]]] = {}
    for k, a in enumerate(assignments):
        requester_bits.setdefault(a.requester, []).append((k, a.task))

    costs = {a: allocation.cost_of(a) for a in profile.agents}
    surplus: dict[AgentId, list[float]] = {}
    for agent in profile.agents:
        vmap = profile.valuation_for(agent)
        bits = requester_bits.get(agent, [])
        row = []
        for mask in range(n_patterns):
            value = 0.0
            if vmap is not None and bits:
                done = {task for k, task in bits if (mask >> k) & 1}
                value = vmap.value_of(done)
            row.append(value - costs[agent])
        surplus[agent] = row

    totals = [sum(surplus[a][mask] for a in profile.agents) for mask in range(n_patterns)]
    payments = {
        agent: tuple(
            totals[mask] - surplus[agent][mask] - b_values.get(agent, 0.0)
            for mask in range(n_patterns)
        )
        for agent in profile.agents
    }
    return PaymentSchedule(
        assignments=assignments,
        agents=profile.agents,
        payments=payments,
        b_values={a: b_values.get(a, 0.0) for a in profile.agents},
        performer_costs=costs,
    )


def gtbm_payment_schedule(
    profile: ReportProfile,
    model: TrustModel,
    result: SolveResult,
    policy: DiscountPolicy,
) -> PaymentSchedule:
    """Contingent payments for a cleared market under the chosen discounts."""
    return contingent_schedule(profile, result.allocation, discounts(profile, model, policy))


# ---------------------------------------------------------------------------
# single requester, single task specialisations
# ---------------------------------------------------------------------------


def single_task_shape(profile: ReportProfile) -> tuple[AgentId, TaskId]:
    """Assert the single-requester single-task shape; return (requester, task)."""
    if len(profile.tasks) != 1:
        raise InstanceShapeError("mechanism needs exactly one task")
    if len(profile.valuations) != 1:
        raise InstanceShapeError("mechanism needs exactly one requester")
    task = profile.tasks[0]
    requester = profile.valuations[0].requester
    if profile.bid_atoms_of(requester):
        raise InstanceShapeError("the requester may not bid on its own task")
    return requester, task


def _single_task_candidates(
    profile: ReportProfile, task: TaskId
) -> list[tuple[AgentId, float]]:
    out = []
    for agent in profile.performers():
        atoms = profile.bid_atoms_of(agent)
        cost = min(a.cost for a in atoms if task in a.bundle)
        out.append((agent, cost))
    return out


def _argmax_positive(utilities: list[tuple[AgentId, float]]) -> AgentId | None:
    """Agent with the highest utility if it exceeds zero; ties go to lowest id."""
    winner = None
    best = 0.0
    for agent, util in sorted(utilities):
        if util > best + TIE_TOL:
            winner = agent
            best = util
    return winner


def single_task_tbm(
    profile: ReportProfile, model: TrustModel, policy: DiscountPolicy
) -> tuple[AgentId | None, PaymentSchedule]:
    """Trust-based rule for one requester and one task, in closed form.

    The winner maximises expected value minus cost under aggregated trust.
    On success the winner is paid the task value minus its discount, on
    failure just minus the discount; every other agent is paid the realized
    system surplus (task value on success, minus the winner's declared cost)
    minus its own discount.
    """
    requester, task = single_task_shape(profile)
    v0 = profile.valuation_for(requester).value_of({task})
    table = build_trust_table(model, profile)
    candidates = _single_task_candidates(profile, task)
    utilities = [(j, v0 * table.prob(j, task) - cost) for j, cost in candidates]
    winner = _argmax_positive(utilities)
    b_values = discounts(profile, model, policy)

    if winner is None:
        payments = {a: (-b_values[a],) for a in profile.agents}
        schedule = PaymentSchedule((), profile.agents, payments, b_values, {})
        return None, schedule

    winner_cost = dict(candidates)[winner]
    assignment = Assignment(task, requester, winner)
    payments = {}
    for agent in profile.agents:
        b = b_values[agent]
        if agent == winner:
            payments[agent] = (-b, v0 - b)
        elif agent == requester:
            payments[agent] = (-winner_cost - b, -winner_cost - b)
        else:
            payments[agent] = (-winner_cost - b, v0 - winner_cost - b)
    schedule = PaymentSchedule(
        assignments=(assignment,),
        agents=profile.agents,
        payments=payments,
        b_values=b_values,
        performer_costs={winner: winner_cost},
    )
    return winner, schedule


def self_reported_pos(profile: ReportProfile, task: TaskId) -> dict[AgentId, float]:
    """Each performer's own success estimate for the task."""
    out = {}
    for agent in profile.performers():
        matrix = profile.eqos_of(agent)
        value = matrix.get(agent, task) if matrix is not None else None
        if value is None:
            raise InstanceShapeError(f"agent {agent} submitted no self estimate for task {task}")
        out[agent] = value
    return out


def porter_schedule(profile: ReportProfile) -> tuple[AgentId | None, PaymentSchedule]:
    """Self-report mechanism: allocation and outcome-contingent winner payment.

    Allocates by expected value using each performer's own success estimate.
    The winner's payment compares the task value against the best expected
    surplus available without it; losers are paid nothing.
    """
    requester, task = single_task_shape(profile)
    v0 = profile.valuation_for(requester).value_of({task})
    pos = self_reported_pos(profile, task)
    candidates = _single_task_candidates(profile, task)
    utilities = [(j, v0 * pos[j] - cost) for j, cost in candidates]
    winner = _argmax_positive(utilities)

    if winner is None:
        payments = {a: (0.0,) for a in profile.agents}
        return None, PaymentSchedule((), profile.agents, payments, {}, {})

    best_without = max([0.0] + [u for j, u in utilities if j != winner])
    assignment = Assignment(task, requester, winner)
    payments = {
        a: (-best_without, v0 - best_without) if a == winner else (0.0, 0.0)
        for a in profile.agents
    }
    schedule = PaymentSchedule(
        assignments=(assignment,),
        agents=profile.agents,
        payments=payments,
        b_values={winner: best_without},
        performer_costs={winner: dict(candidates)[winner]},
    )
    return winner, schedule


def porter_payment(profile: ReportProfile, completed: bool) -> dict[AgentId, float]:
    """Realized transfers of the self-report mechanism for one outcome."""
    winner, schedule = porter_schedule(profile)
    mask = 1 if (completed and winner is not None) else 0
    return {a: schedule.payments[a][mask if schedule.assignments else 0] for a in profile.agents}


def naive_vickrey_payment(
    profile: ReportProfile, mode: str = "expected"
) -> tuple[AgentId | None, dict[AgentId, float]]:
    """Second-price baseline; the winner is paid regardless of execution.

    ``certain`` ignores success estimates entirely; ``expected`` discounts the
    task value by each performer's self-reported success probability in both
    the allocation and the payment.
    """
    if mode not in ("certain", "expected"):
        raise ValueError(f"unknown mode: {mode!r}")
    requester, task = single_task_shape(profile)
    v0 = profile.valuation_for(requester).value_of({task})
    candidates = _single_task_candidates(profile, task)
    if mode == "expected":
        pos = self_reported_pos(profile, task)
        expected_value = {j: v0 * pos[j] for j, _ in candidates}
    else:
        expected_value = {j: v0 for j, _ in candidates}
    utilities = [(j, expected_value[j] - cost) for j, cost in candidates]
    winner = _argmax_positive(utilities)

    payments = {a: 0.0 for a in profile.agents}
    if winner is not None:
        best_without = max([0.0] + [u for j, u in utilities if j != winner])
        payments[winner] = expected_value[winner] - best_without
    return winner, payments
