"""Execution sampling, expected utilities, and empirical mechanism audits.

The audits discretise each agent's report space (per-coordinate EQOS grids,
multiplicative cost/value scalings, and seeded joint samples) and compare the
agent's expected utility under every misreport against truthful reporting.
A FAIL is conclusive; a PASS is evidence at the grid resolution. Throughout,
a deviating agent evaluates completion probabilities with its own true
estimates and everyone else's declared ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import (
    AgentId,
    Assignment,
    EqosMatrix,
    ExecutionOutcome,
    InstanceShapeError,
    ReportProfile,
)
from .hypergraph import Allocation, build_hypergraph
from .mechanism import (
    DiscountPolicy,
    _argmax_positive,
    _single_task_candidates,
    gtbm_allocate,
    min_marginal_discount,
    naive_vickrey_payment,
    single_task_shape,
)
from .solver import exclude_agents, solve
from .trust import (
    TrustModel,
    TrustTable,
    build_trust_table,
    expected_subset_value,
    trust_without_reporter,
)

GTBM = "gtbm"
GTBM_BROKEN = "gtbm-broken"
PORTER_EXTENSION = "porter-extension"
NAIVE_VICKREY = "naive-vickrey"

AUDIT_MECHANISMS = (GTBM, GTBM_BROKEN, PORTER_EXTENSION, NAIVE_VICKREY)


@dataclass(frozen=True)
class AuditConfig:
    """Resolution and budget of the misreport search."""

    eqos_steps: int = 5
    scale_steps: int = 5
    scale_range: tuple[float, float] = (0.0, 2.0)
    n_samples: int = 20
    seed: int = 0
    tolerance: float = 1e-6
    audit_agents: tuple[AgentId, ...] | None = None
    ir_type_steps: int = 0

    def __post_init__(self) -> None:
        if self.eqos_steps < 2:
            raise ValueError("eqos_steps must be at least 2")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class AgentAudit:
    agent: AgentId
    truthful_utility: float
    max_gain: float | None = None
    best_deviation: str | None = None
    min_type_utility: float | None = None


@dataclass(frozen=True)
class AuditReport:
    kind: str
    mechanism: str
    policy: str
    tolerance: float
    per_agent: tuple[AgentAudit, ...]
    passed: bool

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "mechanism": self.mechanism,
            "policy": self.policy,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "agents": [
                {
                    "agent": a.agent,
                    "truthful_utility": a.truthful_utility,
                    "max_gain": a.max_gain,
                    "best_deviation": a.best_deviation,
                    "min_type_utility": a.min_type_utility,
                }
                for a in self.per_agent
            ],
        }

    def format_table(self) -> str:
        lines = [f"{self.kind} audit ({self.mechanism}, policy {self.policy})"]
        header = f"{'agent':>6} {'truthful':>12} {'max_gain':>12} {'min_type_u':>12}  deviation"
        lines.append(header)
        for a in self.per_agent:
            gain = f"{a.max_gain:.4f}" if a.max_gain is not None else "-"
            min_u = f"{a.min_type_utility:.4f}" if a.min_type_utility is not None else "-"
            dev = a.best_deviation or "-"
            lines.append(
                f"{a.agent:>6} {a.truthful_utility:>12.4f} {gain:>12} {min_u:>12}  {dev}"
            )
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# execution sampling
# ---------------------------------------------------------------------------


def _as_assignments(allocation: Allocation | Iterable[Assignment]) -> tuple[Assignment, ...]:
    if isinstance(allocation, Allocation):
        return allocation.assignments()
    return tuple(sorted(allocation))


def sample_execution(
    allocation: Allocation | Iterable[Assignment], table: TrustTable, seed: int
) -> ExecutionOutcome:
    """One execution: each assignment completes independently with its trust."""
    assignments = _as_assignments(allocation)
    rng = np.random.default_rng(seed)
    completed = {a: bool(rng.random() < table.assignment_prob(a)) for a in assignments}
    return ExecutionOutcome(completed)


def sample_outcome_masks(
    allocation: Allocation | Iterable[Assignment], table: TrustTable, n: int, seed: int
) -> np.ndarray:
    """n completion-pattern bitmasks, bit k for the k-th canonical assignment."""
    assignments = _as_assignments(allocation)
    rng = np.random.default_rng(seed)
    if not assignments:
        return np.zeros(n, dtype=np.int64)
    probs = np.array([table.assignment_prob(a) for a in assignments])
    draws = rng.random((n, len(assignments))) < probs
    weights = (1 << np.arange(len(assignments))).astype(np.int64)
    return draws.astype(np.int64) @ weights


# ---------------------------------------------------------------------------
# expected utilities
# ---------------------------------------------------------------------------


def _true_cost_of_bundle(profile: ReportProfile, agent: AgentId, bundle) -> float:
    for atom in profile.bid_atoms_of(agent):
        if atom.bundle == bundle:
            return atom.cost
    raise InstanceShapeError(
        f"agent {agent} has no true cost for allocated bundle {sorted(bundle)}"
    )


def naive_marginal_discount(
    profile: ReportProfile, model: TrustModel, agent: AgentId
) -> float:
    """Deliberately broken discount: welfare without the agent, but evaluated
    with the agent's own reports still in the aggregate. Used only to validate
    that the audits can catch payment rules that depend on an agent's reports.
    """
    table = build_trust_table(model, profile)
    graph = build_hypergraph(profile, table)
    return solve(graph, profile.free_disposal, restriction=exclude_agents(agent)).objective


def expected_utility(
    profile: ReportProfile,
    model: TrustModel,
    agent: AgentId,
    reported_profile: ReportProfile,
    policy: DiscountPolicy,
    b_value: float | None = None,
    payment_rule: str = "standard",
) -> float:
    """Expected utility of one agent given true types and a report profile.

    ``profile`` carries the agent's true type; ``reported_profile`` differs
    from it only in that agent's entries. The market clears on the reports;
    the agent then values completion probabilities with its own true
    estimates mixed with everyone else's declared ones, pays its true cost,
    and receives the expected payment (others' declared surplus under the
    same mixed probabilities, minus its discount).

    ``payment_rule='deviator-reports'`` computes the payment expectation from
    the declared reports including the agent's own; it exists only as a
    deliberately broken reference for audit power checks.
    """
    result = gtbm_allocate(reported_profile, model)
    alloc = result.allocation
    true_matrix = profile.eqos_of(agent)
    mixed = build_trust_table(model, reported_profile, override_reporter=(agent, true_matrix))

    utility = 0.0
    true_vmap = profile.valuation_for(agent)
    own_assignments = alloc.assignments_of(agent)
    if true_vmap is not None and own_assignments:
        task_probs = {a.task: mixed.assignment_prob(a) for a in own_assignments}
        utility += expected_subset_value(true_vmap, task_probs)

    bundle = alloc.bid_bundle_of(agent)
    if bundle is not None:
        utility -= _true_cost_of_bundle(profile, agent, bundle)

    if b_value is None:
        if policy.kind == DiscountPolicy.ZERO:
            b_value = 0.0
        elif policy.kind == DiscountPolicy.FIXED:
            b_value = policy.value
        else:
            b_value = min_marginal_discount(reported_profile, model, agent)

    pay_table = mixed
    if payment_rule == "deviator-reports":
        pay_table = build_trust_table(model, reported_profile)
    elif payment_rule != "standard":
        raise ValueError(f"unknown payment rule: {payment_rule!r}")

    payment = -b_value
    for other in profile.agents:
        if other == agent:
            continue
        other_vmap = reported_profile.valuation_for(other)
        other_assignments = alloc.assignments_of(other)
        if other_vmap is not None and other_assignments:
            task_probs = {a.task: pay_table.assignment_prob(a) for a in other_assignments}
            payment += expected_subset_value(other_vmap, task_probs)
        payment -= alloc.cost_of(other)
    return utility + payment


def porter_extension_utility(
    profile: ReportProfile,
    model: TrustModel,
    agent: AgentId,
    reported_profile: ReportProfile,
) -> float:
    """Expected utility under the broken aggregate extension of the
    self-report mechanism: allocate by aggregated trust, but compute the
    winner's marginal payment by deleting the winner's reports entirely and
    renormalising. Reproduces the known manipulation; not a real mechanism.
    """
    requester, task = single_task_shape(reported_profile)
    v0 = reported_profile.valuation_for(requester).value_of({task})
    table = build_trust_table(model, reported_profile)
    candidates = _single_task_candidates(reported_profile, task)
    utilities = [(j, v0 * table.prob(j, task) - cost) for j, cost in candidates]
    winner = _argmax_positive(utilities)
    if winner != agent:
        return 0.0

    true_matrix = profile.eqos_of(agent)
    mixed = build_trust_table(model, reported_profile, override_reporter=(agent, true_matrix))
    removal = trust_without_reporter(model, reported_profile, agent)
    best_without = max(
        [0.0]
        + [v0 * removal.prob(j, task) - cost for j, cost in candidates if j != agent]
    )
    true_cost = _true_cost_of_bundle(profile, agent, frozenset({task}))
    return v0 * mixed.prob(agent, task) - true_cost - best_without


def naive_vickrey_utility(
    profile: ReportProfile, agent: AgentId, reported_profile: ReportProfile
) -> float:
    """Expected utility under the second-price baseline (expected mode).

    The winner's payment is unconditional, so its utility is the payment
    minus its true cost; losers get nothing.
    """
    winner, payments = naive_vickrey_payment(reported_profile, "expected")
    if winner != agent:
        return 0.0
    _, task = single_task_shape(reported_profile)
    true_cost = _true_cost_of_bundle(profile, agent, frozenset({task}))
    return payments[agent] - true_cost


# ---------------------------------------------------------------------------
# misreport enumeration
# ---------------------------------------------------------------------------


def misreport_candidates(
    profile: ReportProfile, agent: AgentId, config: AuditConfig
) -> Iterator[tuple[str, ReportProfile]]:
    """Grid plus sampled misreports for one agent, deterministic under the seed."""
    lo, hi = profile.eqos_domain
    grid = np.linspace(lo, hi, config.eqos_steps)
    matrix = profile.eqos_of(agent)
    entries = sorted(matrix.entries) if matrix is not None else []

    for pair in entries:
        current = matrix.entries[pair]
        for g in grid:
            if abs(g - current) < 1e-12:
                continue
            yield (
                f"eqos[{pair[0]},{pair[1]}]={g:.4f}",
                profile.with_eqos(agent, matrix.with_entry(pair[0], pair[1], float(g))),
            )

    has_bids = bool(profile.bid_atoms_of(agent))
    has_values = profile.valuation_for(agent) is not None
    scales = np.linspace(config.scale_range[0], config.scale_range[1], config.scale_steps)
    for s in scales:
        if abs(s - 1.0) < 1e-12:
            continue
        if has_bids:
            yield f"cost_scale={s:.4f}", profile.with_scaled_costs(agent, float(s))
        if has_values:
            yield f"value_scale={s:.4f}", profile.with_scaled_values(agent, float(s))

    rng = np.random.default_rng((config.seed + 1) * 1_000_003 + agent)
    for k in range(config.n_samples):
        reported = profile
        if entries:
            sampled = {pair: float(rng.uniform(lo, hi)) for pair in entries}
            reported = reported.with_eqos(agent, EqosMatrix(agent, sampled))
        if has_bids:
            reported = reported.with_scaled_costs(agent, float(rng.uniform(*config.scale_range)))
        if has_values:
            reported = reported.with_scaled_values(agent, float(rng.uniform(*config.scale_range)))
        yield f"sample[{k}]", reported


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


def _utility_fn(profile, model, agent, policy, mechanism):
    if mechanism == GTBM:
        if policy.kind == DiscountPolicy.ZERO:
            b = 0.0
        elif policy.kind == DiscountPolicy.FIXED:
            b = policy.value
        else:
            # Report-independent by construction, so computed once per agent
            # from the truthful profile and reused across deviations.
            b = min_marginal_discount(profile, model, agent)
        return lambda rp: expected_utility(profile, model, agent, rp, policy, b_value=b)
    if mechanism == GTBM_BROKEN:
        return lambda rp: expected_utility(
            profile,
            model,
            agent,
            rp,
            policy,
            b_value=naive_marginal_discount(rp, model, agent),
        )
    if mechanism == PORTER_EXTENSION:
        return lambda rp: porter_extension_utility(profile, model, agent, rp)
    if mechanism == NAIVE_VICKREY:
        return lambda rp: naive_vickrey_utility(profile, agent, rp)
    raise ValueError(f"unknown audit mechanism: {mechanism!r}")


def audit_incentive_compatibility(
    profile: ReportProfile,
    model: TrustModel,
    policy: DiscountPolicy,
    config: AuditConfig,
    mechanism: str = GTBM,
) -> AuditReport:
    """Search for profitable misreports agent by agent.

    PASS means no grid or sampled misreport improved any agent's expected
    utility by more than the tolerance.
    """
    agents = config.audit_agents or profile.agents
    rows = []
    for agent in agents:
        fn = _utility_fn(profile, model, agent, policy, mechanism)
        truthful = fn(profile)
        max_gain = 0.0
        best = None
        for desc, reported in misreport_candidates(profile, agent, config):
            gain = fn(reported) - truthful
            if gain > max_gain:
                max_gain = gain
                best = desc
        rows.append(
            AgentAudit(
                agent=agent,
                truthful_utility=truthful,
                max_gain=max_gain,
                best_deviation=best if max_gain > config.tolerance else None,
            )
        )
    passed = all(r.max_gain <= config.tolerance for r in rows)
    return AuditReport(
        kind="incentive-compatibility",
        mechanism=mechanism,
        policy=policy.kind,
        tolerance=config.tolerance,
        per_agent=tuple(rows),
        passed=passed,
    )


def audit_individual_rationality(
    profile: ReportProfile,
    model: TrustModel,
    policy: DiscountPolicy,
    config: AuditConfig,
) -> AuditReport:
    """Check that truthful participation never loses money in expectation.

    Optionally scans a one-dimensional family of true types (all of an
    agent's estimates set to one grid level, reported truthfully) and records
    the minimum. Zero and min-marginal discounts must pass; fixed discounts
    may legitimately fail for low-trust types, which the report flags.
    """
    agents = config.audit_agents or profile.agents
    lo, hi = profile.eqos_domain
    rows = []
    for agent in agents:
        truthful = expected_utility(profile, model, agent, profile, policy)
        min_utility = truthful
        if config.ir_type_steps >= 2:
            matrix = profile.eqos_of(agent)
            for g in np.linspace(lo, hi, config.ir_type_steps):
                typed = EqosMatrix(agent, {pair: float(g) for pair in matrix.entries})
                world = profile.with_eqos(agent, typed)
                u = expected_utility(world, model, agent, world, policy)
                min_utility = min(min_utility, u)
        rows.append(
            AgentAudit(agent=agent, truthful_utility=truthful, min_type_utility=min_utility)
        )
    passed = all(r.min_type_utility >= -config.tolerance for r in rows)
    return AuditReport(
        kind="individual-rationality",
        mechanism=GTBM,
        policy=policy.kind,
        tolerance=config.tolerance,
        per_agent=tuple(rows),
        passed=passed,
    )
