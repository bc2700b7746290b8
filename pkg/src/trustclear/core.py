"""Domain types for clearing instances: agents, tasks, reports, and outcomes.

All types are immutable values after construction and safe to share across
threads. Identifiers are plain non-negative ints; bundles are frozensets of
task ids. A single-task assignment is the triple (task, requester, performer):
tasks are requester-specific, so two requesters asking for the same task id
yield two distinct assignments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping

TaskId = int
AgentId = int
Bundle = frozenset  # frozenset[TaskId]

#: Absolute tolerance for currency/probability comparisons across the engine.
ABS_TOL = 1e-9


class TrustClearError(Exception):
    """Base class for all engine errors."""


class IncompleteEqosError(TrustClearError):
    """A trust evaluation needed an EQOS entry that was not reported."""


class IncompleteTrustTableError(TrustClearError):
    """A completion probability was requested for an unknown (performer, task)."""


class InstanceShapeError(TrustClearError):
    """The instance does not fit the requested mechanism (wrong shape)."""


class BundleTooLargeError(TrustClearError):
    """A bundle exceeds the exact-enumeration cap."""


class OracleGuardError(TrustClearError):
    """Instance too large for the exhaustive verification oracle."""


class UnsupportedTrustModelError(TrustClearError):
    """The requested operation needs model properties that do not hold."""


def as_bundle(tasks: Iterable[TaskId]) -> Bundle:
    return frozenset(int(t) for t in tasks)


def bundle_key(bundle: Bundle) -> tuple[TaskId, ...]:
    """Canonical (sorted) tuple used for deterministic bundle ordering."""
    return tuple(sorted(bundle))


@dataclass(frozen=True, order=True)
class Assignment:
    """One task performed by one agent for one requester."""

    task: TaskId
    requester: AgentId
    performer: AgentId


@dataclass(frozen=True)
class ValuationAtom:
    """A requester's declared value for getting one bundle fully executed."""

    requester: AgentId
    bundle: Bundle
    value: float


@dataclass(frozen=True)
class BidAtom:
    """A performer's declared cost for executing one bundle."""

    performer: AgentId
    bundle: Bundle
    cost: float


@dataclass(frozen=True)
class ValuationMap:
    """All declared values of one requester, keyed by bundle.

    Lookups of absent bundles return 0. The keys double as the requester's
    mutually exclusive (XOR) atoms: at most one of them may be selected.
    """

    requester: AgentId
    entries: Mapping[Bundle, float]

    def __post_init__(self) -> None:
        fixed = {as_bundle(b): float(v) for b, v in self.entries.items()}
        object.__setattr__(self, "entries", fixed)

    def value_of(self, tasks: Iterable[TaskId]) -> float:
        return self.entries.get(frozenset(tasks), 0.0)

    def atoms(self) -> tuple[ValuationAtom, ...]:
        return tuple(
            ValuationAtom(self.requester, b, self.entries[b])
            for b in sorted(self.entries, key=bundle_key)
        )

    def is_subset_monotone(self, tol: float = ABS_TOL) -> bool:
        """True when no bundle is worth more than any of its supersets."""
        keys = list(self.entries)
        for a in keys:
            for b in keys:
                if a < b and self.entries[a] > self.entries[b] + tol:
                    return False
        return True


@dataclass(frozen=True)
class EqosMatrix:
    """One agent's subjective success-probability estimates.

    Entries are keyed by (performer, task) and must cover every pair that can
    appear in an allocation; missing pairs are validation errors, not silently
    defaulted.
    """

    reporter: AgentId
    entries: Mapping[tuple[AgentId, TaskId], float]

    def __post_init__(self) -> None:
        fixed = {(int(j), int(t)): float(v) for (j, t), v in self.entries.items()}
        object.__setattr__(self, "entries", fixed)

    def get(self, performer: AgentId, task: TaskId) -> float | None:
        return self.entries.get((performer, task))

    def with_entry(self, performer: AgentId, task: TaskId, value: float) -> "EqosMatrix":
        entries = dict(self.entries)
        entries[(performer, task)] = float(value)
        return EqosMatrix(self.reporter, entries)


@dataclass(frozen=True)
class ExecutionOutcome:
    """Observed completion indicator for every assignment of an allocation."""

    completed: Mapping[Assignment, bool]

    def __post_init__(self) -> None:
        object.__setattr__(self, "completed", dict(self.completed))

    @staticmethod
    def from_bitmask(assignments: tuple[Assignment, ...], mask: int) -> "ExecutionOutcome":
        return ExecutionOutcome(
            {a: bool((mask >> k) & 1) for k, a in enumerate(assignments)}
        )

    def bitmask(self, assignments: tuple[Assignment, ...]) -> int:
        mask = 0
        for k, a in enumerate(assignments):
            if self.completed[a]:
                mask |= 1 << k
        return mask


@dataclass(frozen=True)
class ReportProfile:
    """Everything the agents declared: values, cost bids, and EQOS matrices.

    An agent may appear as requester, performer, both, or neither. The
    eqos_domain records the declared range EQOS reports are drawn from; it
    bounds worst-case discount computations and audit grids.
    """

    agents: tuple[AgentId, ...]
    tasks: tuple[TaskId, ...]
    valuations: tuple[ValuationMap, ...]
    bids: tuple[BidAtom, ...]
    eqos: tuple[EqosMatrix, ...]
    free_disposal: bool = False
    eqos_domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(int(a) for a in self.agents))
        object.__setattr__(self, "tasks", tuple(int(t) for t in self.tasks))
        object.__setattr__(self, "valuations", tuple(self.valuations))
        object.__setattr__(self, "bids", tuple(self.bids))
        object.__setattr__(self, "eqos", tuple(self.eqos))
        lo, hi = self.eqos_domain
        object.__setattr__(self, "eqos_domain", (float(lo), float(hi)))

    # -- lookup helpers ----------------------------------------------------

    def valuation_for(self, agent: AgentId) -> ValuationMap | None:
        for vmap in self.valuations:
            if vmap.requester == agent:
                return vmap
        return None

    def bid_atoms_of(self, agent: AgentId) -> tuple[BidAtom, ...]:
        return tuple(b for b in self.bids if b.performer == agent)

    def eqos_of(self, agent: AgentId) -> EqosMatrix | None:
        for m in self.eqos:
            if m.reporter == agent:
                return m
        return None

    def bidders_on(self, task: TaskId) -> tuple[AgentId, ...]:
        """Performers with at least one bid bundle containing the task, ascending."""
        found = {b.performer for b in self.bids if task in b.bundle}
        return tuple(sorted(found))

    def bid_pairs(self) -> tuple[tuple[AgentId, TaskId], ...]:
        """All (performer, task) pairs that can appear in an allocation."""
        pairs = {(b.performer, t) for b in self.bids for t in b.bundle}
        return tuple(sorted(pairs))

    def requesters(self) -> tuple[AgentId, ...]:
        return tuple(sorted({v.requester for v in self.valuations}))

    def performers(self) -> tuple[AgentId, ...]:
        return tuple(sorted({b.performer for b in self.bids}))

    # -- report surgery (used by payment audits) ----------------------------

    def with_eqos(self, agent: AgentId, matrix: EqosMatrix) -> "ReportProfile":
        if matrix.reporter != agent:
            matrix = EqosMatrix(agent, matrix.entries)
        new = tuple(matrix if m.reporter == agent else m for m in self.eqos)
        return replace(self, eqos=new)

    def with_scaled_costs(self, agent: AgentId, factor: float) -> "ReportProfile":
        new = tuple(
            BidAtom(b.performer, b.bundle, b.cost * factor) if b.performer == agent else b
            for b in self.bids
        )
        return replace(self, bids=new)

    def with_scaled_values(self, agent: AgentId, factor: float) -> "ReportProfile":
        new = tuple(
            ValuationMap(v.requester, {b: val * factor for b, val in v.entries.items()})
            if v.requester == agent
            else v
            for v in self.valuations
        )
        return replace(self, valuations=new)


def uniform_eqos_matrix(profile: ReportProfile, reporter: AgentId, value: float) -> EqosMatrix:
    """A matrix reporting the same value for every pair that can be allocated."""
    return EqosMatrix(reporter, {pair: value for pair in profile.bid_pairs()})


def validate_report_profile(profile: ReportProfile) -> list[str]:
    """Check every profile invariant and return the violations found.

    An empty list means the profile is admissible to every downstream module.
    Violations are data, not exceptions; the function is pure and idempotent.
    """
    violations: list[str] = []
    agents = set(profile.agents)
    tasks = set(profile.tasks)

    if len(profile.agents) != len(agents):
        violations.append("duplicate agent id")
    if len(profile.tasks) != len(tasks):
        violations.append("duplicate task id")
    if any(a < 0 for a in agents):
        violations.append("negative agent id")
    if any(t < 0 for t in tasks):
        violations.append("negative task id")

    lo, hi = profile.eqos_domain
    if not (0.0 <= lo <= hi <= 1.0):
        violations.append(f"invalid EQOS domain [{lo}, {hi}]")

    seen_requesters: set[AgentId] = set()
    for vmap in profile.valuations:
        tag = f"requester {vmap.requester}"
        if vmap.requester not in agents:
            violations.append(f"unknown agent: {tag}")
        if vmap.requester in seen_requesters:
            violations.append(f"duplicate valuation map: {tag}")
        seen_requesters.add(vmap.requester)
        for bundle, value in vmap.entries.items():
            btag = f"{tag} bundle {bundle_key(bundle)}"
            if not bundle:
                violations.append(f"empty bundle: {btag}")
            if not bundle <= tasks:
                violations.append(f"unknown task: {btag}")
            if value < 0:
                violations.append(f"negative value: {btag}")

    seen_bids: set[tuple[AgentId, Bundle]] = set()
    for bid in profile.bids:
        btag = f"performer {bid.performer} bundle {bundle_key(bid.bundle)}"
        if bid.performer not in agents:
            violations.append(f"unknown agent: {btag}")
        if not bid.bundle:
            violations.append(f"empty bundle: {btag}")
        if not bid.bundle <= tasks:
            violations.append(f"unknown task: {btag}")
        if bid.cost < 0:
            violations.append(f"negative cost: {btag}")
        key = (bid.performer, bid.bundle)
        if key in seen_bids:
            violations.append(f"duplicate bundle: {btag}")
        seen_bids.add(key)

    reporters = [m.reporter for m in profile.eqos]
    if len(reporters) != len(set(reporters)):
        violations.append("duplicate EQOS matrix")
    for agent in profile.agents:
        if agent not in reporters:
            violations.append(f"missing EQOS matrix for agent {agent}")

    pairs = profile.bid_pairs()
    for matrix in profile.eqos:
        if matrix.reporter not in agents:
            violations.append(f"unknown agent: EQOS reporter {matrix.reporter}")
        for (j, t), value in matrix.entries.items():
            if j not in agents or t not in tasks:
                violations.append(
                    f"unknown reference: reporter {matrix.reporter} entry ({j}, {t})"
                )
            if not (0.0 <= value <= 1.0):
                violations.append(
                    f"EQOS out of range: reporter {matrix.reporter}"
                    f" entry ({j}, {t}) = {value}"
                )
        for pair in pairs:
            if pair not in matrix.entries:
                violations.append(
                    f"missing EQOS entry: reporter {matrix.reporter}"
                    f" lacks (performer {pair[0]}, task {pair[1]})"
                )

    return violations
