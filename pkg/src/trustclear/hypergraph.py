"""Search-space representation: valuation and bid hypergraphs.

Vertices are valuation atoms, bid atoms, and task-per-bidder nodes (a task
paired with the performer bidding on it, requester left open). A valuation
hyperedge joins one valuation atom to one complete cover of its bundle by
task-per-bidder nodes and carries the allocation's expected value as weight.
A bid hyperedge joins one bid atom to the nodes of its bundle and carries the
cost. Clearing then reduces to a pair of matchings whose covered nodes agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .core import (
    AgentId,
    Assignment,
    BidAtom,
    Bundle,
    ReportProfile,
    TaskId,
    ValuationAtom,
    ValuationMap,
    bundle_key,
)
from .trust import TrustTable, expected_subset_value


@dataclass(frozen=True, order=True)
class TpbNode:
    """Task-per-bidder node: performer j is assigned the task, requester open."""

    task: TaskId
    performer: AgentId


@dataclass(frozen=True)
class ValuationHyperedge:
    """One valuation atom plus one full cover of its bundle.

    ``uid`` is the edge's position in the deterministic edge ordering and is
    shared with the bid edges (bid uids continue after the last valuation
    uid), so sorted uid sequences identify allocations unambiguously.
    """

    uid: int
    atom: ValuationAtom
    cover: frozenset[TpbNode]
    weight: float

    def assignments(self) -> tuple[Assignment, ...]:
        return tuple(
            sorted(Assignment(n.task, self.atom.requester, n.performer) for n in self.cover)
        )


@dataclass(frozen=True)
class BidHyperedge:
    uid: int
    atom: BidAtom
    cover: frozenset[TpbNode]
    weight: float


@dataclass(frozen=True)
class Allocation:
    """A candidate outcome: selected valuation edges plus selected bid edges."""

    selected_v: tuple[ValuationHyperedge, ...]
    selected_c: tuple[BidHyperedge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "selected_v", tuple(sorted(self.selected_v, key=lambda e: e.uid))
        )
        object.__setattr__(
            self, "selected_c", tuple(sorted(self.selected_c, key=lambda e: e.uid))
        )

    @property
    def empty(self) -> bool:
        return not self.selected_v and not self.selected_c

    def uid_sequence(self) -> tuple[int, ...]:
        """Sorted edge uids; the solver's tie-break key."""
        return tuple(sorted([e.uid for e in self.selected_v] + [e.uid for e in self.selected_c]))

    def assignments(self) -> tuple[Assignment, ...]:
        out: list[Assignment] = []
        for edge in self.selected_v:
            out.extend(edge.assignments())
        return tuple(sorted(out))

    def assignments_of(self, requester: AgentId) -> tuple[Assignment, ...]:
        return tuple(a for a in self.assignments() if a.requester == requester)

    def cost_of(self, performer: AgentId) -> float:
        return sum(e.weight for e in self.selected_c if e.atom.performer == performer)

    def bid_bundle_of(self, performer: AgentId) -> Bundle | None:
        for e in self.selected_c:
            if e.atom.performer == performer:
                return e.atom.bundle
        return None


EMPTY_ALLOCATION = Allocation((), ())


@dataclass(frozen=True)
class AllocationHypergraph:
    """Both hypergraphs plus the per-agent indexes the XOR constraints need."""

    tpb_nodes: frozenset[TpbNode]
    v_edges: tuple[ValuationHyperedge, ...]
    c_edges: tuple[BidHyperedge, ...]

    def v_edges_by_requester(self) -> dict[AgentId, list[ValuationHyperedge]]:
        out: dict[AgentId, list[ValuationHyperedge]] = {}
        for e in self.v_edges:
            out.setdefault(e.atom.requester, []).append(e)
        return out

    def c_edges_by_performer(self) -> dict[AgentId, list[BidHyperedge]]:
        out: dict[AgentId, list[BidHyperedge]] = {}
        for e in self.c_edges:
            out.setdefault(e.atom.performer, []).append(e)
        return out

    def debug_dump(self) -> str:
        """Plain-text adjacency listing for inspection."""
        lines = []
        for e in self.v_edges:
            cover = ", ".join(f"t{n.task}<-a{n.performer}" for n in sorted(e.cover))
            lines.append(
                f"v[{e.uid}] requester {e.atom.requester}"
                f" bundle {bundle_key(e.atom.bundle)} cover ({cover}) weight {e.weight:.6f}"
            )
        for e in self.c_edges:
            cover = ", ".join(f"t{n.task}<-a{n.performer}" for n in sorted(e.cover))
            lines.append(
                f"c[{e.uid}] performer {e.atom.performer}"
                f" bundle {bundle_key(e.atom.bundle)} cover ({cover}) weight {e.weight:.6f}"
            )
        return "\n".join(lines)


def enumerate_fulfilling_sets(
    profile: ReportProfile, bundle: Bundle | set[TaskId]
) -> list[frozenset[TpbNode]]:
    """All node sets that cover the bundle with exactly one performer per task.

    Complete enumeration in deterministic order: tasks ascending, performer
    index ascending within each task. A task nobody bids on yields an empty
    list rather than an error.
    """
    bundle = frozenset(bundle)
    if not bundle:
        raise ValueError("bundle must be non-empty")
    per_task: list[list[TpbNode]] = []
    for task in sorted(bundle):
        bidders = profile.bidders_on(task)
        if not bidders:
            return []
        per_task.append([TpbNode(task, j) for j in bidders])
    return [frozenset(combo) for combo in product(*per_task)]


def hyperedge_weight(
    atom: ValuationAtom,
    cover: frozenset[TpbNode] | set[TpbNode],
    vmap: ValuationMap,
    table: TrustTable,
) -> float:
    """Expected value of the allocation one valuation hyperedge encodes.

    Every completion pattern of the bundle contributes the requester's value
    for the exactly-completed subset, weighted by the pattern's probability
    under independent per-task completion.
    """
    cover = frozenset(cover)
    covered = {n.task for n in cover}
    if covered != frozenset(atom.bundle) or len(cover) != len(atom.bundle):
        raise ValueError("cover does not fulfil the atom's bundle")
    task_probs = {n.task: table.prob(n.performer, n.task) for n in cover}
    return expected_subset_value(vmap, task_probs)


def count_allocations(profile: ReportProfile) -> int:
    """Number of valuation hyperedges the instance generates.

    For each valuation atom, the product over its tasks of the number of
    performers bidding on that task; summed over all atoms. Equal to
    len(build_hypergraph(...).v_edges) by construction.
    """
    bidder_counts = {t: len(profile.bidders_on(t)) for t in profile.tasks}
    total = 0
    for vmap in profile.valuations:
        for bundle in vmap.entries:
            combos = 1
            for task in bundle:
                combos *= bidder_counts.get(task, 0)
            total += combos
    return total


def build_hypergraph(profile: ReportProfile, table: TrustTable) -> AllocationHypergraph:
    """Construct both hypergraphs with deterministic edge ordering.

    Valuation edges are ordered by (requester, bundle, cover) and bid edges by
    (performer, bundle); uids follow that order, so identical inputs always
    produce identical graphs. Zero-weight edges are kept: pruning them would
    silently change the feasible set when disposal is not free.
    """
    v_edges: list[ValuationHyperedge] = []
    uid = 0
    for vmap in sorted(profile.valuations, key=lambda m: m.requester):
        for atom in vmap.atoms():
            for cover in enumerate_fulfilling_sets(profile, atom.bundle):
                weight = hyperedge_weight(atom, cover, vmap, table)
                v_edges.append(ValuationHyperedge(uid, atom, cover, weight))
                uid += 1

    c_edges: list[BidHyperedge] = []
    ordered_bids = sorted(profile.bids, key=lambda b: (b.performer, bundle_key(b.bundle)))
    for bid in ordered_bids:
        cover = frozenset(TpbNode(t, bid.performer) for t in bid.bundle)
        c_edges.append(BidHyperedge(uid, bid, cover, bid.cost))
        uid += 1

    nodes = frozenset(n for e in c_edges for n in e.cover)
    return AllocationHypergraph(nodes, tuple(v_edges), tuple(c_edges))


def check_feasible(
    graph: AllocationHypergraph, alloc: Allocation, free_disposal: bool
) -> bool:
    """Decide feasibility of an allocation.

    Requires: at most one valuation edge per requester and one bid edge per
    performer (XOR), pairwise-disjoint covers on the valuation side, and
    value-side node coverage equal to bid-side coverage (or contained in it
    when disposal is free).
    """
    v_by_uid = {e.uid: e for e in graph.v_edges}
    c_by_uid = {e.uid: e for e in graph.c_edges}
    for e in alloc.selected_v:
        if v_by_uid.get(e.uid) != e:
            return False
    for e in alloc.selected_c:
        if c_by_uid.get(e.uid) != e:
            return False

    requesters = [e.atom.requester for e in alloc.selected_v]
    if len(requesters) != len(set(requesters)):
        return False
    performers = [e.atom.performer for e in alloc.selected_c]
    if len(performers) != len(set(performers)):
        return False

    v_covered: set[TpbNode] = set()
    for e in alloc.selected_v:
        if v_covered & e.cover:
            return False
        v_covered |= e.cover

    c_covered: set[TpbNode] = set()
    for e in alloc.selected_c:
        c_covered |= e.cover

    if free_disposal:
        return v_covered <= c_covered
    return v_covered == c_covered


def allocation_objective(alloc: Allocation) -> float:
    """Expected social utility: selected values minus selected costs."""
    return sum(e.weight for e in alloc.selected_v) - sum(e.weight for e in alloc.selected_c)
