"""Exact winner determination over an allocation hypergraph.

``solve`` runs a depth-first branch and bound over valuation edges grouped by
requester (choose one edge or none per requester); the bid side is resolved
per performer, which is exact because bid-side feasibility decomposes by
performer once the valuation side is fixed. ``brute_force_optimum`` is an
independent exhaustive oracle for verification: it enumerates raw edge
combinations and re-derives feasibility from the checker, with no bounds and
no cover shortcuts.

Both return the same deterministic optimum: among equal-objective allocations
the one whose sorted edge-uid sequence is lexicographically smallest wins, so
the empty allocation wins all ties at objective zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from .core import AgentId, OracleGuardError
from .hypergraph import (
    EMPTY_ALLOCATION,
    Allocation,
    AllocationHypergraph,
    BidHyperedge,
    TpbNode,
    ValuationHyperedge,
    allocation_objective,
    check_feasible,
)

#: Tolerance for objective comparisons inside the search; two allocations
#: closer than this are treated as tied and settled by the uid sequence.
TIE_TOL = 1e-9

EdgeFilter = Callable[[ValuationHyperedge | BidHyperedge], bool]


def exclude_agents(*agents: AgentId) -> EdgeFilter:
    """Restriction dropping every edge an agent owns, as requester or performer."""
    excluded = frozenset(agents)

    def keep(edge: ValuationHyperedge | BidHyperedge) -> bool:
        if isinstance(edge, ValuationHyperedge):
            return edge.atom.requester not in excluded
        return edge.atom.performer not in excluded

    return keep


@dataclass(frozen=True)
class SolveStats:
    nodes_explored: int
    wall_time: float


@dataclass(frozen=True)
class SolveResult:
    allocation: Allocation
    objective: float
    stats: SolveStats


def _improves(
    objective: float,
    sequence: tuple[int, ...],
    best_objective: float,
    best_sequence: tuple[int, ...],
) -> bool:
    if objective > best_objective + TIE_TOL:
        return True
    if objective < best_objective - TIE_TOL:
        return False
    return sequence < best_sequence


class _Edge:
    """Search-internal view of one valuation edge: bitmask state, no sets."""

    __slots__ = ("edge", "uid", "weight", "nodes_mask", "perf_tasks", "price", "net")

    def __init__(
        self,
        edge: ValuationHyperedge,
        node_index: dict[TpbNode, int],
        node_price: dict[TpbNode, float],
    ) -> None:
        self.edge = edge
        self.uid = edge.uid
        self.weight = edge.weight
        mask = 0
        price = 0.0
        per_perf: dict[AgentId, int] = {}
        for node in edge.cover:
            mask |= 1 << node_index[node]
            price += node_price[node]
            per_perf[node.performer] = per_perf.get(node.performer, 0) | (1 << node.task)
        self.nodes_mask = mask
        self.perf_tasks = tuple(sorted(per_perf.items()))
        self.price = price
        self.net = edge.weight - price


class _Search:
    """Branch-and-bound over valuation edges grouped by requester.

    State lives in mutable bitmask maps updated and undone around each
    recursive call; covers and cost floors are resolved per performer, which
    is exact because the bid side decomposes once the valuation side is
    fixed.
    """

    def __init__(
        self,
        graph: AllocationHypergraph,
        free_disposal: bool,
        restriction: EdgeFilter | None,
    ) -> None:
        self.free_disposal = free_disposal
        v_edges = [e for e in graph.v_edges if restriction is None or restriction(e)]
        c_edges = [e for e in graph.c_edges if restriction is None or restriction(e)]

        node_index = {node: i for i, node in enumerate(sorted(graph.tpb_nodes))}

        # Per performer: bids as (bundle_mask, cost, uid, edge), sorted by
        # (cost, uid) so the first admissible hit is the cheapest tie-broken one.
        self.bids: dict[AgentId, list[tuple[int, float, int, BidHyperedge]]] = {}
        for e in c_edges:
            mask = 0
            for t in e.atom.bundle:
                mask |= 1 << t
            self.bids.setdefault(e.atom.performer, []).append((mask, e.weight, e.uid, e))
        for rows in self.bids.values():
            rows.sort(key=lambda row: (row[1], row[2]))

        # Per-node prices: nonnegative values that never sum above the cost of
        # any single bid over its bundle. Then every selected bid costs at
        # least the total price of the nodes it serves, so "weight minus
        # cover price" is an admissible net value for an edge no matter how
        # covers share bids. Seed with min cost/bundle-size and tighten each
        # node in turn by the smallest remaining slack of the bids over it.
        node_price: dict[TpbNode, float] = {}
        for performer, rows in self.bids.items():
            tasks = set()
            for mask, _, _, _ in rows:
                t = 0
                while mask:
                    if mask & 1:
                        tasks.add(t)
                    mask >>= 1
                    t += 1
            price = {t: min(cost / mask.bit_count() for mask, cost, _, _ in rows
                            if (mask >> t) & 1) for t in tasks}
            for _ in range(3):
                for t in sorted(tasks):
                    slack = min(
                        cost - sum(price[u] for u in tasks if (mask >> u) & 1)
                        for mask, cost, _, _ in rows
                        if (mask >> t) & 1
                    )
                    if slack > 0:
                        price[t] += slack
            for t in tasks:
                node_price[TpbNode(t, performer)] = price[t]
        for node in graph.tpb_nodes:
            node_price.setdefault(node, 0.0)

        groups: dict[AgentId, list[_Edge]] = {}
        for e in v_edges:
            groups.setdefault(e.atom.requester, []).append(_Edge(e, node_index, node_price))
        # Requesters with the heaviest edges first: the value part of the
        # bound then shrinks fastest along the depth of the search.
        order = sorted(groups, key=lambda r: (-max(e.weight for e in groups[r]), r))
        self.groups = [groups[r] for r in order]
        # Edges scanned in net order so the net-based test can stop a group
        # scan early; group_w_suffix lets the weight-based test do the same.
        self.group_w_suffix: list[list[float]] = []
        for group in self.groups:
            group.sort(key=lambda e: (-e.net, e.uid))
            suffix = [0.0] * (len(group) + 1)
            suffix[len(group)] = float("-inf")
            for k in range(len(group) - 1, -1, -1):
                suffix[k] = max(group[k].weight, suffix[k + 1])
            self.group_w_suffix.append(suffix)

        # suffix_max[i]: largest value still reachable from group i onward,
        # ignoring costs entirely; admissible because costs are non-negative.
        n = len(self.groups)
        self.suffix_max = [0.0] * (n + 1)
        for i in range(n - 1, -1, -1):
            best_w = max((e.weight for e in self.groups[i]), default=0.0)
            self.suffix_max[i] = self.suffix_max[i + 1] + max(0.0, best_w)

        # net_opts[i]: exact optimum of the price-accounted relaxation over
        # groups i.. (one edge or none per group, node-disjoint, net weights).
        # Any real completion from any state scores at most this, so it is an
        # admissible and much tighter replacement for a per-group max sum.
        self.net_opts = self._solve_net_relaxation()

        self.best_objective = 0.0
        self.best_sequence: tuple[int, ...] = ()
        self.best_v: tuple[ValuationHyperedge, ...] = ()
        self.best_c: tuple[BidHyperedge, ...] = ()
        self.nodes = 0

        # mutable search state
        self.used_mask = 0
        self.needed: dict[AgentId, int] = {}
        self.floors: dict[AgentId, float] = {}
        self.cost_floor = 0.0
        self.net_sum = 0.0
        self.chosen: list[_Edge] = []

    def _solve_net_relaxation(self, node_budget: int = 2_000_000) -> list[float]:
        """Exact suffix optima of the node-disjoint net-weight packing.

        Solved back to front so each level prunes with the next level's
        optimum (Russian-doll style). If the budget runs out, the remaining
        levels degrade to per-group maxima, which stays admissible.
        """
        n = len(self.groups)
        opts = [0.0] * (n + 1)
        spent = 0

        def dfs(j: int, acc: float, used: int, best: float) -> float:
            nonlocal spent
            spent += 1
            if j == n:
                return max(best, acc)
            if acc + opts[j] <= best + 1e-12:
                return best
            best = dfs(j + 1, acc, used, best)  # skip group j
            for edge in self.groups[j]:
                if acc + edge.net + opts[j + 1] <= best + 1e-12:
                    break  # net-sorted: no later edge can improve
                if used & edge.nodes_mask:
                    continue
                best = dfs(j + 1, acc + edge.net, used | edge.nodes_mask, best)
            return best

        for i in range(n - 1, -1, -1):
            top = max(0.0, max((e.net for e in self.groups[i]), default=0.0))
            # Seed with a valid upper bound so the entry-level prune check is
            # sound while this level is being solved; replaced by the exact
            # value afterwards.
            opts[i] = opts[i + 1] + top
            if spent > node_budget:
                continue
            opts[i] = dfs(i, 0.0, 0, 0.0)
        return opts

    # -- bid-side helpers ----------------------------------------------------

    def cover_cost_floor(self, performer: AgentId, needed_mask: int) -> float | None:
        """Cheapest cost of any bid of the performer covering the needed tasks.

        Valid lower bound in both modes: whatever bid finally serves the
        performer must contain every task already demanded of it.
        """
        for mask, cost, _, _ in self.bids.get(performer, ()):
            if needed_mask & ~mask == 0:
                return cost
        return None

    def leaf_cover(self, performer: AgentId, needed_mask: int) -> BidHyperedge | None:
        """Cheapest admissible bid for the performer's final demanded task set."""
        for mask, _, _, edge in self.bids.get(performer, ()):
            if mask == needed_mask or (self.free_disposal and needed_mask & ~mask == 0):
                return edge
        return None

    # -- pruning -------------------------------------------------------------

    def prunable(self, bound: float) -> bool:
        if bound < self.best_objective - TIE_TOL:
            return True
        # Nothing beats the empty allocation on the tie-break, so once it is
        # incumbent there is no point chasing equal-objective completions.
        return not self.best_sequence and bound <= self.best_objective + TIE_TOL

    def offer(self, value_sum: float) -> None:
        covers: list[BidHyperedge] = []
        for performer in sorted(self.needed):
            edge = self.leaf_cover(performer, self.needed[performer])
            if edge is None:
                return
            covers.append(edge)
        objective = value_sum - sum(e.weight for e in covers)
        sequence = tuple(sorted([e.uid for e in self.chosen] + [e.uid for e in covers]))
        if _improves(objective, sequence, self.best_objective, self.best_sequence):
            self.best_objective = objective
            self.best_sequence = sequence
            self.best_v = tuple(e.edge for e in self.chosen)
            self.best_c = tuple(covers)

    # -- recursion -----------------------------------------------------------

    def run(self) -> None:
        self._seed_incumbent()
        self._descend(0, 0.0)

    def _seed_incumbent(self) -> None:
        """Greedy warm start: repeatedly commit the edge with the best actual
        net gain. Purely an incumbent for pruning; the exhaustive descent
        still decides optimality and tie-breaking."""
        needed: dict[AgentId, int] = {}
        floors: dict[AgentId, float] = {}
        used = 0
        taken: list[_Edge] = []
        open_groups = list(range(len(self.groups)))
        value_sum = 0.0
        while True:
            best_gain = TIE_TOL
            best_edge = None
            best_index = None
            best_updates = None
            for gi in open_groups:
                for edge in self.groups[gi]:
                    if used & edge.nodes_mask:
                        continue
                    extra = 0.0
                    updates = []
                    feasible = True
                    for performer, task_mask in edge.perf_tasks:
                        new_mask = needed.get(performer, 0) | task_mask
                        floor_after = self.cover_cost_floor(performer, new_mask)
                        if floor_after is None:
                            feasible = False
                            break
                        extra += floor_after - floors.get(performer, 0.0)
                        updates.append((performer, new_mask, floor_after))
                    if not feasible:
                        continue
                    gain = edge.weight - extra
                    if gain > best_gain:
                        best_gain = gain
                        best_edge = edge
                        best_index = gi
                        best_updates = updates
            if best_edge is None:
                break
            for performer, new_mask, floor_after in best_updates:
                needed[performer] = new_mask
                floors[performer] = floor_after
            used |= best_edge.nodes_mask
            taken.append(best_edge)
            value_sum += best_edge.weight
            open_groups.remove(best_index)
        if not taken:
            return
        covers: list[BidHyperedge] = []
        for performer in sorted(needed):
            edge = self.leaf_cover(performer, needed[performer])
            if edge is None:
                return
            covers.append(edge)
        objective = value_sum - sum(e.weight for e in covers)
        sequence = tuple(sorted([e.uid for e in taken] + [e.uid for e in covers]))
        if _improves(objective, sequence, self.best_objective, self.best_sequence):
            self.best_objective = objective
            self.best_sequence = sequence
            self.best_v = tuple(e.edge for e in taken)
            self.best_c = tuple(covers)

    def _apply(self, edge: _Edge) -> list[tuple[AgentId, int, float]] | None:
        """Commit an edge's cover; returns the undo trail, or None if no bid
        of some performer can cover its enlarged demand."""
        trail: list[tuple[AgentId, int, float]] = []
        for performer, task_mask in edge.perf_tasks:
            old_mask = self.needed.get(performer, 0)
            new_mask = old_mask | task_mask
            floor_after = self.cover_cost_floor(performer, new_mask)
            if floor_after is None:
                self._undo(trail)
                return None
            old_floor = self.floors.get(performer, 0.0)
            trail.append((performer, old_mask, old_floor))
            self.needed[performer] = new_mask
            self.floors[performer] = floor_after
            self.cost_floor += floor_after - old_floor
        self.used_mask |= edge.nodes_mask
        return trail

    def _undo(self, trail: list[tuple[AgentId, int, float]]) -> None:
        for performer, old_mask, old_floor in reversed(trail):
            self.cost_floor -= self.floors[performer] - old_floor
            if old_mask:
                self.needed[performer] = old_mask
                self.floors[performer] = old_floor
            else:
                del self.needed[performer]
                del self.floors[performer]

    def _descend(self, index: int, value_sum: float) -> None:
        self.nodes += 1
        if index == len(self.groups):
            self.offer(value_sum)
            return

        remaining_w = self.suffix_max[index + 1]
        remaining_n = self.net_opts[index + 1]
        w_suffix = self.group_w_suffix[index]
        used_before = self.used_mask
        net_before = self.net_sum
        for k, edge in enumerate(self.groups[index]):
            # Edges are scanned in net order and w_suffix is nonincreasing,
            # so once either test fails for the rest of the scan, stop.
            if self.prunable(net_before + edge.net + remaining_n):
                break
            if self.prunable(value_sum + w_suffix[k] + remaining_w - self.cost_floor):
                break
            if self.prunable(value_sum + edge.weight + remaining_w - self.cost_floor):
                continue
            if used_before & edge.nodes_mask:
                continue
            trail = self._apply(edge)
            if trail is None:
                continue
            if self.prunable(value_sum + edge.weight + remaining_w - self.cost_floor):
                self.used_mask = used_before
                self._undo(trail)
                continue
            self.chosen.append(edge)
            self.net_sum = net_before + edge.net
            self._descend(index + 1, value_sum + edge.weight)
            self.chosen.pop()
            self.net_sum = net_before
            self.used_mask = used_before
            self._undo(trail)

        if self.prunable(value_sum + remaining_w - self.cost_floor):
            return
        if self.prunable(net_before + remaining_n):
            return
        self._descend(index + 1, value_sum)


def solve(
    graph: AllocationHypergraph,
    free_disposal: bool,
    restriction: EdgeFilter | None = None,
) -> SolveResult:
    """Provably optimal feasible allocation, deterministic under ties.

    ``restriction`` filters both edge lists before the search; payment rules
    use it to evaluate the market without one agent.
    """
    start = time.perf_counter()
    search = _Search(graph, free_disposal, restriction)
    search.run()
    elapsed = time.perf_counter() - start
    allocation = Allocation(search.best_v, search.best_c)
    return SolveResult(
        allocation=allocation,
        objective=search.best_objective,
        stats=SolveStats(nodes_explored=search.nodes, wall_time=elapsed),
    )


def brute_force_optimum(
    graph: AllocationHypergraph,
    free_disposal: bool,
    restriction: EdgeFilter | None = None,
    guard: int = 10_000_000,
) -> SolveResult:
    """Exhaustive verification oracle.

    Enumerates every subset of valuation edges satisfying the XOR and
    matching conditions (one-or-none per requester, node-disjoint covers),
    pairs each with the cheapest feasible bid cover, and re-verifies every
    candidate with the feasibility checker before scoring it. No bounds, no
    pruning by objective; aborts with an error once the number of enumerated
    combinations exceeds the guard.
    """
    start = time.perf_counter()
    v_edges = [e for e in graph.v_edges if restriction is None or restriction(e)]
    c_edges = [e for e in graph.c_edges if restriction is None or restriction(e)]

    v_groups: dict[AgentId, list[ValuationHyperedge]] = {}
    for e in v_edges:
        v_groups.setdefault(e.atom.requester, []).append(e)
    v_lists = [v_groups[r] for r in sorted(v_groups)]
    c_by_performer: dict[AgentId, list[BidHyperedge]] = {}
    for e in c_edges:
        c_by_performer.setdefault(e.atom.performer, []).append(e)

    best_objective = 0.0
    best_sequence: tuple[int, ...] = ()
    best_alloc = EMPTY_ALLOCATION
    evaluated = 0

    def cheapest_cover(picked: list[ValuationHyperedge]) -> list[BidHyperedge] | None:
        needed: dict[AgentId, set[int]] = {}
        for edge in picked:
            for node in edge.cover:
                needed.setdefault(node.performer, set()).add(node.task)
        covers = []
        for performer in sorted(needed):
            tasks = frozenset(needed[performer])
            best = None
            for e in c_by_performer.get(performer, ()):
                ok = e.atom.bundle == tasks or (free_disposal and tasks <= e.atom.bundle)
                if ok and (best is None or (e.weight, e.uid) < (best.weight, best.uid)):
                    best = e
            if best is None:
                return None
            covers.append(best)
        return covers

    def descend(index: int, picked: list[ValuationHyperedge], used: set[TpbNode]) -> None:
        nonlocal evaluated, best_objective, best_sequence, best_alloc
        evaluated += 1
        if evaluated > guard:
            raise OracleGuardError(
                f"instance too large for oracle: more than {guard} combinations"
            )
        if index == len(v_lists):
            covers = cheapest_cover(picked)
            if covers is None:
                return
            alloc = Allocation(tuple(picked), tuple(covers))
            if not check_feasible(graph, alloc, free_disposal):
                return
            objective = allocation_objective(alloc)
            sequence = alloc.uid_sequence()
            if _improves(objective, sequence, best_objective, best_sequence):
                best_objective = objective
                best_sequence = sequence
                best_alloc = alloc
            return
        descend(index + 1, picked, used)
        for edge in v_lists[index]:
            if used & edge.cover:
                continue
            picked.append(edge)
            descend(index + 1, picked, used | edge.cover)
            picked.pop()

    descend(0, [], set())
    elapsed = time.perf_counter() - start
    return SolveResult(
        allocation=best_alloc,
        objective=best_objective,
        stats=SolveStats(nodes_explored=evaluated, wall_time=elapsed),
    )
