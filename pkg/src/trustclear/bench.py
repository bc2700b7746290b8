"""Random instance generation and the winner-determination timing harness.

Instances follow the benchmark recipe: the number of valuation atoms per
requester and bid atoms per performer is geometric (support 1, 2, ...; the
default parameter 0.23 gives about 4.3 atoms per agent), bundles are uniform
random task subsets of bounded size, and values, costs, and EQOS entries are
uniform draws. Generated valuation maps are clamped to be subset-monotone so
min-marginal discounts apply to every generated instance.

The harness times the solve alone (generation and graph construction are
excluded), emits a CSV sorted by allocation count, and renders a log-log
scatter of solve time against allocation count next to it.
"""

from __future__ import annotations

import csv
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import BidAtom, EqosMatrix, ReportProfile, ValuationMap
from .hypergraph import build_hypergraph, count_allocations
from .solver import solve
from .trust import TrustModel, build_trust_table


@dataclass(frozen=True)
class GenConfig:
    n_tasks: int
    n_requesters: int
    n_performers: int
    geometric_p: float = 0.23
    value_range: tuple[float, float] = (50.0, 300.0)
    cost_range: tuple[float, float] = (10.0, 200.0)
    eqos_range: tuple[float, float] = (0.3, 1.0)
    max_bundle: int = 5
    free_disposal: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_tasks, self.n_requesters, self.n_performers) < 1:
            raise ValueError("task and agent counts must be at least 1")
        if not (0.0 < self.geometric_p <= 1.0):
            raise ValueError("geometric_p must lie in (0, 1]")


def default_model(profile: ReportProfile) -> TrustModel:
    return TrustModel.uniform(profile.agents)


def _distinct_bundles(rng: np.random.Generator, n_tasks: int, cap: int, count: int) -> list[frozenset]:
    cap = min(cap, n_tasks)
    available = sum(math.comb(n_tasks, s) for s in range(1, cap + 1))
    count = min(count, available)
    bundles: list[frozenset] = []
    seen: set[frozenset] = set()
    attempts = 0
    while len(bundles) < count and attempts < 50 * count:
        attempts += 1
        size = int(rng.integers(1, cap + 1))
        bundle = frozenset(int(t) for t in rng.choice(n_tasks, size=size, replace=False))
        if bundle not in seen:
            seen.add(bundle)
            bundles.append(bundle)
    return bundles


def _clamp_subset_monotone(entries: dict[frozenset, float]) -> dict[frozenset, float]:
    # Larger bundles first, so each bundle is clamped against final superset values.
    out = dict(entries)
    for bundle in sorted(out, key=len, reverse=True):
        ceiling = min(
            (out[other] for other in out if bundle < other),
            default=None,
        )
        if ceiling is not None and out[bundle] > ceiling:
            out[bundle] = ceiling
    return out


def generate_instance(config: GenConfig) -> ReportProfile:
    """Draw one instance; identical seeds give identical profiles."""
    rng = np.random.default_rng(config.seed)
    requesters = list(range(config.n_requesters))
    performers = list(range(config.n_requesters, config.n_requesters + config.n_performers))
    agents = requesters + performers
    tasks = list(range(config.n_tasks))

    valuations = []
    for r in requesters:
        k = int(rng.geometric(config.geometric_p))
        bundles = _distinct_bundles(rng, config.n_tasks, config.max_bundle, k)
        entries = {b: float(rng.uniform(*config.value_range)) for b in bundles}
        valuations.append(ValuationMap(r, _clamp_subset_monotone(entries)))

    bids = []
    for p in performers:
        k = int(rng.geometric(config.geometric_p))
        bundles = _distinct_bundles(rng, config.n_tasks, config.max_bundle, k)
        for b in sorted(bundles, key=lambda x: tuple(sorted(x))):
            bids.append(BidAtom(p, b, float(rng.uniform(*config.cost_range))))

    pairs = sorted({(b.performer, t) for b in bids for t in b.bundle})
    lo, hi = config.eqos_range
    eqos = []
    for reporter in agents:
        entries = {pair: float(rng.uniform(lo, hi)) for pair in pairs}
        eqos.append(EqosMatrix(reporter, entries))

    return ReportProfile(
        agents=tuple(agents),
        tasks=tuple(tasks),
        valuations=tuple(valuations),
        bids=tuple(bids),
        eqos=tuple(eqos),
        free_disposal=config.free_disposal,
        eqos_domain=(lo, hi),
    )


def all_bundles_profile(
    n_tasks: int,
    n_requesters: int,
    n_performers: int,
    value: float = 100.0,
    cost: float = 10.0,
    eqos: float = 0.9,
) -> ReportProfile:
    """Worst-case shape: every requester values all tasks, every performer bids all."""
    requesters = list(range(n_requesters))
    performers = list(range(n_requesters, n_requesters + n_performers))
    tasks = tuple(range(n_tasks))
    full = frozenset(tasks)
    valuations = tuple(ValuationMap(r, {full: value}) for r in requesters)
    bids = tuple(BidAtom(p, full, cost) for p in performers)
    pairs = [(p, t) for p in performers for t in tasks]
    matrices = tuple(
        EqosMatrix(a, {pair: eqos for pair in pairs}) for a in requesters + performers
    )
    return ReportProfile(
        agents=tuple(requesters + performers),
        tasks=tasks,
        valuations=valuations,
        bids=bids,
        eqos=matrices,
        free_disposal=True,
        eqos_domain=(0.0, 1.0),
    )


@dataclass(frozen=True)
class BenchRow:
    seed: int
    n_tasks: int
    n_requesters: int
    n_performers: int
    allocation_count: int
    v_edges: int
    c_edges: int
    solve_ms: float | None
    objective: float | None
    error: str | None = None


CSV_COLUMNS = (
    "seed",
    "n_tasks",
    "n_requesters",
    "n_performers",
    "allocation_count",
    "v_edges",
    "c_edges",
    "solve_ms",
    "objective",
)


def bench_one(config: GenConfig) -> BenchRow:
    """Generate, build, and time a single solve."""
    profile = generate_instance(config)
    count = count_allocations(profile)
    try:
        model = default_model(profile)
        table = build_trust_table(model, profile)
        graph = build_hypergraph(profile, table)
        start = time.perf_counter()
        result = solve(graph, profile.free_disposal)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        return BenchRow(
            seed=config.seed,
            n_tasks=config.n_tasks,
            n_requesters=config.n_requesters,
            n_performers=config.n_performers,
            allocation_count=count,
            v_edges=len(graph.v_edges),
            c_edges=len(graph.c_edges),
            solve_ms=elapsed_ms,
            objective=result.objective,
        )
    except Exception as exc:  # per-instance failures are recorded, not fatal
        return BenchRow(
            seed=config.seed,
            n_tasks=config.n_tasks,
            n_requesters=config.n_requesters,
            n_performers=config.n_performers,
            allocation_count=count,
            v_edges=0,
            c_edges=0,
            solve_ms=None,
            objective=None,
            error=str(exc),
        )


def run_benchmark(
    configs: list[GenConfig],
    runs_per_config: int,
    out_csv: str | Path | None = None,
    figure_path: str | Path | None = None,
    save_instances: str | Path | None = None,
    workers: int = 1,
) -> list[BenchRow]:
    """Generate and solve instances, returning rows sorted by allocation count."""
    jobs = [
        replace(config, seed=config.seed + run)
        for config in configs
        for run in range(runs_per_config)
    ]
    if workers > 1 and jobs:
        print(
            f"benchmark: running {workers} instances per wave; timings are contended",
            file=sys.stderr,
        )
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(bench_one, jobs))
    else:
        rows = [bench_one(job) for job in jobs]

    if save_instances is not None:
        from .cli import save_instance  # deferred: cli depends on this module

        directory = Path(save_instances)
        directory.mkdir(parents=True, exist_ok=True)
        for job in jobs:
            profile = generate_instance(job)
            save_instance(
                directory / f"instance_seed{job.seed}.json", profile, default_model(profile)
            )

    rows.sort(key=lambda r: (r.allocation_count, r.seed))
    if out_csv is not None:
        write_csv(rows, out_csv)
    if figure_path is not None:
        render_figure(rows, figure_path)
    return rows


def write_csv(rows: list[BenchRow], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.seed,
                    r.n_tasks,
                    r.n_requesters,
                    r.n_performers,
                    r.allocation_count,
                    r.v_edges,
                    r.c_edges,
                    "" if r.solve_ms is None else f"{r.solve_ms:.3f}",
                    "" if r.objective is None else f"{r.objective:.6f}",
                ]
            )


def render_figure(rows: list[BenchRow], path: str | Path) -> None:
    """Log-log scatter of solve time against allocation count."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in rows if r.solve_ms is not None and r.allocation_count > 0]
    xs = [r.allocation_count for r in ok]
    ys = [max(r.solve_ms / 1000.0, 1e-6) for r in ok]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.scatter(xs, ys, s=14, alpha=0.6, edgecolors="none")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("allocation count")
    ax.set_ylabel("solve time [s]")
    ax.set_title("Winner determination scaling")
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
