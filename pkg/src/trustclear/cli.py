"""Command-line front end and the JSON instance format.

Commands: solve, pay, audit, count, gen, bench. Exit codes: 0 on success,
1 when an oracle cross-check or audit fails, 2 on input errors (malformed
files, validation violations, mechanism/instance shape mismatches).

The instance document holds everything one clearing round needs: tasks,
agents, the trust model, per-requester valuations, per-performer bids,
per-reporter EQOS triples, the free-disposal flag, and the declared EQOS
domain. Serialisation is canonical (sorted keys and entries), so identical
instances produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .core import (
    BidAtom,
    EqosMatrix,
    ReportProfile,
    TrustClearError,
    ValuationMap,
    bundle_key,
    validate_report_profile,
)
from .hypergraph import build_hypergraph, count_allocations
from .mechanism import (
    DiscountPolicy,
    MechanismKind,
    PaymentSchedule,
    gtbm_allocate,
    gtbm_payment_schedule,
    naive_vickrey_payment,
    porter_schedule,
    single_task_tbm,
)
from .simulator import (
    AUDIT_MECHANISMS,
    AuditConfig,
    audit_incentive_compatibility,
    audit_individual_rationality,
)
from .solver import brute_force_optimum
from .trust import WEIGHTED_SUM, TrustModel, build_trust_table


class InstanceFormatError(TrustClearError):
    """The instance document does not match the expected schema."""


# ---------------------------------------------------------------------------
# instance (de)serialisation
# ---------------------------------------------------------------------------


def profile_to_json(profile: ReportProfile, model: TrustModel) -> dict:
    if model.kind == WEIGHTED_SUM:
        model_doc = {
            "kind": "weighted_sum",
            "weights": [model.weights.get(a, 0.0) for a in sorted(profile.agents)],
        }
    else:
        model_doc = {"kind": "self_trust"}
    return {
        "tasks": sorted(profile.tasks),
        "agents": sorted(profile.agents),
        "trust_model": model_doc,
        "valuations": [
            {
                "requester": vmap.requester,
                "entries": [
                    {"bundle": list(bundle_key(b)), "value": vmap.entries[b]}
                    for b in sorted(vmap.entries, key=bundle_key)
                ],
            }
            for vmap in sorted(profile.valuations, key=lambda v: v.requester)
        ],
        "bids": [
            {
                "performer": performer,
                "entries": [
                    {"bundle": list(bundle_key(b.bundle)), "cost": b.cost}
                    for b in sorted(
                        profile.bid_atoms_of(performer), key=lambda b: bundle_key(b.bundle)
                    )
                ],
            }
            for performer in profile.performers()
        ],
        "eqos": [
            {
                "reporter": matrix.reporter,
                "entries": [
                    {"performer": j, "task": t, "value": matrix.entries[(j, t)]}
                    for (j, t) in sorted(matrix.entries)
                ],
            }
            for matrix in sorted(profile.eqos, key=lambda m: m.reporter)
        ],
        "free_disposal": profile.free_disposal,
        "eqos_domain": list(profile.eqos_domain),
    }


def profile_from_json(doc: dict) -> tuple[ReportProfile, TrustModel]:
    try:
        agents = tuple(int(a) for a in doc["agents"])
        tasks = tuple(int(t) for t in doc["tasks"])

        valuations = []
        for block in doc.get("valuations", []):
            requester = int(block["requester"])
            entries: dict[frozenset, float] = {}
            for item in block["entries"]:
                bundle = frozenset(int(t) for t in item["bundle"])
                if bundle in entries:
                    raise InstanceFormatError(
                        f"duplicate bundle: requester {requester} bundle {sorted(bundle)}"
                    )
                entries[bundle] = float(item["value"])
            valuations.append(ValuationMap(requester, entries))

        bids = []
        for block in doc.get("bids", []):
            performer = int(block["performer"])
            for item in block["entries"]:
                bundle = frozenset(int(t) for t in item["bundle"])
                bids.append(BidAtom(performer, bundle, float(item["cost"])))

        eqos = []
        for block in doc.get("eqos", []):
            reporter = int(block["reporter"])
            entries = {}
            for item in block["entries"]:
                key = (int(item["performer"]), int(item["task"]))
                if key in entries:
                    raise InstanceFormatError(
                        f"duplicate EQOS entry: reporter {reporter} pair {key}"
                    )
                entries[key] = float(item["value"])
            eqos.append(EqosMatrix(reporter, entries))

        domain = doc.get("eqos_domain", [0.0, 1.0])
        profile = ReportProfile(
            agents=agents,
            tasks=tasks,
            valuations=tuple(valuations),
            bids=tuple(bids),
            eqos=tuple(eqos),
            free_disposal=bool(doc.get("free_disposal", False)),
            eqos_domain=(float(domain[0]), float(domain[1])),
        )

        model_doc = doc.get("trust_model", {"kind": "uniform"})
        kind = model_doc.get("kind", "uniform")
        if kind == "weighted_sum":
            weights = model_doc["weights"]
            if len(weights) != len(agents):
                raise InstanceFormatError(
                    "trust model weights must align with the sorted agent list"
                )
            model = TrustModel.weighted_sum(
                {a: float(w) for a, w in zip(sorted(agents), weights)}
            )
        elif kind == "uniform":
            model = TrustModel.uniform(agents)
        elif kind == "self_trust":
            model = TrustModel.self_trust()
        else:
            raise InstanceFormatError(f"unknown trust model kind: {kind!r}")
        return profile, model
    except InstanceFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InstanceFormatError(f"malformed instance document: {exc}") from exc


def save_instance(path: str | Path, profile: ReportProfile, model: TrustModel) -> None:
    text = json.dumps(profile_to_json(profile, model), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_instance(path: str | Path) -> tuple[ReportProfile, TrustModel]:
    """Parse and validate an instance file; raises on any violation."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"cannot read instance {path}: {exc}") from exc
    profile, model = profile_from_json(doc)
    violations = validate_report_profile(profile)
    if violations:
        raise InstanceFormatError(
            "invalid instance:\n" + "\n".join(f"  - {v}" for v in violations)
        )
    return profile, model


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _print_allocation(result) -> None:
    assignments = result.allocation.assignments()
    for a in assignments:
        print(f"assign: task {a.task} requester {a.requester} performer {a.performer}")
    if not assignments:
        print("empty allocation")
        print(f"objective: {result.objective:.4f}")
    elif len(assignments) == 1:
        print(f"winner: agent {assignments[0].performer}, objective {result.objective:.4f}")
    else:
        print(f"objective: {result.objective:.4f}")


def cmd_solve(args) -> int:
    profile, model = load_instance(args.instance)
    result = gtbm_allocate(profile, model)
    _print_allocation(result)
    if args.oracle:
        table = build_trust_table(model, profile)
        graph = build_hypergraph(profile, table)
        reference = brute_force_optimum(graph, profile.free_disposal)
        if abs(reference.objective - result.objective) > 1e-6:
            print(
                f"oracle mismatch: solver {result.objective:.6f}"
                f" vs oracle {reference.objective:.6f}",
                file=sys.stderr,
            )
            return 1
        print("oracle: match")
    return 0


def _parse_outcome(text: str, n_assignments: int) -> int:
    if text == "success":
        return (1 << n_assignments) - 1
    if text == "all-fail":
        return 0
    mask = int(text, 0)
    if not (0 <= mask < (1 << max(n_assignments, 1))):
        raise InstanceFormatError(f"outcome bitmask {text} out of range")
    return mask


def _print_schedule(schedule: PaymentSchedule, outcome: str | None) -> None:
    n = len(schedule.assignments)
    for a in schedule.assignments:
        print(f"assign: task {a.task} requester {a.requester} performer {a.performer}")
    if outcome is None:
        width = max(n, 1)
        for agent in schedule.agents:
            for mask in range(schedule.n_patterns):
                print(f"agent {agent} pattern {mask:0{width}b}: {schedule.payment(agent, mask):.4f}")
        return
    mask = _parse_outcome(outcome, n)
    for agent in schedule.agents:
        print(f"agent {agent}: transfer {schedule.payment(agent, mask):.4f}")
    print(f"centre balance: {schedule.centre_balance(mask):.4f}")


def cmd_pay(args) -> int:
    profile, model = load_instance(args.instance)
    policy = DiscountPolicy.parse(args.policy)
    mechanism = args.mechanism

    if mechanism == MechanismKind.NAIVE_VICKREY.value:
        winner, payments = naive_vickrey_payment(profile, args.mode)
        if args.json:
            doc = {"winner": winner, "payments": {str(a): payments[a] for a in profile.agents}}
            print(json.dumps(doc, indent=2, sort_keys=True))
            return 0
        print(f"winner: {'none' if winner is None else f'agent {winner}'}")
        for agent in profile.agents:
            print(f"agent {agent}: payment {payments[agent]:.4f}")
        return 0

    winner = None
    if mechanism == MechanismKind.GTBM.value:
        result = gtbm_allocate(profile, model)
        schedule = gtbm_payment_schedule(profile, model, result, policy)
    elif mechanism == MechanismKind.SINGLE_TASK_TBM.value:
        winner, schedule = single_task_tbm(profile, model, policy)
    elif mechanism == MechanismKind.PORTER.value:
        winner, schedule = porter_schedule(profile)
    else:
        raise InstanceFormatError(f"unknown mechanism: {mechanism!r}")

    if args.json:
        print(json.dumps(schedule.to_json(), indent=2, sort_keys=True))
        return 0
    if mechanism != MechanismKind.GTBM.value:
        print(f"winner: {'none' if winner is None else f'agent {winner}'}")
    _print_schedule(schedule, args.outcome)
    return 0


def cmd_audit(args) -> int:
    profile, model = load_instance(args.instance)
    policy = DiscountPolicy.parse(args.policy)
    config = AuditConfig(
        eqos_steps=args.eqos_steps,
        scale_steps=args.scale_steps,
        n_samples=args.samples,
        seed=args.seed,
        tolerance=args.tolerance,
        ir_type_steps=args.ir_type_steps if args.ir else 0,
    )
    if args.ir:
        report = audit_individual_rationality(profile, model, policy, config)
    else:
        report = audit_incentive_compatibility(
            profile, model, policy, config, mechanism=args.mechanism
        )
    if args.json:
        print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    else:
        print(report.format_table())
    return 0 if report.passed else 1


def cmd_count(args) -> int:
    profile, _ = load_instance(args.instance)
    print(count_allocations(profile))
    return 0


def _parse_pair(text: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in text.split(","))
    return lo, hi


def cmd_gen(args) -> int:
    config = bench_mod.GenConfig(
        n_tasks=args.tasks,
        n_requesters=args.requesters,
        n_performers=args.performers,
        geometric_p=args.geometric_p,
        value_range=_parse_pair(args.value_range),
        cost_range=_parse_pair(args.cost_range),
        eqos_range=_parse_pair(args.eqos_range),
        max_bundle=args.max_bundle,
        free_disposal=not args.no_free_disposal,
        seed=args.seed,
    )
    profile = bench_mod.generate_instance(config)
    model = bench_mod.default_model(profile)
    if args.out:
        save_instance(args.out, profile, model)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(profile_to_json(profile, model), indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    configs = []
    for spec_text in args.set:
        t, r, p = (int(x) for x in spec_text.split(","))
        configs.append(
            bench_mod.GenConfig(
                n_tasks=t,
                n_requesters=r,
                n_performers=p,
                geometric_p=args.geometric_p,
                seed=args.seed,
            )
        )
    workers = 1
    if args.parallel:
        workers = int(os.environ.get("TRUSTCLEAR_THREADS", os.cpu_count() or 1))
    out_csv = Path(args.out)
    figure = out_csv.with_suffix(".png")
    rows = bench_mod.run_benchmark(
        configs,
        runs_per_config=args.runs,
        out_csv=out_csv,
        figure_path=figure,
        save_instances=args.save_instances,
        workers=workers,
    )
    failed = sum(1 for r in rows if r.error is not None)
    print(f"wrote {out_csv} and {figure}: {len(rows)} rows, {failed} failures")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trustclear",
        description="Exact clearing engine for trust-based combinatorial task allocation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="compute the efficient allocation")
    p_solve.add_argument("instance")
    p_solve.add_argument("--oracle", action="store_true", help="cross-check with brute force")
    p_solve.set_defaults(fn=cmd_solve)

    p_pay = sub.add_parser("pay", help="compute contingent payments or realized transfers")
    p_pay.add_argument("instance")
    p_pay.add_argument(
        "--mechanism",
        choices=[m.value for m in MechanismKind],
        default=MechanismKind.GTBM.value,
    )
    p_pay.add_argument("--policy", default="zero", help="zero | fixed:<v> | min-marginal")
    p_pay.add_argument("--outcome", default=None, help="bitmask | success | all-fail")
    p_pay.add_argument("--mode", choices=["certain", "expected"], default="expected")
    p_pay.add_argument("--json", action="store_true")
    p_pay.set_defaults(fn=cmd_pay)

    p_audit = sub.add_parser("audit", help="empirical incentive or participation audit")
    p_audit.add_argument("instance")
    p_audit.add_argument("--mechanism", choices=list(AUDIT_MECHANISMS), default="gtbm")
    p_audit.add_argument("--policy", default="zero")
    p_audit.add_argument("--ir", action="store_true", help="audit participation instead")
    p_audit.add_argument("--eqos-steps", type=int, default=5)
    p_audit.add_argument("--scale-steps", type=int, default=5)
    p_audit.add_argument("--samples", type=int, default=20)
    p_audit.add_argument("--seed", type=int, default=0)
    p_audit.add_argument("--tolerance", type=float, default=1e-6)
    p_audit.add_argument("--ir-type-steps", type=int, default=5)
    p_audit.add_argument("--json", action="store_true")
    p_audit.set_defaults(fn=cmd_audit)

    p_count = sub.add_parser("count", help="count the feasible allocations")
    p_count.add_argument("instance")
    p_count.set_defaults(fn=cmd_count)

    p_gen = sub.add_parser("gen", help="generate a random instance")
    p_gen.add_argument("--tasks", type=int, required=True)
    p_gen.add_argument("--requesters", type=int, required=True)
    p_gen.add_argument("--performers", type=int, required=True)
    p_gen.add_argument("--geometric-p", type=float, default=0.23)
    p_gen.add_argument("--value-range", default="50,300")
    p_gen.add_argument("--cost-range", default="10,200")
    p_gen.add_argument("--eqos-range", default="0.3,1.0")
    p_gen.add_argument("--max-bundle", type=int, default=5)
    p_gen.add_argument("--no-free-disposal", action="store_true")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(fn=cmd_gen)

    p_bench = sub.add_parser("bench", help="timing harness over generated instances")
    p_bench.add_argument(
        "--set",
        action="append",
        required=True,
        metavar="T,R,P",
        help="tasks,requesters,performers (repeatable)",
    )
    p_bench.add_argument("--runs", type=int, default=10)
    p_bench.add_argument("--geometric-p", type=float, default=0.23)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="bench.csv")
    p_bench.add_argument("--save-instances", default=None)
    p_bench.add_argument(
        "--parallel",
        action="store_true",
        help="one instance per worker thread, capped by TRUSTCLEAR_THREADS",
    )
    p_bench.set_defaults(fn=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrustClearError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
