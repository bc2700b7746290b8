"""trustclear: exact clearing for trust-based combinatorial task allocation.

The engine aggregates subjective success estimates into per-assignment
completion probabilities, represents the clearing problem as a pair of
weighted hypergraph matchings, solves it exactly, and settles with
outcome-contingent payments whose incentive properties can be audited
empirically.
"""

from .core import (
    AgentId,
    Assignment,
    BidAtom,
    EqosMatrix,
    ExecutionOutcome,
    ReportProfile,
    TaskId,
    TrustClearError,
    ValuationAtom,
    ValuationMap,
    validate_report_profile,
)
from .trust import (
    TrustModel,
    TrustTable,
    allocation_completion_trust,
    build_trust_table,
    bundle_completion_trust,
    weighted_sum_trust,
)
from .hypergraph import (
    Allocation,
    AllocationHypergraph,
    BidHyperedge,
    TpbNode,
    ValuationHyperedge,
    build_hypergraph,
    check_feasible,
    count_allocations,
    enumerate_fulfilling_sets,
    hyperedge_weight,
)
from .solver import SolveResult, brute_force_optimum, exclude_agents, solve
from .mechanism import (
    DiscountPolicy,
    MechanismKind,
    PaymentSchedule,
    gtbm_allocate,
    gtbm_payment_schedule,
    min_marginal_discount,
    naive_vickrey_payment,
    porter_payment,
    porter_schedule,
    single_task_tbm,
)
from .simulator import (
    AuditConfig,
    AuditReport,
    audit_incentive_compatibility,
    audit_individual_rationality,
    expected_utility,
    sample_execution,
)
from .bench import GenConfig, generate_instance, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "AgentId",
    "Allocation",
    "AllocationHypergraph",
    "Assignment",
    "AuditConfig",
    "AuditReport",
    "BidAtom",
    "BidHyperedge",
    "DiscountPolicy",
    "EqosMatrix",
    "ExecutionOutcome",
    "GenConfig",
    "MechanismKind",
    "PaymentSchedule",
    "ReportProfile",
    "SolveResult",
    "TaskId",
    "TpbNode",
    "TrustClearError",
    "TrustModel",
    "TrustTable",
    "ValuationAtom",
    "ValuationHyperedge",
    "ValuationMap",
    "allocation_completion_trust",
    "audit_incentive_compatibility",
    "audit_individual_rationality",
    "brute_force_optimum",
    "build_hypergraph",
    "build_trust_table",
    "bundle_completion_trust",
    "check_feasible",
    "count_allocations",
    "enumerate_fulfilling_sets",
    "exclude_agents",
    "expected_utility",
    "generate_instance",
    "gtbm_allocate",
    "gtbm_payment_schedule",
    "hyperedge_weight",
    "min_marginal_discount",
    "naive_vickrey_payment",
    "porter_payment",
    "porter_schedule",
    "run_benchmark",
    "sample_execution",
    "single_task_tbm",
    "solve",
    "validate_report_profile",
    "weighted_sum_trust",
]
