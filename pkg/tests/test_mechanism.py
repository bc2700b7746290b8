import itertools

import pytest

from trustclear.bench import GenConfig, default_model, generate_instance
from trustclear.core import (
    BidAtom,
    EqosMatrix,
    ExecutionOutcome,
    InstanceShapeError,
    ReportProfile,
    UnsupportedTrustModelError,
    ValuationMap,
)
from trustclear.mechanism import (
    DiscountPolicy,
    contingent_schedule,
    gtbm_allocate,
    gtbm_payment_schedule,
    min_marginal_discount,
    naive_vickrey_payment,
    porter_payment,
    porter_schedule,
    single_task_tbm,
)
from trustclear.trust import TrustModel, build_trust_table, expected_subset_value

from conftest import example6_model, example6_profile, table2_profile


def test_policy_parsing():
    assert DiscountPolicy.parse("zero") == DiscountPolicy.zero()
    assert DiscountPolicy.parse("fixed:0.6") == DiscountPolicy.fixed(0.6)
    assert DiscountPolicy.parse("min-marginal") == DiscountPolicy.min_marginal()
    with pytest.raises(ValueError):
        DiscountPolicy.parse("fixed")
    with pytest.raises(ValueError):
        DiscountPolicy.fixed(-1.0)


def test_allocation_flips_under_trust_misreport(table2):
    profile, model = table2
    truthful = gtbm_allocate(profile, model)
    assert truthful.objective == pytest.approx(0.8)
    assert truthful.allocation.assignments()[0].performer == 2

    misreport = gtbm_allocate(table2_profile(eta12=0.0), model)
    assert misreport.objective == pytest.approx(0.7)
    assert misreport.allocation.assignments()[0].performer == 1


def test_zero_values_clear_to_empty(table2):
    profile, model = table2
    result = gtbm_allocate(profile.with_scaled_values(0, 0.0), model)
    assert result.allocation.empty


def test_min_marginal_discount_example6_value():
    # the other agent reports the top of the domain; the audited agent's
    # reports are floored to the bottom: (0.8 + 0.6) / 2
    profile = example6_profile(0.8, 0.8, 0.8, 0.8)
    model = example6_model()
    assert min_marginal_discount(profile, model, 1) == pytest.approx(0.7)
    assert min_marginal_discount(profile, model, 2) == pytest.approx(0.7)


def test_min_marginal_discount_null_floor():
    # all trust weight sits on the audited agent, so flooring its reports to
    # zero kills the only remaining deal and the discount bottoms out at 0
    profile = ReportProfile(
        agents=(0, 1, 2),
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 5.0}),),
        bids=(BidAtom(1, frozenset({0}), 1.0),),
        eqos=(
            EqosMatrix(0, {(1, 0): 0.9}),
            EqosMatrix(1, {(1, 0): 0.9}),
            EqosMatrix(2, {(1, 0): 0.9}),
        ),
        eqos_domain=(0.0, 1.0),
    )
    model = TrustModel.weighted_sum({0: 0.0, 1: 0.0, 2: 1.0})
    assert min_marginal_discount(profile, model, 2) == 0.0


def test_min_marginal_rejects_non_monotone_inputs(table2):
    profile, model = table2
    sour = TrustModel.custom(lambda m, j, t: 1.0 - m[1].get(j, t), monotone=False)
    with pytest.raises(UnsupportedTrustModelError):
        min_marginal_discount(profile, sour, 1)

    bad_values = ReportProfile(
        agents=profile.agents,
        tasks=profile.tasks,
        valuations=(ValuationMap(0, {frozenset({0}): 1.0, frozenset({0, 1}): 0.2}),),
        bids=profile.bids,
        eqos=profile.eqos,
        eqos_domain=profile.eqos_domain,
    )
    with pytest.raises(UnsupportedTrustModelError):
        min_marginal_discount(
            ReportProfile(
                agents=profile.agents,
                tasks=(0, 1),
                valuations=bad_values.valuations,
                bids=profile.bids,
                eqos=profile.eqos,
            ),
            model,
            1,
        )


def test_misdeclared_monotone_custom_model_is_caught(table2):
    profile, model = table2
    lying = TrustModel.custom(
        lambda m, j, t: 1.0 - 0.5 * (m[1].get(j, t) + m[2].get(j, t)) / 2, monotone=True
    )
    with pytest.raises(UnsupportedTrustModelError):
        min_marginal_discount(profile, lying, 1)


def test_example8_discount_matches_closed_form():
    # n agents each request their own task at value 1; everyone performs
    # every bundle at zero cost; uniform-average trust over EQOS in [x, 1].
    import numpy as np

    n = 3
    x = 0.3
    rng = np.random.default_rng(42)
    tasks = tuple(range(n))
    agents = tuple(range(n))
    valuations = tuple(ValuationMap(i, {frozenset({i}): 1.0}) for i in agents)
    bundles = [
        frozenset(c)
        for size in range(1, n + 1)
        for c in itertools.combinations(tasks, size)
    ]
    bids = tuple(BidAtom(j, b, 0.0) for j in agents for b in bundles)
    eta = {
        (h, j, t): float(rng.uniform(x, 1.0))
        for h in agents
        for j in agents
        for t in tasks
    }
    eqos = tuple(
        EqosMatrix(h, {(j, t): eta[(h, j, t)] for j in agents for t in tasks})
        for h in agents
    )
    profile = ReportProfile(agents, tasks, valuations, bids, eqos, eqos_domain=(x, 1.0))
    model = TrustModel.uniform(agents)

    for i in agents:
        expected = sum(
            max(
                (sum(eta[(h, ell, j)] for h in agents if h != i) + x) / n
                for ell in agents
                if ell != i
            )
            for j in agents
            if j != i
        )
        assert min_marginal_discount(profile, model, i) == pytest.approx(expected, abs=1e-9)


def test_fixed_discount_payments_example6(example6):
    profile, model = example6
    winner, schedule = single_task_tbm(profile, model, DiscountPolicy.fixed(0.6))
    assert winner == 1  # symmetric instance, lowest id wins the tie
    for agent in (1, 2):
        assert schedule.payment(agent, 1) == pytest.approx(0.4)
        assert schedule.payment(agent, 0) == pytest.approx(-0.6)


def test_zero_discount_single_winner_payments(table2):
    profile, model = table2
    winner, schedule = single_task_tbm(profile, model, DiscountPolicy.zero())
    assert winner == 2
    assert schedule.payment(2, 1) == pytest.approx(1.0)  # task value on success
    assert schedule.payment(2, 0) == pytest.approx(0.0)
    # the loser is paid the realized system surplus
    assert schedule.payment(1, 1) == pytest.approx(1.0)
    assert schedule.payment(1, 0) == pytest.approx(0.0)
    table = build_trust_table(model, profile)
    assert schedule.expected(1, table) == pytest.approx(0.8)


def test_single_task_rule_matches_general_schedule(table2, example6):
    for (profile, model), policy in itertools.product(
        [table2, example6],
        [DiscountPolicy.zero(), DiscountPolicy.fixed(0.25), DiscountPolicy.min_marginal()],
    ):
        winner, direct = single_task_tbm(profile, model, policy)
        result = gtbm_allocate(profile, model)
        general = gtbm_payment_schedule(profile, model, result, policy)
        assert direct.assignments == general.assignments
        for agent in profile.agents:
            for mask in range(direct.n_patterns):
                assert direct.payment(agent, mask) == pytest.approx(
                    general.payment(agent, mask), abs=1e-9
                ), (agent, mask, policy.kind)


def test_two_requester_payments_sum_other_agents_surplus():
    # requesters 0 and 1, performers 2 and 3; performer 2 serves requester 0
    # only, yet its payment moves with requester 1's realized value.
    profile = ReportProfile(
        agents=(0, 1, 2, 3),
        tasks=(0, 1),
        valuations=(
            ValuationMap(0, {frozenset({0}): 10.0}),
            ValuationMap(1, {frozenset({1}): 8.0}),
        ),
        bids=(BidAtom(2, frozenset({0}), 2.0), BidAtom(3, frozenset({1}), 1.0)),
        eqos=tuple(
            EqosMatrix(a, {(2, 0): 0.9, (2, 1): 0.9, (3, 0): 0.8, (3, 1): 0.8})
            for a in (0, 1, 2, 3)
        ),
    )
    model = TrustModel.uniform(profile.agents)
    result = gtbm_allocate(profile, model)
    assert len(result.allocation.assignments()) == 2
    schedule = gtbm_payment_schedule(profile, model, result, DiscountPolicy.zero())

    assignments = schedule.assignments
    bit_of = {a.requester: k for k, a in enumerate(assignments)}
    for mask in range(4):
        value0 = 10.0 if (mask >> bit_of[0]) & 1 else 0.0
        value1 = 8.0 if (mask >> bit_of[1]) & 1 else 0.0
        # performer 2: everyone else's surplus = both requesters' realized
        # value minus performer 3's cost, minus nothing of its own
        assert schedule.payment(2, mask) == pytest.approx(value0 + value1 - 1.0)
        assert schedule.payment(3, mask) == pytest.approx(value0 + value1 - 2.0)
        # requester 0 receives requester 1's surplus minus both costs
        assert schedule.payment(0, mask) == pytest.approx(value1 - 3.0)
        assert schedule.payment(1, mask) == pytest.approx(value0 - 3.0)
        assert schedule.centre_balance(mask) == pytest.approx(9.0 - 3 * (value0 + value1))


def test_min_marginal_schedule_shifts_zero_schedule_by_discount(table2):
    profile, model = table2
    result = gtbm_allocate(profile, model)
    zero = gtbm_payment_schedule(profile, model, result, DiscountPolicy.zero())
    mm = gtbm_payment_schedule(profile, model, result, DiscountPolicy.min_marginal())
    for agent in profile.agents:
        b = min_marginal_discount(profile, model, agent)
        assert b >= -1e-12
        assert mm.b_values[agent] == pytest.approx(b)
        for mask in range(zero.n_patterns):
            assert mm.payment(agent, mask) == pytest.approx(zero.payment(agent, mask) - b)


def test_payment_independent_of_own_report_when_allocation_fixed(table2):
    profile, model = table2
    result = gtbm_allocate(profile, model)

    # agent 1 nudges its success estimates and costs; agent 0 rescales its
    # values; neither flips the winner, so neither may move its own payments
    # under any discount policy.
    nudges = {
        1: table2_profile(eta12=0.9).with_scaled_costs(1, 1.5),
        0: table2_profile().with_scaled_values(0, 1.1),
    }
    for policy in (DiscountPolicy.zero(), DiscountPolicy.fixed(0.3), DiscountPolicy.min_marginal()):
        schedule = gtbm_payment_schedule(profile, model, result, policy)
        for agent, nudged in nudges.items():
            nudged_result = gtbm_allocate(nudged, model)
            assert nudged_result.allocation.assignments() == result.allocation.assignments()
            nudged_schedule = gtbm_payment_schedule(nudged, model, nudged_result, policy)
            for mask in range(schedule.n_patterns):
                assert nudged_schedule.payment(agent, mask) == pytest.approx(
                    schedule.payment(agent, mask), abs=1e-12
                ), (agent, policy.kind)


def test_expected_payment_matches_subset_expectation():
    # dual route for the expected payment: pattern-probability dot product
    # against a direct expectation over the other agents' realized values
    for seed in range(6):
        cfg = GenConfig(3, 3, 3, geometric_p=0.55, max_bundle=2, seed=seed)
        profile = generate_instance(cfg)
        model = default_model(profile)
        result = gtbm_allocate(profile, model)
        if result.allocation.empty:
            continue
        table = build_trust_table(model, profile)
        schedule = gtbm_payment_schedule(profile, model, result, DiscountPolicy.zero())
        for agent in profile.agents:
            direct = 0.0
            for other in profile.agents:
                if other == agent:
                    continue
                vmap = profile.valuation_for(other)
                own = result.allocation.assignments_of(other)
                if vmap is not None and own:
                    probs = {a.task: table.assignment_prob(a) for a in own}
                    direct += expected_subset_value(vmap, probs)
                direct -= result.allocation.cost_of(other)
            assert schedule.expected(agent, table) == pytest.approx(direct, abs=1e-9)


def test_min_marginal_discount_nonnegative_on_random_instances():
    for seed in range(10):
        cfg = GenConfig(3, 3, 3, geometric_p=0.55, max_bundle=2, seed=seed)
        profile = generate_instance(cfg)
        model = default_model(profile)
        for agent in profile.agents:
            assert min_marginal_discount(profile, model, agent) >= -1e-12


def test_porter_payment_truthful_table1(table1):
    profile, _ = table1
    winner, schedule = porter_schedule(profile)
    assert winner == 2
    # best surplus without the winner: max(300*0.5-100, 300*1-200) = 100
    assert schedule.payment(2, 1) == pytest.approx(200.0)
    assert schedule.payment(2, 0) == pytest.approx(-100.0)
    assert schedule.payment(1, 1) == 0.0 and schedule.payment(3, 0) == 0.0

    realized = porter_payment(profile, completed=True)
    assert realized[2] == pytest.approx(200.0)
    assert realized[1] == 0.0


def test_porter_overstated_report_expected_loss():
    from conftest import table1_profile

    misreport = table1_profile(p1=1.0)
    winner, schedule = porter_schedule(misreport)
    assert winner == 1
    assert schedule.payment(1, 1) == pytest.approx(180.0)
    assert schedule.payment(1, 0) == pytest.approx(-120.0)
    true_pos = 0.5
    expected_payment = true_pos * 180.0 + (1 - true_pos) * -120.0
    assert expected_payment == pytest.approx(30.0)
    assert expected_payment - 100.0 == pytest.approx(-70.0)


def test_porter_single_bidder_gets_full_value():
    profile = ReportProfile(
        agents=(0, 1),
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 7.0}),),
        bids=(BidAtom(1, frozenset({0}), 1.0),),
        eqos=(EqosMatrix(0, {(1, 0): 0.9}), EqosMatrix(1, {(1, 0): 0.9})),
    )
    payments = porter_payment(profile, completed=True)
    assert payments[1] == pytest.approx(7.0)


def test_naive_vickrey_expected_mode(table1):
    profile, _ = table1
    winner, payments = naive_vickrey_payment(profile, "expected")
    assert winner == 2
    assert payments[2] == pytest.approx(170.0)

    from conftest import table1_profile

    winner, payments = naive_vickrey_payment(table1_profile(p1=1.0), "expected")
    assert winner == 1
    assert payments[1] == pytest.approx(180.0)


def test_naive_vickrey_certain_mode_tie():
    profile = ReportProfile(
        agents=(0, 1, 2),
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 10.0}),),
        bids=(BidAtom(1, frozenset({0}), 4.0), BidAtom(2, frozenset({0}), 4.0)),
        eqos=tuple(EqosMatrix(a, {(1, 0): 1.0, (2, 0): 1.0}) for a in (0, 1, 2)),
    )
    winner, payments = naive_vickrey_payment(profile, "certain")
    assert winner == 1
    assert payments[1] == pytest.approx(4.0)  # payment equals the tied cost


def test_shape_mismatch_raises(figure1):
    profile, model = figure1
    with pytest.raises(InstanceShapeError):
        single_task_tbm(profile, model, DiscountPolicy.zero())
    with pytest.raises(InstanceShapeError):
        porter_schedule(profile)
    with pytest.raises(InstanceShapeError):
        naive_vickrey_payment(profile)


def test_realized_transfer_via_outcome(table2):
    profile, model = table2
    winner, schedule = single_task_tbm(profile, model, DiscountPolicy.zero())
    outcome = ExecutionOutcome({schedule.assignments[0]: True})
    assert schedule.realized(2, outcome) == pytest.approx(1.0)
    failure = ExecutionOutcome({schedule.assignments[0]: False})
    assert schedule.realized(2, failure) == pytest.approx(0.0)


def test_contingent_schedule_all_fail_pattern(table2):
    profile, model = table2
    result = gtbm_allocate(profile, model)
    schedule = contingent_schedule(profile, result.allocation, {a: 0.0 for a in profile.agents})
    # winner's transfer at all-fail: no value realized, no other costs
    assert schedule.payment(2, 0) == pytest.approx(0.0)
