import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustclear.core import (
    Assignment,
    BundleTooLargeError,
    EqosMatrix,
    IncompleteEqosError,
    ValuationMap,
)
from trustclear.trust import (
    TrustModel,
    TrustTable,
    allocation_completion_trust,
    build_trust_table,
    bundle_completion_trust,
    expected_subset_value,
    trust_without_reporter,
    weighted_sum_trust,
)

from conftest import table2_model, table2_profile


def test_weighted_sum_matches_judged_aggregates():
    profile = table2_profile()
    model = table2_model()
    assert weighted_sum_trust(model, profile.eqos, 1, 0) == pytest.approx(0.7)
    assert weighted_sum_trust(model, profile.eqos, 2, 0) == pytest.approx(0.8)


def test_degenerate_weight_returns_single_report():
    profile = table2_profile()
    model = TrustModel.weighted_sum({0: 0.0, 1: 0.0, 2: 1.0})
    assert weighted_sum_trust(model, profile.eqos, 2, 0) == pytest.approx(0.6)
    assert weighted_sum_trust(model, profile.eqos, 1, 0) == pytest.approx(0.8)


def test_weights_must_normalise():
    with pytest.raises(Exception):
        TrustModel.weighted_sum({0: 0.4, 1: 0.4})


def test_missing_entry_for_weighted_reporter_raises():
    profile = table2_profile()
    model = table2_model()
    trimmed = profile.with_eqos(2, EqosMatrix(2, {(1, 0): 0.8}))
    with pytest.raises(IncompleteEqosError):
        build_trust_table(model, trimmed)


def test_zero_weight_reporter_may_omit_entries():
    profile = table2_profile()
    model = table2_model()
    trimmed = profile.with_eqos(0, EqosMatrix(0, {}))
    table = build_trust_table(model, trimmed)
    assert table.prob(2, 0) == pytest.approx(0.8)


def test_build_trust_table_table2():
    table = build_trust_table(table2_model(), table2_profile())
    assert table.entries == pytest.approx({(1, 0): 0.7, (2, 0): 0.8})


def test_override_reporter_changes_aggregate():
    profile = table2_profile()
    model = table2_model()
    silenced = profile.eqos_of(1).with_entry(2, 0, 0.0)
    table = build_trust_table(model, profile, override_reporter=(1, silenced))
    assert table.prob(2, 0) == pytest.approx(0.3)
    assert table.prob(1, 0) == pytest.approx(0.7)


def test_identity_override_is_a_no_op():
    profile = table2_profile()
    model = table2_model()
    base = build_trust_table(model, profile)
    same = build_trust_table(model, profile, override_reporter=(1, profile.eqos_of(1)))
    assert base.entries == same.entries


def test_removal_renormalises_remaining_reports():
    profile = table2_profile()
    model = table2_model()
    table = trust_without_reporter(model, profile, excluded=1)
    assert table.prob(2, 0) == pytest.approx(0.6)
    assert table.prob(1, 0) == pytest.approx(0.8)


def test_bundle_completion_trust_examples():
    table = TrustTable({(9, 0): 0.5, (9, 1): 0.9})
    assert bundle_completion_trust(table, 9, set(), set()) == 1.0
    assert bundle_completion_trust(table, 9, {0}, {0, 1}) == pytest.approx(0.05)
    certain = TrustTable({(9, 0): 1.0, (9, 1): 1.0})
    assert bundle_completion_trust(certain, 9, {0, 1}, {0, 1}) == 1.0
    with pytest.raises(ValueError):
        bundle_completion_trust(table, 9, {0, 1}, {0})


def test_allocation_completion_trust_examples():
    table = TrustTable({(1, 0): 0.5, (2, 1): 0.9})
    a1 = Assignment(0, 0, 1)
    a2 = Assignment(1, 0, 2)
    single = allocation_completion_trust(table, 0, {a1}, {a1})
    assert single == pytest.approx(bundle_completion_trust(table, 1, {0}, {0}))
    assert allocation_completion_trust(table, 0, {a1, a2}, {a1, a2}) == pytest.approx(0.45)
    assert allocation_completion_trust(table, 0, set(), {a1, a2}) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        allocation_completion_trust(table, 5, {a1}, {a1})


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=6),
    st.integers(min_value=0, max_value=100),
)
@settings(max_examples=200, deadline=None)
def test_completion_probabilities_normalise(probs, salt):
    table = TrustTable({(7, t): p for t, p in enumerate(probs)})
    assigned = set(range(len(probs)))
    total = 0.0
    for r in range(len(probs) + 1):
        for done in itertools.combinations(assigned, r):
            total += bundle_completion_trust(table, 7, set(done), assigned)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_weighted_sum_is_affine_in_each_entry():
    profile = table2_profile()
    model = table2_model()
    base = weighted_sum_trust(model, profile.eqos, 2, 0)
    rng = np.random.default_rng(5)
    for _ in range(25):
        delta = float(rng.uniform(-0.6, 0.2))
        bumped = profile.with_eqos(1, profile.eqos_of(1).with_entry(2, 0, 1.0 + delta))
        shifted = weighted_sum_trust(model, bumped.eqos, 2, 0)
        assert shifted - base == pytest.approx(0.5 * delta, abs=1e-12)


def test_monotone_models_never_decrease_under_raised_reports():
    rng = np.random.default_rng(11)
    profile = table2_profile()
    model = TrustModel.uniform(profile.agents)
    base = build_trust_table(model, profile)
    for reporter in profile.agents:
        matrix = profile.eqos_of(reporter)
        for pair in matrix.entries:
            old = matrix.entries[pair]
            new = min(1.0, old + float(rng.uniform(0.0, 0.3)))
            table = build_trust_table(
                model, profile, override_reporter=(reporter, matrix.with_entry(*pair, new))
            )
            for key in table.entries:
                assert table.entries[key] >= base.entries[key] - 1e-12


def _enumerated_expected_value(vmap, task_probs):
    """Independent oracle: sum over explicitly listed completion subsets."""
    tasks = sorted(task_probs)
    total = 0.0
    for r in range(len(tasks) + 1):
        for done in itertools.combinations(tasks, r):
            prob = 1.0
            for t in tasks:
                prob *= task_probs[t] if t in done else 1.0 - task_probs[t]
            total += vmap.value_of(done) * prob
    return total


def test_expected_subset_value_matches_enumeration_oracle():
    vmap = ValuationMap(0, {frozenset({0, 1}): 100.0, frozenset({0}): 10.0})
    probs = {0: 0.5, 1: 0.9}
    assert expected_subset_value(vmap, probs) == pytest.approx(45.5)
    assert _enumerated_expected_value(vmap, probs) == pytest.approx(45.5)

    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        bundles = {}
        for _ in range(int(rng.integers(1, 5))):
            size = int(rng.integers(1, n + 1))
            bundle = frozenset(int(t) for t in rng.choice(n, size=size, replace=False))
            bundles[bundle] = float(rng.uniform(0, 50))
        vmap = ValuationMap(0, bundles)
        probs = {t: float(rng.uniform(0, 1)) for t in range(n)}
        assert expected_subset_value(vmap, probs) == pytest.approx(
            _enumerated_expected_value(vmap, probs), abs=1e-9
        )


def test_expected_subset_value_certain_completion():
    vmap = ValuationMap(0, {frozenset({0, 1}): 42.0})
    assert expected_subset_value(vmap, {0: 1.0, 1: 1.0}) == pytest.approx(42.0)


def test_expected_subset_value_bundle_cap():
    vmap = ValuationMap(0, {frozenset(range(17)): 1.0})
    with pytest.raises(BundleTooLargeError):
        expected_subset_value(vmap, {t: 0.5 for t in range(17)})
