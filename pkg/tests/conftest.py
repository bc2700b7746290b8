"""Canonical worked-example instances shared across the test suite.

These builders mirror the checked-in files under instances/; regression tests
assert that the files load back to exactly these profiles.
"""

from pathlib import Path

import pytest

from trustclear.core import BidAtom, EqosMatrix, ReportProfile, ValuationMap
from trustclear.trust import TrustModel

REPO_ROOT = Path(__file__).resolve().parent.parent
INSTANCE_DIR = REPO_ROOT / "instances"


def table1_profile(p1: float = 0.5) -> ReportProfile:
    """One requester valuing a task at 300; three performers with costs
    100/150/200 and self-estimated success 0.5/0.9/1.0 (consensus entries)."""
    agents = (0, 1, 2, 3)
    pos = {1: p1, 2: 0.9, 3: 1.0}
    return ReportProfile(
        agents=agents,
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 300.0}),),
        bids=(
            BidAtom(1, frozenset({0}), 100.0),
            BidAtom(2, frozenset({0}), 150.0),
            BidAtom(3, frozenset({0}), 200.0),
        ),
        eqos=tuple(
            EqosMatrix(a, {(j, 0): pos[j] for j in (1, 2, 3)}) for a in agents
        ),
        free_disposal=False,
        eqos_domain=(0.0, 1.0),
    )


def table1_model() -> TrustModel:
    return TrustModel.self_trust()


def table2_profile(eta12: float = 1.0) -> ReportProfile:
    """Two zero-cost performers judged by each other; the requester's own
    reports carry no weight. Aggregates are 0.7 and 0.8 when truthful."""
    return ReportProfile(
        agents=(0, 1, 2),
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 1.0}),),
        bids=(BidAtom(1, frozenset({0}), 0.0), BidAtom(2, frozenset({0}), 0.0)),
        eqos=(
            EqosMatrix(0, {(1, 0): 0.7, (2, 0): 0.8}),
            EqosMatrix(1, {(1, 0): 0.6, (2, 0): eta12}),
            EqosMatrix(2, {(1, 0): 0.8, (2, 0): 0.6}),
        ),
        free_disposal=False,
        eqos_domain=(0.0, 1.0),
    )


def table2_model() -> TrustModel:
    return TrustModel.weighted_sum({0: 0.0, 1: 0.5, 2: 0.5})


def example6_profile(
    e11: float = 0.7,
    e12: float = 0.7,
    e21: float = 0.7,
    e22: float = 0.7,
    domain: tuple[float, float] = (0.6, 0.8),
) -> ReportProfile:
    """Two zero-cost performers, task value 1, declared EQOS domain bounded
    below; the flat-discount payments hinge on that lower bound."""
    mid = (domain[0] + domain[1]) / 2.0
    return ReportProfile(
        agents=(0, 1, 2),
        tasks=(0,),
        valuations=(ValuationMap(0, {frozenset({0}): 1.0}),),
        bids=(BidAtom(1, frozenset({0}), 0.0), BidAtom(2, frozenset({0}), 0.0)),
        eqos=(
            EqosMatrix(0, {(1, 0): mid, (2, 0): mid}),
            EqosMatrix(1, {(1, 0): e11, (2, 0): e12}),
            EqosMatrix(2, {(1, 0): e21, (2, 0): e22}),
        ),
        free_disposal=False,
        eqos_domain=domain,
    )


def example6_model() -> TrustModel:
    return TrustModel.weighted_sum({0: 0.0, 1: 0.5, 2: 0.5})


def example6_low_profile() -> ReportProfile:
    """The participation-failure variant: every estimate at the low type 0.3."""
    return example6_profile(0.3, 0.3, 0.3, 0.3, domain=(0.3, 0.8))


def figure1_profile() -> ReportProfile:
    """Three tasks, one requester with two XOR atoms, three performers whose
    bid bundles give 3 covers for {0, 1} and 2 covers for {2}."""
    pairs = [(2, 1), (2, 2), (4, 0), (4, 1), (4, 2), (5, 1)]
    return ReportProfile(
        agents=(1, 2, 4, 5),
        tasks=(0, 1, 2),
        valuations=(ValuationMap(1, {frozenset({0, 1}): 100.0, frozenset({2}): 50.0}),),
        bids=(
            BidAtom(2, frozenset({1, 2}), 20.0),
            BidAtom(4, frozenset({0}), 10.0),
            BidAtom(4, frozenset({0, 1}), 25.0),
            BidAtom(4, frozenset({0, 2}), 30.0),
            BidAtom(5, frozenset({1}), 15.0),
        ),
        eqos=tuple(
            EqosMatrix(a, {pair: 0.9 for pair in pairs}) for a in (1, 2, 4, 5)
        ),
        free_disposal=False,
        eqos_domain=(0.0, 1.0),
    )


def figure1_model() -> TrustModel:
    return TrustModel.uniform((1, 2, 4, 5))


@pytest.fixture
def table1():
    return table1_profile(), table1_model()


@pytest.fixture
def table2():
    return table2_profile(), table2_model()


@pytest.fixture
def example6():
    return example6_profile(), example6_model()


@pytest.fixture
def figure1():
    return figure1_profile(), figure1_model()
