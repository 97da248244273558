import math
from fractions import Fraction as Fr
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from mdconsensus import analytics as an

# (R, F, theta) -> (R+F)/(R+theta+F), hand-evaluated
INFORMED = [((1, 1, 2), Fr(1, 2)), ((2, 1, 1), Fr(3, 4)), ((1, 2, 3), Fr(1, 2)), ((0, 1, 1), Fr(1, 2)),
            ((1, 1, 0), Fr(1))]


@pytest.mark.parametrize("args,expected", INFORMED)
def test_informed_threshold_values(args, expected):
    assert an.attack_threshold_informed(*args) == expected


def test_blind_threshold_exact_when_square():
    assert an.attack_threshold_blind(1, 1, 2) == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert an.attack_threshold_blind(3, 1, 12) == Fr(1, 2)  # 4/16
    assert isinstance(an.attack_threshold_blind(3, 1, 12), Fr)


def test_threshold_domain():
    with pytest.raises(ValueError):
        an.attack_threshold_informed(1, 0, 1)
    with pytest.raises(ValueError):
        an.attack_threshold_informed(-1, 1, 1)


def test_threshold_report_flags_are_exact_at_boundary():
    # threshold exactly 1/3: not strictly above the BFT bound
    rep = an.threshold_report(1, Fr(1, 2), 3)
    assert rep.threshold_informed == Fr(1, 3) and not rep.beats_bft_informed
    # threshold exactly 1/9, so the blind threshold is exactly 1/3
    rep = an.threshold_report(Fr(1, 2), Fr(1, 2), 8)
    assert rep.threshold_blind == Fr(1, 3) and not rep.beats_bft_blind
    assert an.threshold_report(Fr(1, 2), Fr(1, 2) + Fr(1, 10**20), 8).beats_bft_blind


@given(st.fractions(0, 5), st.fractions(Fr(1, 100), 5), st.fractions(0, 5))
@settings(max_examples=300, deadline=None)
def test_report_booleans_match_closed_forms(R, F, theta):
    rep = an.threshold_report(R, F, theta)
    assert rep.beats_bft_informed == (R + F > theta / 2)
    assert rep.beats_bft_blind == (R + F > theta / 8)


def test_fork_reference_point():
    rep = an.fork_attack_analysis(1, 1, 1, Fr(3, 4))
    assert rep.precondition_holds
    assert rep.s_low == Fr(1, 2) and rep.s_high == Fr(3, 2)
    assert rep.profitable_interval == (Fr(1, 2), 1)


def test_fork_unit_fine_closes_interval():
    rep = an.fork_attack_analysis(1, 1, 1, 1)
    assert rep.s_low == 1 and rep.profitable_interval is None


def test_fork_precondition_boundary_is_exact():
    k, R, theta = 2, Fr(3, 2), Fr(1, 3)
    F = (k * R + theta) ** 2 / (4 * k * R)
    assert an.fork_attack_analysis(k, R, theta, F).precondition_holds
    assert an.fork_attack_analysis(k, R, theta, F).s_low == an.fork_attack_analysis(k, R, theta, F).s_high
    assert not an.fork_attack_analysis(k, R, theta, F + Fr(1, 10**30)).precondition_holds


@given(st.integers(1, 5), st.fractions(Fr(1, 10), 3), st.fractions(0, 3), st.fractions(Fr(1, 10), 3),
       st.fractions(0, 1))
@settings(max_examples=200, deadline=None)
def test_expanded_and_factored_profit_agree(k, R, theta, F, s):
    assert an.fork_profit_expanded(s, k, R, theta, F) == an.fork_profit_factored(s, k, R, theta, F)


@pytest.mark.parametrize("k,R,theta,F", [(1, 1, 1, 0.5), (2, 1, 3, 1.0), (3, 0.5, 2, 0.9), (1, 2, 0.5, 0.6)])
def test_s_low_matches_bisection(k, R, theta, F):
    rep = an.fork_attack_analysis(k, R, theta, F)
    assert rep.precondition_holds
    q = lambda s: -k * R * s * s + (theta + k * R) * s - F  # noqa: E731
    peak = (theta + k * R) / (2 * k * R)
    root = brentq(q, 0, peak, xtol=1e-15)
    assert float(rep.s_low) == pytest.approx(root, abs=1e-9)


def test_lcr_and_penultimate_conditions():
    assert an.lcr_beaten(1, 1, 1, Fr(3, 4))
    assert not an.lcr_beaten(1, 1, 1, 2)
    assert an.penultimate_deterrence(1, 1, Fr(21, 10)) and not an.penultimate_deterrence(1, 1, 2)
    assert an.blanket_deterrence(2, Fr(31, 10)) and not an.blanket_deterrence(2, 3)
    assert an.penultimate_share(1) > 1
    with pytest.raises(ValueError):
        an.penultimate_deterrence(0, 1, 1)


# independent pair-enumeration oracle for the patient coalition
def oracle_value(a, h, R, theta, F):
    @lru_cache(maxsize=None)
    def V(a, h):
        if a == 0 or a + h < 2:
            return Fr(0)
        if h == 0:
            return Fr(R + theta)
        nodes = ["c"] * a + ["h"] * h
        total = Fr(0)
        pairs = 0
        for i, p in enumerate(nodes):
            for j, c in enumerate(nodes):
                if i == j:
                    continue
                pairs += 1
                kind = p + c
                cont = -F + V(a - 1, h - 1)
                if kind == "cc":
                    total += R + theta
                elif kind == "ch":
                    total += max(R, R - F, cont)
                elif kind == "hc":
                    total += max(0, cont)
        return total / pairs

    return V(a, h)


@pytest.mark.parametrize("R,theta,F", [(1, 2, 1), (Fr(1, 2), 3, 1), (2, 1, 5), (1, 10, Fr(1, 4))])
def test_patient_dp_matches_pair_enumeration(R, theta, F):
    table = an.patient_attack_dp(6, 6, R, theta, F)
    for a in range(7):
        for h in range(7):
            assert table[(a, h)] == oracle_value(a, h, Fr(R), Fr(theta), Fr(F))
            assert an.patient_value_at(a, h, R, theta, F) == table[(a, h)]


def test_patient_base_values():
    assert an.patient_value_at(1, 1, 1, 2, 1) == Fr(1, 2)
    assert an.patient_value_at(2, 0, 1, 2, 1) == 3
    assert an.patient_value_at(2, 1, 1, 2, 1) == Fr(4, 3)


def test_patient_policy_avoids_dispute_when_deterred():
    # (x+1) theta < F: no continuation from (x, 1)
    for x in range(1, 6):
        assert an.patient_policy_at(x, 1, 1, 1, x + 2, "proposer") == "ProposeTruth"
        assert an.patient_policy_at(x, 1, 1, 1, x + 2, "confirmer") == "ConfirmTruth"


def test_literal_recursion_differs_from_dp():
    cmp = an.compare_patient(2, 1, 1, 2, 1)
    assert cmp.dp_value == Fr(4, 3)
    assert cmp.discrepancy != 0
    assert "discrepancy" in cmp.report()
    with pytest.raises(ValueError):
        an.paper_recursion_value(1, 1, 3, 1, 1, 1)
