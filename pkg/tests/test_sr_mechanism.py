import random

import pytest

from mdconsensus.agents import TRUE_BLOCK, Strategy, attacker_policy, honest_policy, scripted_policy
from mdconsensus.sr_mechanism import (
    ExhaustionError,
    MechanismParams,
    PairingMode,
    Population,
    play_pair,
    rounds_to_csv,
    run_round,
    run_until_commit,
)

P = MechanismParams(reward_R=1.0, fine_F=1.0)


def pols(**kinds):
    return dict(kinds)


def test_honest_pair_commits_true_block_without_fines():
    policies = pols(p=honest_policy(), c=honest_policy())
    out = play_pair("p", "c", ["p", "c"], policies, P)
    assert out.committed == TRUE_BLOCK
    assert not out.challenge_entered
    assert out.payoffs == {"p": 1.0, "c": 0.0}
    assert out.fines_burned == 0


def test_revision_refunds_confirmer_and_burns_one_fine():
    policies = pols(p=scripted_policy(["distort", "truth"]), c=honest_policy())
    out = play_pair("p", "c", ["p", "c"], policies, P)
    assert out.challenge_entered and out.committed == TRUE_BLOCK
    assert out.payoffs == {"p": 0.0, "c": 0.0}
    assert (out.fines_collected, out.fines_refunded, out.fines_burned) == (2.0, 1.0, 1.0)


def test_failed_challenge_excludes_both():
    policies = pols(p=scripted_policy(["distort"]), c=honest_policy())
    out = play_pair("p", "c", ["p", "c"], policies, P)
    assert out.committed is None
    assert out.excluded == {"p", "c"}
    assert out.payoffs == {"p": -1.0, "c": -1.0}
    assert out.fines_burned == 2.0


def test_revision_to_confirmer_message_commits_it():
    # the proposer may also revise toward a distorted confirmer message
    policies = pols(p=scripted_policy(["truth", "distort"], coalition_id="x"),
                    c=scripted_policy(["distort"], coalition_id="x"))
    out = play_pair("p", "c", ["p", "c"], policies, P)
    assert out.committed == out.m_c != TRUE_BLOCK


def test_fresh_messages_never_match():
    policies = pols(p=scripted_policy(["fresh"]), c=scripted_policy(["fresh"]))
    out = play_pair("p", "c", ["p", "c"], policies, P)
    assert out.committed is None


def test_allied_forced_attackers_commit_distorted():
    att = attacker_policy(2.0, strategy=Strategy.FORCED)
    out = play_pair("p", "c", ["p", "c"], pols(p=att, c=att), P)
    assert out.committed == att.preferred_block("p")
    assert not out.challenge_entered


def test_informed_confirmer_tells_truth_to_outsider():
    att = attacker_policy(2.0, strategy=Strategy.FORCED)
    out = play_pair("h", "c", ["h", "c"], pols(h=honest_policy(), c=att), P)
    assert out.committed == TRUE_BLOCK and not out.challenge_entered


def test_blind_confirmer_cannot_condition_on_partner():
    att = attacker_policy(2.0, strategy=Strategy.FORCED)
    params = MechanismParams(1.0, 1.0, PairingMode.BLIND)
    out = play_pair("h", "c", ["h", "c"], pols(h=honest_policy(), c=att), params)
    assert out.m_c == att.preferred_block("c")
    assert out.committed is None


def test_run_until_commit_terminates_on_first_success():
    att = attacker_policy(2.0, strategy=Strategy.FORCED)
    policies = {f"n{i}": (att if i < 2 else honest_policy()) for i in range(6)}
    for seed in range(50):
        run = run_until_commit(list(policies), policies, P, random.Random(seed))
        assert run.total_rounds == len(run.rounds) >= 1
        last = run.rounds[-1]
        assert run.final_committed == last.committed or run.aborted_exhausted
        assert all(r.committed is None for r in run.rounds[:-1])
        excluded = [n for r in run.rounds for n in r.excluded]
        assert len(excluded) == len(set(excluded))


def test_exhaustion_is_reported():
    policies = {n: scripted_policy(["fresh"]) for n in "abcd"}
    run = run_until_commit(list(policies), policies, P, random.Random(1))
    assert run.aborted_exhausted and run.final_committed is None
    assert run.total_rounds == 2


def test_max_rounds_truncates():
    policies = {n: scripted_policy(["fresh"]) for n in "abcdef"}
    run = run_until_commit(list(policies), policies, P, random.Random(1), max_rounds=1)
    assert run.truncated and run.total_rounds == 1


def test_round_needs_two_nodes():
    with pytest.raises(ExhaustionError):
        run_round(["a"], {"a": honest_policy()}, P, random.Random(0))


def test_population_counts_per_coalition():
    red, blue = attacker_policy(1.0, "red"), attacker_policy(1.0, "blue")
    pop = Population(["a", "b", "c", "d"], {"a": red, "b": red, "c": blue, "d": honest_policy()})
    assert pop.counts_for("a") == (2, 2)
    assert pop.counts_for("c") == (1, 3)
    assert pop.allies("a", "b") and not pop.allies("a", "c")
    assert pop.share("a") == 0.5 and pop.share("d") == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        MechanismParams(1.0, 0.0)
    with pytest.raises(ValueError):
        MechanismParams(1.0, 1.0, fine_schedule=lambda r: 2.0)


def test_fine_schedule_applies_per_round():
    params = MechanismParams(1.0, 1.0, fine_schedule=lambda r: 1.0 + r)
    policies = {n: scripted_policy(["fresh"]) for n in "abcd"}
    run = run_until_commit(list(policies), policies, params, random.Random(3))
    assert [r.fine for r in run.rounds] == [1.0, 2.0]


def test_trace_csv_is_deterministic():
    att = attacker_policy(2.0, strategy=Strategy.FORCED)
    policies = {f"n{i}": (att if i % 2 else honest_policy()) for i in range(8)}
    a = rounds_to_csv(run_until_commit(list(policies), policies, P, random.Random(9)))
    b = rounds_to_csv(run_until_commit(list(policies), policies, P, random.Random(9)))
    assert a == b
    assert a.splitlines()[0] == "round,proposer,confirmer,matched,challenged,committed,fines_burned"
