import pytest

from mdconsensus.agents import (
    TRUE_BLOCK,
    AgentPolicy,
    DisputeAction,
    Kind,
    Mechanism,
    PolicyContext,
    Role,
    Stage,
    Strategy,
    attacker_policy,
    blind_attack_pays,
    decide_message,
    fork_attack_pays,
    honest_policy,
    informed_attack_pays,
    policy_from_dict,
    roster,
    scripted_policy,
)


def sr_ctx(policy, node="n", **kw):
    return PolicyContext(Mechanism.SR_BFT, preferred_block=policy.preferred_block(node), **kw)


def test_honest_always_reports_truth():
    pol = honest_policy()
    for stage in (Stage.INITIAL, Stage.CHALLENGE):
        for role in (Role.PROPOSER, Role.CONFIRMER, None):
            assert decide_message(pol, sr_ctx(pol, stage=stage, role=role)) == TRUE_BLOCK


def test_coalition_members_share_preferred_block():
    a, b = attacker_policy(1.0, "red"), attacker_policy(1.0, "red")
    assert a.preferred_block("x") == b.preferred_block("y")
    solo = attacker_policy(1.0, None)
    assert solo.preferred_block("x") != solo.preferred_block("y")


@pytest.mark.parametrize("s,expected", [(0.49, False), (0.51, True)])
def test_best_response_proposer_follows_informed_inequality(s, expected):
    pol = attacker_policy(2.0)
    ctx = sr_ctx(pol, role=Role.PROPOSER, coalition_share_s=s, reward_R=1.0, fine_F=1.0)
    assert (decide_message(pol, ctx) != TRUE_BLOCK) is expected


def test_informed_confirmer_never_distorts_against_outsider():
    pol = attacker_policy(100.0, strategy=Strategy.FORCED)
    ctx = sr_ctx(pol, role=Role.CONFIRMER, partner_is_ally=False, coalition_share_s=0.99)
    assert decide_message(pol, ctx) == TRUE_BLOCK


def test_blind_best_response_uses_squared_share():
    pol = attacker_policy(2.0)
    low = sr_ctx(pol, role=None, coalition_share_s=0.70)
    high = sr_ctx(pol, role=None, coalition_share_s=0.71)
    assert decide_message(pol, low) == TRUE_BLOCK
    assert decide_message(pol, high) == pol.preferred_block("n")


def test_challenge_revision_when_continuation_is_poor():
    pol = attacker_policy(2.0)
    distorted = pol.preferred_block("n")
    ctx = sr_ctx(pol, stage=Stage.CHALLENGE, role=Role.PROPOSER, own_message=distorted, continuation_value=0.0)
    assert decide_message(pol, ctx) == TRUE_BLOCK
    forced = attacker_policy(2.0, strategy=Strategy.FORCED)
    assert decide_message(forced, ctx) == distorted


def test_inequalities_at_known_points():
    # (R, F, theta) = (1, 1, 2): informed threshold 1/2, blind sqrt(1/2)
    assert not informed_attack_pays(0.5, 1, 1, 2) and informed_attack_pays(0.5001, 1, 1, 2)
    assert not blind_attack_pays(0.7071, 1, 1, 2) and blind_attack_pays(0.7072, 1, 1, 2)
    # (k, R, theta, F) = (1, 1, 1, 3/4): profitable strictly inside (1/2, 3/2)
    assert not fork_attack_pays(0.5, 1, 1, 1, 0.75) and fork_attack_pays(0.6, 1, 1, 1, 0.75)


def test_fork_tx_policies():
    honest, att = honest_policy(), attacker_policy(1.0)
    ask = PolicyContext(Mechanism.FORK_TX, tx_on_true_chain=True, partner_is_ally=True)
    assert decide_message(honest, ask) is DisputeAction.DECLINE
    assert decide_message(att, ask) is DisputeAction.CONFIRM_INVALID
    alone = PolicyContext(Mechanism.FORK_TX, tx_on_true_chain=True, partner_is_ally=False)
    assert decide_message(att, alone) is DisputeAction.DECLINE
    dispute = PolicyContext(Mechanism.FORK_TX, stage=Stage.DISPUTE, tx_on_true_chain=True)
    assert decide_message(honest, dispute) is DisputeAction.ASSERT
    assert decide_message(att, dispute) is DisputeAction.NOT_ASSERT


def test_fork_alloc_policies():
    honest, att = honest_policy(), attacker_policy(1.0)
    claim = PolicyContext(Mechanism.FORK_ALLOC)
    assert decide_message(honest, claim) is DisputeAction.CLAIM_A
    assert decide_message(att, PolicyContext(Mechanism.FORK_ALLOC, partner_is_ally=True)) is DisputeAction.CLAIM_B
    assert decide_message(att, PolicyContext(Mechanism.FORK_ALLOC, partner_is_ally=False)) is DisputeAction.CLAIM_A
    burn = PolicyContext(Mechanism.FORK_ALLOC, stage=Stage.DISPUTE, other_claim="B")
    assert decide_message(honest, burn) is DisputeAction.ASSERT
    keep = PolicyContext(Mechanism.FORK_ALLOC, stage=Stage.DISPUTE, other_claim="A")
    assert decide_message(honest, keep) is DisputeAction.NOT_ASSERT


def test_scripted_policy_replays_then_repeats_last():
    pol = scripted_policy(["distort", "truth"])
    msgs = [decide_message(pol, sr_ctx(pol, step=i)) for i in range(4)]
    assert msgs[0] != TRUE_BLOCK and msgs[1:] == [TRUE_BLOCK] * 3
    fork = scripted_policy(["claim_b"])
    assert decide_message(fork, PolicyContext(Mechanism.FORK_ALLOC)) is DisputeAction.CLAIM_B


def test_policy_validation():
    with pytest.raises(ValueError):
        AgentPolicy(Kind.HONEST, H=1.0, D=2.0)
    with pytest.raises(ValueError):
        attacker_policy(0.0)
    with pytest.raises(ValueError):
        scripted_policy([])


def test_roster_parsing():
    pols = roster([
        {"kind": "honest"},
        {"kind": "attacker", "theta": 2, "coalition_id": "red", "strategy": "forced"},
        {"kind": "scripted", "script": ["truth"]},
    ])
    assert [p.kind for p in pols] == [Kind.HONEST, Kind.ATTACKER, Kind.SCRIPTED]
    assert pols[1].strategy is Strategy.FORCED and pols[1].theta == 2.0
    assert policy_from_dict({"kind": "attacker", "theta": 1}).strategy is Strategy.BEST_RESPONSE
