import random
from fractions import Fraction as Fr

import pytest

from mdconsensus.fixtures import builtin_fork
from mdconsensus.fork_mechanism import ForkResolutionParams, MechanismNotTriggered
from mdconsensus.game_solver import (
    Chance,
    Decision,
    GameSizeError,
    GameTree,
    GameTreeError,
    Terminal,
    build_bft_game,
    build_fork_game,
    enumerate_spe,
    format_report,
    proper_subgame_roots,
    same_distribution,
    solve_spe,
)
from mdconsensus.game_solver.generate import random_game
from mdconsensus.ledger import Chain, Fork
from mdconsensus.sr_mechanism import MechanismParams, PairingMode


def entry_game():
    fight = Terminal((-1, -1), "fight")
    accommodate = Terminal((1, 1), "accommodate")
    incumbent = Decision(1, "inc", ("fight", "accommodate"), (fight, accommodate))
    root = Decision(0, "ent", ("out", "in"), (Terminal((0, 2), "out"), incumbent))
    return GameTree(root, ("entrant", "incumbent"))


def test_entry_game_has_single_spe():
    res = solve_spe(entry_game())
    assert res.strategy_unique and res.outcome_unique
    assert res.strategy_profile == {"ent": "in", "inc": "accommodate"}
    assert res.on_path_label == "accommodate"


def test_matching_pennies_has_no_pure_spe():
    leaves = {(a, b): Terminal((1, -1) if a == b else (-1, 1), f"{a}{b}") for a in "HT" for b in "HT"}
    col = [Decision(1, "col", ("H", "T"), (leaves[(a, "H")], leaves[(a, "T")])) for a in "HT"]
    tree = GameTree(Decision(0, "row", ("H", "T"), col), ("row", "col"))
    res = solve_spe(tree)
    assert res.equilibria == () or len(res.equilibria) == 0
    assert enumerate_spe(tree).equilibria == res.equilibria


def test_simultaneous_coordination_has_two_outcomes():
    leaves = {(a, b): Terminal((2, 2) if a == b == "x" else (1, 1) if a == b else (0, 0), a + b)
              for a in "xy" for b in "xy"}
    col = [Decision(1, "c", ("x", "y"), (leaves[(a, "x")], leaves[(a, "y")])) for a in "xy"]
    res = solve_spe(GameTree(Decision(0, "r", ("x", "y"), col), ("r", "c")))
    assert not res.outcome_unique
    assert {eq.strategy["r"] for eq in res.equilibria} == {"x", "y"}


def test_preferred_action_resolves_exact_ties():
    leaves = (Terminal((0,), "a"), Terminal((0,), "b"))
    res = solve_spe(GameTree(Decision(0, "d", ("a", "b"), leaves, prefer="b"), ("p",)))
    assert res.strategy_unique and res.on_path_label == "b"
    res = solve_spe(GameTree(Decision(0, "d", ("a", "b"), leaves), ("p",)))
    assert not res.outcome_unique and res.ties


def test_chance_rewards_and_expected_values():
    root = Chance([(Fr(1, 4), Terminal((4,), "hi")), (Fr(3, 4), Terminal((0,), "lo"))], reward=(-1,), burned=2)
    res = solve_spe(GameTree(root, ("p",)))
    assert res.values == (0,)
    assert res.on_path_fines == 2
    assert res.label_probability("hi") == Fr(1, 4)


def test_tree_validation():
    with pytest.raises(GameTreeError):
        GameTree(Decision(0, "d", ("a",), (Terminal((0, 0), "z"),)), ("p",)).validate()
    with pytest.raises(GameTreeError, match="sum"):
        GameTree(Chance([(Fr(1, 2), Terminal((0,), "z"))]), ("p",)).validate()
    with pytest.raises(GameTreeError):
        Decision(0, "d", ("a", "a"), (Terminal((0,), "y"), Terminal((0,), "z")))


def test_subgame_roots_skip_imperfect_information():
    leaves = [Terminal((0, 0), str(i)) for i in range(4)]
    c = [Decision(1, "c", ("x", "y"), leaves[2 * i: 2 * i + 2]) for i in range(2)]
    root = Decision(0, "r", ("x", "y"), c)
    roots = proper_subgame_roots(GameTree(root, ("a", "b")))
    assert root.id in roots and not any(n.id in roots for n in c)


@pytest.mark.parametrize("seed", range(60))
def test_solver_matches_oracle_on_random_games(seed):
    tree = random_game(random.Random(seed), n_players=2 + seed % 2, levels=3 + seed % 3)
    fast, slow = solve_spe(tree), enumerate_spe(tree)
    assert fast.equilibrium_count == slow.equilibrium_count
    for xs, ys in ((fast.equilibria, slow.equilibria), (slow.equilibria, fast.equilibria)):
        for e in xs:
            assert any(same_distribution(e.path_outcomes, f.path_outcomes) for f in ys)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_single_attacker_commits_truth(n):
    for i in range(n):
        res = solve_spe(build_bft_game(n, [i], MechanismParams(1, 1), 2))
        assert res.outcome_unique
        assert res.on_path_commit.payload == "M_T"
        assert res.on_path_fines == 0


def test_blind_single_attacker_commits_truth():
    params = MechanismParams(1, 1, PairingMode.BLIND)
    res = solve_spe(build_bft_game(3, [0], params, 2))
    assert res.outcome_unique and res.on_path_commit.payload == "M_T"


def test_two_allied_attackers_take_over_two_node_committee():
    res = solve_spe(build_bft_game(2, [0, 1], MechanismParams(1, 1), 2))
    assert res.outcome_unique and res.on_path_commit.payload == "M_theta:coalition"


def test_shared_and_plain_bft_trees_agree():
    params = MechanismParams(1, 1)
    shared = solve_spe(build_bft_game(3, [1], params, 2))
    plain = solve_spe(build_bft_game(3, [1], params, 2, share_subgames=False))
    assert shared.path_outcomes == plain.path_outcomes


def test_bft_size_guard():
    with pytest.raises(GameSizeError):
        build_bft_game(7, [0])


@pytest.mark.parametrize("honest", ["a", "b", "both"])
def test_double_spend_tree_keeps_truth(honest):
    res = solve_spe(build_fork_game(builtin_fork("double-spend"), honest, mechanism="tx"))
    assert res.outcome_unique and res.on_path_label.startswith("true|removed=")
    assert res.on_path_label == "true|removed="


def test_double_spend_tree_without_honest_node_deletes_spend():
    res = solve_spe(build_fork_game(builtin_fork("double-spend"), "none", mechanism="tx"))
    assert res.on_path_label == "dishonest|removed=t"


@pytest.mark.parametrize("honest", ["a", "b"])
def test_pre_spend_contrast(honest):
    fork = builtin_fork("pre-spend")
    tx = solve_spe(build_fork_game(fork, honest, mechanism="tx"))
    alloc = solve_spe(build_fork_game(fork, honest, mechanism="alloc"))
    assert tx.on_path_label == "dishonest|removed=orig"
    assert alloc.outcome_unique and alloc.on_path_label == "chain_a_confirmed"


def test_simultaneous_claims_allow_coordination_failure():
    tree = build_fork_game(builtin_fork("pre-spend"), "none", mechanism="alloc", claim_order="simultaneous")
    res = solve_spe(tree)
    assert set(res.on_path_labels) <= {"chain_a_confirmed", "chain_b_confirmed"}
    assert not res.outcome_unique


def test_fork_tree_respects_length_tolerance():
    fork = builtin_fork("double-spend")
    longer = Chain.build({}, [("z", [])] * 3, base=fork.chain_a)
    with pytest.raises(MechanismNotTriggered):
        build_fork_game(Fork(longer, fork.chain_b, fork.common_ancestor_height, 1))


def test_fork_solver_matches_oracle():
    for fixture in ("double-spend", "pre-spend"):
        for honest in ("a", "b", "both", "none"):
            for mech in ("tx", "alloc") if fixture == "pre-spend" else ("tx",):
                tree = build_fork_game(builtin_fork(fixture), honest, ForkResolutionParams(), mechanism=mech)
                assert set(solve_spe(tree).on_path_labels) == set(enumerate_spe(tree).on_path_labels)


def test_report_lines():
    text = format_report(solve_spe(build_bft_game(3, [1], MechanismParams(1, 1), 2)))
    assert "on_path_commit: M_T" in text
    assert "outcome_unique: true" in text
    assert "on_path_fines: 0" in text
    assert text.endswith("\n")
