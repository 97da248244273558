"""Game trees induced by the SR mechanism and the two fork mechanisms.

Messages are reduced to three classes: the true block ``T``, the sender's
preferred distorted block ``theta`` (attackers only) and a fresh symbol
``bot`` that nobody else can reproduce. Under exact ties honest players pick
``T`` and the honest dispute action; attackers pick ``theta``, which rules
out coalition members failing to coordinate on fresh symbols.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from ..fork_mechanism import ForkResolutionParams, MechanismNotTriggered
from ..ledger import Fork, TokenAllocation, diff_forks, final_allocations, validate_transaction
from ..sr_mechanism import MechanismParams, PairingMode
from .tree import Chance, Decision, GameTree, Terminal

MAX_BFT_NODES = 6
TRUE = "M_T"


class GameSizeError(ValueError):
    """The requested tree would be too large to build."""


def _node_names(n: int) -> tuple[str, ...]:
    return tuple(f"n{i}" for i in range(n))


def _resolve_ids(ids: Iterable, names: tuple[str, ...]) -> frozenset[int]:
    out = set()
    for x in ids:
        if isinstance(x, int) and not isinstance(x, bool):
            idx = x
        elif x in names:
            idx = names.index(x)
        else:
            raise ValueError(f"unknown node {x!r}")
        if not 0 <= idx < len(names):
            raise ValueError(f"node index {idx} outside 0..{len(names) - 1}")
        out.add(idx)
    return frozenset(out)


def build_bft_game(
    n: int,
    attacker_ids: Iterable = (),
    params: MechanismParams = MechanismParams(),
    theta=1,
    shared_preference: bool = True,
    share_subgames: bool = True,
) -> GameTree:
    """Tree of the SR mechanism run until commit or exhaustion.

    Informed mode: both members of the drawn pair know the pair and their
    roles; the confirmer does not see the proposer's message and the proposer,
    when challenged, does not see the confirmer's. Blind mode pools each
    node's message over every pair it belongs to in that round.
    ``share_subgames`` reuses the continuation after a failed round, keyed by
    the remaining node set; set it to False to get a plain tree.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if n > MAX_BFT_NODES:
        raise GameSizeError(f"n={n} exceeds the size guard of {MAX_BFT_NODES}")
    names = _node_names(n)
    attackers = _resolve_ids(attacker_ids, names)
    R = params.reward_R
    blind = params.pairing_mode is PairingMode.BLIND
    groups = {i: ("coalition" if shared_preference else names[i]) for i in attackers}
    zero = (0,) * n
    # exact probabilities only when every parameter is exact
    exact = all(isinstance(x, (int, Fraction)) for x in (R, params.fine_F, theta))
    memo: dict[frozenset, object] = {}

    def msgs(i):
        return (TRUE, "theta", "bot") if i in attackers else (TRUE, "bot")

    def focal(i):
        # exact ties: honest nodes pick the true block, attackers their own
        return "theta" if i in attackers else TRUE

    def content(i, m):
        if m == TRUE:
            return TRUE
        if m == "theta":
            return f"M_theta:{groups[i]}"
        return None  # fresh symbols never match

    def committed(block, base):
        pay = list(base)
        for j in attackers:
            if block == f"M_theta:{groups[j]}":
                pay[j] += theta
        return pay

    def commit_leaf(block, p, c, pay_p, burned):
        base = [0] * n
        base[p] = pay_p
        return Terminal(tuple(committed(block, base)), f"commit:{block}", burned)

    def subgame(remaining: frozenset):
        if share_subgames and remaining in memo:
            return memo[remaining]
        m = len(remaining)
        if m < 2:
            node = Terminal(zero, "exhausted", 0)
        else:
            r = (n - m) // 2
            F = params.fine(r)
            prob = Fraction(1, m * (m - 1)) if exact else 1.0 / (m * (m - 1))
            order = sorted(remaining)
            node = Chance([(prob, pair(remaining, p, c, F, r)) for p in order for c in order if p != c])
        if share_subgames:
            memo[remaining] = node
        return node

    def pair(remaining, p, c, F, r):
        key = tuple(sorted(remaining))
        p_set = ("msg", key, p) if blind else ("msg", key, p, c, "p")
        c_set = ("msg", key, c) if blind else ("msg", key, p, c, "c")
        after = remaining - {p, c}

        def challenge(mp, mc):
            actions = msgs(p)
            kids = []
            target = content(c, mc)
            for rev in actions:
                if target is not None and content(p, rev) == target:
                    kids.append(commit_leaf(target, p, c, R - F, F))
                else:
                    fines = [0] * n
                    fines[p] = fines[c] = -F
                    kids.append(Chance([(1, subgame(after))], reward=fines, burned=2 * F))
            return Decision(p, ("ch", key, p, c, mp), actions, kids, focal(p))

        def confirm(mp):
            kids = []
            for mc in msgs(c):
                block = content(p, mp)
                if block is not None and block == content(c, mc):
                    kids.append(commit_leaf(block, p, c, R, 0))
                else:
                    kids.append(challenge(mp, mc))
            return Decision(c, c_set, msgs(c), kids, focal(c))

        return Decision(p, p_set, msgs(p), [confirm(mp) for mp in msgs(p)], focal(p))

    root = subgame(frozenset(range(n)))
    meta = {
        "scenario": "bft",
        "n": n,
        "attackers": [names[i] for i in sorted(attackers)],
        "mode": params.pairing_mode.value,
        "R": R,
        "F": params.fine_F,
        "theta": theta,
    }
    return GameTree(root, names, meta)


# -- fork games ---------------------------------------------------------------

HONEST_SELECTIONS = ("a", "b", "both", "none")


def _honest_flags(honest_selected: str) -> tuple[bool, bool]:
    if honest_selected not in HONEST_SELECTIONS:
        raise ValueError(f"honest_selected must be one of {HONEST_SELECTIONS}")
    return honest_selected in ("a", "both"), honest_selected in ("b", "both")


def build_fork_game(
    fixture: Fork,
    honest_selected: str = "a",
    params: ForkResolutionParams = ForkResolutionParams(),
    theta=1,
    H=2,
    D=1,
    mechanism: str = "tx",
    eps=Fraction(1, 10**6),
    claim_order: str = "sequential",
) -> GameTree:
    """Two-player tree: node ``a`` sampled from chain A, node ``b`` from chain B.

    Honest utilities are +H when the true allocation results, -D otherwise and
    0 when tokens are burned. Attackers value the dishonest outcome at theta
    and a burn at -eps. Fines are added on top.

    In the allocation variant ``claim_order="sequential"`` lets b see a's
    claim before making its own; ``"simultaneous"`` pools b's claim over a's.
    """
    if claim_order not in ("sequential", "simultaneous"):
        raise ValueError("claim_order must be 'sequential' or 'simultaneous'")
    if fixture.length_gap > params.length_tolerance:
        raise MechanismNotTriggered("fork exceeds the length tolerance")
    honest = _honest_flags(honest_selected)
    meta = {
        "scenario": f"fork-{mechanism}",
        "honest_selected": honest_selected,
        "F": params.fine_F,
        "theta": theta,
        "H": H,
        "D": D,
        "true_chain": params.true_chain,
    }
    if mechanism == "alloc":
        meta["claim_order"] = claim_order
    if mechanism == "tx":
        root = _tx_tree(fixture, honest, params, theta, H, D)
    elif mechanism == "alloc":
        root = _alloc_tree(fixture, honest, params, theta, H, D, eps, claim_order)
    else:
        raise ValueError("mechanism must be 'tx' or 'alloc'")
    return GameTree(root, ("a", "b"), meta)


def _utility(is_honest, status, H, D, theta, eps):
    if status == "true":
        return H if is_honest else 0
    if status == "burned":
        return 0 if is_honest else -eps
    return -D if is_honest else theta


def _tx_tree(fork, honest, params, theta, H, D):
    diff = diff_forks(fork)
    F = params.fine_F
    true_alloc = final_allocations(fork.chain_a if params.true_chain == "A" else fork.chain_b)
    true_ids = {tx.id for tx in (fork.suffix_a() if params.true_chain == "A" else fork.suffix_b())}
    items = [(ts, tx.id, "common", tx) for tx, ts in diff.common]
    items += [(tx.timestamp, tx.id, "A", tx) for tx in diff.disputed_a_only]
    items += [(tx.timestamp, tx.id, "B", tx) for tx in diff.disputed_b_only]
    items.sort(key=lambda it: (it[0], it[1]))
    start = final_allocations(fork.prefix_chain())

    def walk(i, state: TokenAllocation, kept: tuple, history: tuple):
        while i < len(items) and (items[i][2] == "common" or not validate_transaction(items[i][3], state)):
            _, _, side, tx = items[i]
            if side == "common" and validate_transaction(tx, state):
                state = state.apply(tx)
                kept = kept + (tx.id,)
            i += 1
        if i == len(items):
            status = "true" if state == true_alloc else "dishonest"
            removed = sorted(true_ids - set(kept))
            label = f"{status}|removed={','.join(removed)}"
            return Terminal(tuple(_utility(honest[j], status, H, D, theta, 0) for j in (0, 1)), label)
        _, _, side, tx = items[i]
        asked, holder = (1, 0) if side == "A" else (0, 1)
        on_true = side == params.true_chain
        retained = walk(i + 1, state.apply(tx), kept + (tx.id,), history + (tx.id + ":retained",))
        discarded = walk(i + 1, state, kept, history + (tx.id + ":discarded",))

        asserted = Chance([(1, retained)], reward=(-F, -F), burned=2 * F)
        refund = [0, 0]
        refund[holder] = -F
        dropped = Chance([(1, discarded)], reward=tuple(refund), burned=F)
        dispute = Decision(holder, ("tx-assert", history, tx.id), ("assert", "not_assert"), (asserted, dropped),
                           ("assert" if on_true else "not_assert") if honest[holder] else None)
        return Decision(asked, ("tx-confirm", history, tx.id), ("decline", "confirm_invalid"),
                        (retained, dispute), "decline" if honest[asked] else None)

    return walk(0, start, (), ())


def _alloc_tree(fork, honest, params, theta, H, D, eps, claim_order):
    if len(fork.chain_a) != len(fork.chain_b):
        raise ValueError("allocation variant needs chains of equal length")
    F = params.fine_F
    true = params.true_chain

    def outcome(chain, burned=0):
        status = "true" if chain == true else "dishonest"
        label = f"chain_{chain.lower()}_confirmed"
        return Terminal(tuple(_utility(honest[j], status, H, D, theta, eps) for j in (0, 1)), label, burned)

    def burn():
        return Terminal(tuple(_utility(honest[j], "burned", H, D, theta, eps) for j in (0, 1)), "tokens_burned")

    def asserter(who, own, other):
        prefer = None
        if honest[who]:
            prefer = "assert" if other != true else "not_assert"
        return Decision(who, ("alloc-assert", who, own, other), ("assert", "not_assert"),
                        (burn(), outcome(other)), prefer)

    claims = ("A", "B")

    def b_claim(ca):
        kids = []
        for cb in claims:
            if ca == cb:
                kids.append(outcome(ca))
            else:
                kids.append(Chance([(Fraction(1, 2), asserter(0, ca, cb)), (Fraction(1, 2), asserter(1, cb, ca))],
                                   reward=(-F, -F), burned=2 * F))
        b_set = ("alloc-claim", "b", ca) if claim_order == "sequential" else ("alloc-claim", "b")
        return Decision(1, b_set, ("claim_a", "claim_b"), kids,
                        ("claim_a" if true == "A" else "claim_b") if honest[1] else None)

    return Decision(0, ("alloc-claim", "a"), ("claim_a", "claim_b"), [b_claim(c) for c in claims],
                    ("claim_a" if true == "A" else "claim_b") if honest[0] else None)
