"""Exhaustive enumeration of pure profiles, used to cross-check the solver.

A profile is kept when every information set, on or off path, plays an
admissible action under the same belief and tie rules the solver uses. No
subgame decomposition is involved, so agreement is a real check.
"""

from __future__ import annotations

import itertools

from .solver import (
    Equilibrium,
    SpeResult,
    action_values,
    add,
    admissible,
    beliefs,
    deviation_reach,
    scale,
    summarize,
)
from .tree import Decision, GameTree, Terminal

PROFILE_LIMIT = 10_000


class TooManyProfiles(ValueError):
    pass


def _values(order, strategy):
    val = {}
    for node in reversed(order):
        if isinstance(node, Terminal):
            val[node.id] = node.payoffs
        elif isinstance(node, Decision):
            val[node.id] = val[node.child(strategy[node.infoset]).id]
        else:
            acc = None
            for p, ch in zip(node.probs, node.children):
                v = scale(p, val[ch.id])
                acc = v if acc is None else add(acc, v)
            val[node.id] = add(acc, node.reward) if node.reward is not None else acc
    return val


def enumerate_spe_profiles(tree: GameTree, limit: int = PROFILE_LIMIT) -> list[Equilibrium]:
    count = tree.num_pure_profiles()
    if count > limit:
        raise TooManyProfiles(f"{count} pure profiles exceed the limit of {limit}")
    order = tree.nodes()
    infosets = tree.infosets()
    keys = list(infosets)
    found = []
    for combo in itertools.product(*(infosets[k][0].actions for k in keys)):
        strategy = dict(zip(keys, combo))
        val = _values(order, strategy)
        dev, wt = deviation_reach(order, tree.root, strategy)
        ok = True
        for key in keys:
            mem = infosets[key]
            weighted = [(mem[0], 1.0)] if len(mem) == 1 else beliefs(mem, dev, wt)
            vals = action_values(weighted, mem[0].player, lambda ch: val[ch.id])
            if strategy[key] not in admissible(vals, mem[0].actions, mem[0].prefer):
                ok = False
                break
        if ok:
            found.append(Equilibrium(strategy, val[tree.root.id]))
    return found


def enumerate_spe(tree: GameTree, limit: int = PROFILE_LIMIT) -> SpeResult:
    eqs = enumerate_spe_profiles(tree, limit)
    return summarize(tree, eqs, set(), False)
