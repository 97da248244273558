"""Random small games with perfect recall, for cross-checking solvers.

A game is a stack of levels; each level is a chance move or a move by one
player, and is either publicly observed or seen only by the mover. A
player's information set is everything it has observed so far, which gives
perfect recall by construction. Small integer payoffs make exact ties common.
"""

from __future__ import annotations

import random
from fractions import Fraction

from .tree import Chance, Decision, GameTree, Terminal

_CHANCE_SPLITS = ((Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 3), Fraction(2, 3)),
                  (Fraction(1, 4), Fraction(1, 4), Fraction(1, 2)))


def random_game(
    rng: random.Random,
    n_players: int = 2,
    levels: int = 4,
    max_actions: int = 3,
    terminal_prob: float = 0.2,
    chance_prob: float = 0.2,
    hidden_prob: float = 0.4,
    prefer_prob: float = 0.3,
    payoff_range: int = 2,
    max_profiles: int = 10_000,
    attempts: int = 50,
) -> GameTree:
    """Draw games until one has at most ``max_profiles`` pure profiles."""
    for _ in range(attempts):
        tree = _draw(rng, n_players, levels, max_actions, terminal_prob, chance_prob, hidden_prob,
                     prefer_prob, payoff_range)
        if tree.num_pure_profiles() <= max_profiles:
            return tree
    raise RuntimeError("could not draw a game small enough; lower levels or max_actions")


def _draw(rng, n_players, levels, max_actions, terminal_prob, chance_prob, hidden_prob, prefer_prob,
          payoff_range) -> GameTree:
    spec = []
    for _ in range(levels):
        if rng.random() < chance_prob:
            probs = rng.choice(_CHANCE_SPLITS)
            spec.append(("chance", None, probs, rng.random() >= hidden_prob))
        else:
            k = rng.randint(2, max_actions)
            spec.append(("move", rng.randrange(n_players), k, rng.random() >= hidden_prob))
    prefer: dict = {}
    counter = iter(range(10**9))

    def leaf():
        pay = tuple(rng.randint(-payoff_range, payoff_range) for _ in range(n_players))
        return Terminal(pay, f"z{next(counter)}", rng.choice((0, 0, 1)))

    def build(level, history):
        if level == len(spec) or (level > 0 and rng.random() < terminal_prob):
            return leaf()
        kind, actor, arg, _ = spec[level]
        if kind == "chance":
            return Chance([(p, build(level + 1, history + ((level, i),))) for i, p in enumerate(arg)])
        seen = tuple(
            a if (spec[lv][1] == actor and spec[lv][0] == "move") or spec[lv][3] else "?"
            for lv, a in history
        )
        key = (level, actor, seen)
        actions = tuple(f"a{j}" for j in range(arg))
        if key not in prefer:
            prefer[key] = rng.choice(actions) if rng.random() < prefer_prob else None
        kids = [build(level + 1, history + ((level, j),)) for j in range(arg)]
        return Decision(actor, key, actions, kids, prefer[key])

    root = build(0, ())
    return GameTree(root, tuple(f"p{i}" for i in range(n_players)), {"scenario": "random"})
