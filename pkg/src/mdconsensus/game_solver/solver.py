"""Pure-strategy subgame perfect equilibria by backward induction.

The tree is cut into proper subgames and solved bottom up. Inside one
subgame, the information sets whose moves can shift someone's beliefs (those
with a member strictly above a member of a non-singleton set) are enumerated
jointly; every other set is then solved in reverse topological order. Off the
equilibrium path, beliefs put weight on the members reached with the fewest
deviations from the profile, proportionally to the chance probabilities.

Tie-breaking: if an information set's preferred action is among the
maximisers it is the only admissible choice; otherwise every maximiser is
admissible, each spawns its own equilibrium, and the set is reported as tied.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from graphlib import TopologicalSorter
from typing import Hashable, Mapping

from ..agents import BlockMessage
from .tree import Chance, Decision, GameTree, Node, Terminal

TOL = 1e-9
MAX_EQUILIBRIA = 64
MAX_BLOCK_PROFILES = 500_000


class SolverLimitError(RuntimeError):
    pass


# -- helpers shared with the oracle -----------------------------------------------

def add(u, v):
    # payoff vectors are mostly zeros; skipping them avoids slow Fraction adds
    return tuple(a + b if a and b else a or b for a, b in zip(u, v))


def scale(p, u):
    return tuple(p * a if a else a for a in u)


def close(a, b) -> bool:
    if a == b:
        return True
    if not (isinstance(a, float) or isinstance(b, float)):
        return False  # exact operands: only exact ties count
    return abs(a - b) <= TOL * max(1.0, abs(float(a)), abs(float(b)))


def admissible(values: Mapping[str, object], actions, prefer) -> list[str]:
    best = max(values[a] for a in actions)
    top = [a for a in actions if close(values[a], best)]
    if prefer is not None and prefer in top:
        return [prefer]
    return top


def deviation_reach(order, root, strategy, stop=frozenset()):
    """Minimal deviation count and chance weight of every node below ``root``.

    ``order`` must be topological; nodes whose ids are in ``stop`` are not
    expanded. A move that differs from ``strategy`` (or any move at an
    information set missing from it) counts as one deviation.
    """
    dev = {root.id: 0}
    wt = {root.id: 1}

    def relax(child, d, w):
        cur = dev.get(child.id)
        if cur is None or d < cur:
            dev[child.id], wt[child.id] = d, w
        elif d == cur:
            wt[child.id] += w

    for node in order:
        d = dev.get(node.id)
        if d is None or node.id in stop:
            continue
        w = wt[node.id]
        if isinstance(node, Chance):
            for p, ch in zip(node.probs, node.children):
                relax(ch, d, w * p)
        elif isinstance(node, Decision):
            chosen = strategy.get(node.infoset)
            for a, ch in zip(node.actions, node.children):
                relax(ch, d if a == chosen else d + 1, w)
    return dev, wt


def beliefs(members, dev, wt):
    """Weights over ``members``: minimal-deviation members, by chance weight."""
    reached = [m for m in members if m.id in dev]
    if not reached:
        return [(m, 1.0 / len(members)) for m in members]
    dmin = min(dev[m.id] for m in reached)
    top = [m for m in reached if dev[m.id] == dmin]
    total = sum(wt[m.id] for m in top)
    if total == 0:
        return [(m, 1.0 / len(top)) for m in top]
    return [(m, wt[m.id] / total) for m in top]


def action_values(members_with_belief, player, value_of):
    first = members_with_belief[0][0]
    if len(members_with_belief) == 1:
        return {a: value_of(ch)[player] for a, ch in zip(first.actions, first.children)}
    out = {}
    for i, a in enumerate(first.actions):
        out[a] = sum(b * value_of(m.children[i])[player] for m, b in members_with_belief)
    return out


# -- outcome distributions ----------------------------------------------------------

@dataclass(frozen=True, order=True)
class OutcomeKey:
    label: str
    burned: float
    payoffs: tuple


def _round(x) -> float:
    r = round(float(x), 9)
    return 0.0 if r == 0 else r


def outcome_distribution(root: Node, strategy: Mapping[Hashable, str]) -> dict[OutcomeKey, float]:
    """Distribution over (terminal label, total burned, payoff vector) under ``strategy``."""
    memo: dict[int, dict] = {}

    def dist(node):
        got = memo.get(node.id)
        if got is not None:
            return got
        if isinstance(node, Terminal):
            out = {(node.label, node.burned, node.payoffs): 1}
        elif isinstance(node, Decision):
            out = dist(node.child(strategy[node.infoset]))
        else:
            out = {}
            for p, ch in zip(node.probs, node.children):
                if p == 0:
                    continue
                for (label, burned, pay), q in dist(ch).items():
                    if node.reward is not None:
                        pay = add(pay, node.reward)
                    key = (label, burned + node.burned, pay)
                    out[key] = out.get(key, 0) + p * q
        memo[node.id] = out
        return out

    final: dict[OutcomeKey, float] = {}
    for (label, burned, pay), q in dist(root).items():
        key = OutcomeKey(label, _round(burned), tuple(_round(x) for x in pay))
        final[key] = final.get(key, 0) + float(q)
    return dict(sorted(final.items()))


def same_distribution(d1: Mapping, d2: Mapping) -> bool:
    if set(d1) != set(d2):
        return False
    return all(close(d1[k], d2[k]) for k in d1)


# -- proper subgames ----------------------------------------------------------------

def proper_subgame_roots(tree: GameTree) -> set[int]:
    """Ids of nodes solved as separate subgames.

    These are the roots of proper subgames, except terminals and
    single-branch chance nodes.
    """
    sizes = {k: len(v) for k, v in tree.infosets().items()}
    open_sets: dict[int, dict] = {}
    roots: set[int] = set()
    for node in reversed(tree.nodes()):
        acc: dict = {}
        for ch in node.children:
            for key, ids in open_sets[ch.id].items():
                acc.setdefault(key, set()).update(ids)
        if isinstance(node, Decision):
            acc.setdefault(node.infoset, set()).add(node.id)
        for key in [k for k, ids in acc.items() if len(ids) == sizes[k]]:
            del acc[key]
        open_sets[node.id] = acc
        if acc or isinstance(node, Terminal):
            continue
        # single-branch chance nodes only carry rewards; keep them in the parent block
        if isinstance(node, Chance) and len(node.children) == 1 and node is not tree.root:
            continue
        roots.add(node.id)
    return roots


# -- results ------------------------------------------------------------------------

@dataclass
class Equilibrium:
    strategy: dict
    values: tuple
    path_outcomes: dict = field(default_factory=dict)
    count: int = 1  # strategy profiles sharing these values and outcomes


@dataclass
class SpeResult:
    strategy_profile: dict
    path_outcomes: dict
    outcome_unique: bool
    on_path_commit: BlockMessage | None
    on_path_fines: float
    values: tuple
    equilibria: list[Equilibrium]
    strategy_unique: bool
    ties: list
    truncated: bool
    players: tuple = ()
    meta: dict = field(default_factory=dict)
    equilibrium_count: int = 0

    @property
    def on_path_labels(self) -> set[str]:
        return {k.label for k, p in self.path_outcomes.items() if p > 0}

    @property
    def on_path_label(self) -> str | None:
        labels = self.on_path_labels
        return next(iter(labels)) if len(labels) == 1 else None

    def label_probability(self, label: str) -> float:
        return sum(p for k, p in self.path_outcomes.items() if k.label == label)


def summarize(tree: GameTree, eqs: list[Equilibrium], ties, truncated: bool) -> SpeResult:
    for eq in eqs:
        if not eq.path_outcomes:
            eq.path_outcomes = outcome_distribution(tree.root, eq.strategy)
    if not eqs:
        # no pure equilibrium (matching-pennies style subgames)
        return SpeResult({}, {}, False, None, 0.0, (), [], False, sorted(ties, key=repr), truncated,
                         tree.players, dict(tree.meta))
    main = eqs[0]
    unique = not truncated and all(same_distribution(main.path_outcomes, e.path_outcomes) for e in eqs[1:])
    labels = {k.label for k, p in main.path_outcomes.items() if p > 0}
    commit = None
    if unique and len(labels) == 1:
        (label,) = labels
        if label.startswith("commit:"):
            commit = BlockMessage(label[len("commit:"):])
    fines = sum(p * k.burned for k, p in main.path_outcomes.items())
    return SpeResult(
        strategy_profile=main.strategy,
        path_outcomes=main.path_outcomes,
        outcome_unique=unique,
        on_path_commit=commit,
        on_path_fines=_round(fines),
        values=tuple(_round(v) for v in main.values),
        equilibria=eqs,
        strategy_unique=sum(e.count for e in eqs) == 1 and not truncated,
        ties=sorted(ties, key=repr),
        truncated=truncated,
        players=tree.players,
        meta=dict(tree.meta),
        equilibrium_count=sum(e.count for e in eqs),
    )


# -- backward induction ---------------------------------------------------------------

class _Block:
    """One proper subgame with nested proper subgames collapsed to leaves."""

    def __init__(self, root: Node, proper: set[int]):
        self.root = root
        post: list[Node] = []
        self.leaves: list[Node] = []
        seen = {root.id}
        stack = [(root, 0)]
        while stack:
            node, i = stack.pop()
            if i < len(node.children):
                stack.append((node, i + 1))
                ch = node.children[i]
                if ch.id in seen:
                    continue
                seen.add(ch.id)
                if ch.id in proper:
                    self.leaves.append(ch)
                elif not isinstance(ch, Terminal):
                    stack.append((ch, 0))
            else:
                post.append(node)
        self.order = post[::-1]
        self.leaf_ids = frozenset(n.id for n in self.leaves)

        members: dict[Hashable, list[Decision]] = {}
        for node in self.order:
            if isinstance(node, Decision):
                members.setdefault(node.infoset, []).append(node)
        self.members = members
        pooled = {k for k, v in members.items() if len(v) > 1}

        in_block = {n.id for n in self.order}
        pooled_below: dict[int, bool] = {}
        below: dict[int, set] = {}
        for node in post:
            hp, bl = False, set()
            for ch in node.children:
                if ch.id not in in_block or ch.id == root.id:
                    continue
                if isinstance(ch, Decision):
                    bl.add(ch.infoset)
                    hp = hp or ch.infoset in pooled
                hp = hp or pooled_below[ch.id]
                bl |= below[ch.id]
            pooled_below[node.id] = hp
            below[node.id] = bl

        # beliefs only ever concern pooled members, reached through these nodes
        self.belief_order = [nd for nd in self.order if pooled_below[nd.id]]
        self.enumerated = [k for k, v in members.items() if any(pooled_below[m.id] for m in v)]
        enum_set = set(self.enumerated)
        rest = {k for k in members if k not in enum_set}
        deps = {k: {j for m in members[k] for j in below[m.id]} & rest for k in rest}
        self.ordered = list(TopologicalSorter(deps).static_order())
        self.pooled = pooled

    def profile_count(self) -> int:
        total = 1
        for k in self.enumerated:
            total *= len(self.members[k][0].actions)
        return total


@dataclass
class _Class:
    """Equilibria of one subgame that agree on values and outcome distribution."""

    values: tuple
    dist: dict
    strategy: dict
    count: int
    ties: frozenset

    @property
    def signature(self):
        return (tuple(_round(v) for v in self.values), tuple(sorted(self.dist.items())))


def _rkey(label, burned, pay):
    return (label, _round(burned), tuple(_round(x) for x in pay))


class _Solver:
    def __init__(self, tree: GameTree, max_equilibria: int = MAX_EQUILIBRIA):
        self.tree = tree
        self.proper = proper_subgame_roots(tree)
        self.cap = max_equilibria
        self.memo: dict[int, list[_Class]] = {}
        self.truncated = False

    def solve(self, root: Node) -> list[_Class]:
        got = self.memo.get(root.id)
        if got is not None:
            return got
        block = _Block(root, self.proper)
        nested = [self.solve(leaf) for leaf in block.leaves]
        if block.profile_count() > MAX_BLOCK_PROFILES:
            raise SolverLimitError(f"subgame needs {block.profile_count()} joint profiles")
        classes: dict = {}
        for combo in itertools.product(*nested):
            leaf_values = {leaf.id: c.values for leaf, c in zip(block.leaves, combo)}
            leaf_dists = {leaf.id: c.dist for leaf, c in zip(block.leaves, combo)}
            base: dict = {}
            ties: frozenset = frozenset()
            count = 1
            for c in combo:
                base.update(c.strategy)
                ties |= c.ties
                count *= c.count
            for strat, value, t, mult in self._solve_block(block, leaf_values, leaf_dists):
                dist = self._dist(block.root, strat, leaf_dists, block.root.id, {})
                full = dict(base)
                full.update(strat)
                found = _Class(value, dist, full, count * mult, ties | t)
                sig = found.signature
                if sig in classes:
                    prev = classes[sig]
                    prev.count += found.count
                    prev.ties |= found.ties
                elif len(classes) >= self.cap:
                    self.truncated = True
                else:
                    classes[sig] = found
        out = list(classes.values())
        self.memo[root.id] = out
        return out

    def _solve_block(self, block: _Block, leaf_values, leaf_dists):
        members = block.members
        enum_keys = block.enumerated
        enum_actions = [members[k][0].actions for k in enum_keys]
        need_beliefs = bool(block.pooled & set(block.ordered))
        for combo in itertools.product(*enum_actions):
            sigma_e = dict(zip(enum_keys, combo))
            if need_beliefs:
                dev0, wt0 = deviation_reach(block.belief_order, block.root, sigma_e, block.leaf_ids)
            else:
                dev0 = wt0 = None
            for sigma, memo, ties, mult in self._complete(block, sigma_e, leaf_values, leaf_dists, dev0, wt0):
                tied = self._enumerated_rational(block, sigma, memo, leaf_values)
                if tied is not None:
                    value = self._value(block.root, sigma, memo, leaf_values, block.root.id)
                    yield sigma, value, ties | tied, mult

    def _value(self, node, sigma, memo, leaf_values, root_id):
        if node.id in leaf_values and node.id != root_id:
            return leaf_values[node.id]
        got = memo.get(node.id)
        if got is not None:
            return got
        if isinstance(node, Terminal):
            val = node.payoffs
        elif isinstance(node, Decision):
            val = self._value(node.child(sigma[node.infoset]), sigma, memo, leaf_values, root_id)
        else:
            val = None
            for p, ch in zip(node.probs, node.children):
                v = scale(p, self._value(ch, sigma, memo, leaf_values, root_id))
                val = v if val is None else add(val, v)
            if node.reward is not None:
                val = add(val, node.reward)
        memo[node.id] = val
        return val

    def _dist(self, node, sigma, leaf_dists, root_id, memo):
        """Outcome distribution below ``node``, nested subgames taken from ``leaf_dists``."""
        if node.id in leaf_dists and node.id != root_id:
            return leaf_dists[node.id]
        got = memo.get(node.id)
        if got is not None:
            return got
        if isinstance(node, Terminal):
            out = {_rkey(node.label, node.burned, node.payoffs): 1.0}
        elif isinstance(node, Decision):
            out = self._dist(node.child(sigma[node.infoset]), sigma, leaf_dists, root_id, memo)
        else:
            out = {}
            for p, ch in zip(node.probs, node.children):
                if p == 0:
                    continue
                for (label, burned, pay), q in self._dist(ch, sigma, leaf_dists, root_id, memo).items():
                    if node.reward is not None:
                        pay = add(pay, node.reward)
                    key = _rkey(label, burned + node.burned, pay)
                    out[key] = out.get(key, 0.0) + float(p) * q
            out = {k: round(v, 12) for k, v in out.items()}
        memo[node.id] = out
        return out

    def _complete(self, block, sigma_e, leaf_values, leaf_dists, dev0, wt0):
        """Fill in the remaining information sets bottom up, branching on ties.

        Tied actions whose consequences coincide at every member (same value
        vector and outcome distribution) are merged and counted, not branched.
        """
        keys = block.ordered
        root_id = block.root.id

        def rec(i, sigma, memo, ties, mult):
            if i == len(keys):
                yield sigma, memo, ties, mult
                return
            key = keys[i]
            mem = block.members[key]
            if len(mem) == 1:
                weighted = [(mem[0], 1.0)]
            else:
                weighted = beliefs(mem, dev0, wt0)
            value_of = lambda ch: self._value(ch, sigma, memo, leaf_values, root_id)  # noqa: E731
            vals = action_values(weighted, mem[0].player, value_of)
            best = admissible(vals, mem[0].actions, mem[0].prefer)
            if len(best) == 1:
                sigma[key] = best[0]
                yield from rec(i + 1, sigma, memo, ties, mult)
                return
            groups: dict = {}
            for a in best:
                idx = mem[0].actions.index(a)
                sig = tuple(
                    (tuple(_round(x) for x in value_of(m.children[idx])),
                     tuple(sorted(self._dist(m.children[idx], sigma, leaf_dists, root_id, {}).items())))
                    for m in mem
                )
                groups.setdefault(sig, []).append(a)
            for acts in groups.values():
                s2 = dict(sigma)
                s2[key] = acts[0]
                yield from rec(i + 1, s2, dict(memo), ties | {key}, mult * len(acts))

        yield from rec(0, dict(sigma_e), {}, frozenset(), 1)

    def _enumerated_rational(self, block, sigma, memo, leaf_values) -> frozenset | None:
        """Tied enumerated sets if ``sigma`` is rational at all of them, else None."""
        root_id = block.root.id
        dev = wt = None
        tied = set()
        for key in block.enumerated:
            mem = block.members[key]
            if len(mem) == 1:
                weighted = [(mem[0], 1.0)]
            else:
                if dev is None:
                    dev, wt = deviation_reach(block.belief_order, block.root, sigma, block.leaf_ids)
                weighted = beliefs(mem, dev, wt)
            vals = action_values(weighted, mem[0].player,
                                 lambda ch: self._value(ch, sigma, memo, leaf_values, root_id))
            ok = admissible(vals, mem[0].actions, mem[0].prefer)
            if sigma[key] not in ok:
                return None
            if len(ok) > 1:
                tied.add(key)
        return frozenset(tied)


def solve_spe(tree: GameTree, max_equilibria: int = MAX_EQUILIBRIA) -> SpeResult:
    """Solve ``tree`` and summarise its pure-strategy equilibria.

    Equilibria that agree on values and on the outcome distribution are
    reported once, with ``count`` giving how many strategy profiles they stand
    for.
    """
    solver = _Solver(tree, max_equilibria)
    classes = solver.solve(tree.root)
    eqs = [Equilibrium(c.strategy, c.values, {OutcomeKey(*k): p for k, p in sorted(c.dist.items())}, c.count)
           for c in classes]
    ties = set().union(*(c.ties for c in classes)) if classes else set()
    return summarize(tree, eqs, ties, solver.truncated)
