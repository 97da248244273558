"""Finite extensive-form games with imperfect information.

Nodes may be shared between parents (the tree is then a DAG); sharing is only
safe for roots of proper subgames with no path-dependent payoffs, which is how
the builders use it. Payoff increments that depend on the path are carried by
chance nodes (``reward``/``burned``) sitting in front of the shared node.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Sequence

_ids = itertools.count()


class GameTreeError(ValueError):
    pass


class Terminal:
    __slots__ = ("payoffs", "label", "burned", "id")

    def __init__(self, payoffs: Sequence, label: str = "", burned=0):
        self.payoffs = tuple(payoffs)
        self.label = label
        self.burned = burned
        self.id = next(_ids)

    @property
    def children(self):
        return ()

    def __repr__(self):
        return f"Terminal({self.label!r}, {self.payoffs})"


class Chance:
    """Chance move; ``reward`` and ``burned`` accrue on entering the node."""

    __slots__ = ("probs", "children", "reward", "burned", "id")

    def __init__(self, branches: Sequence[tuple[Any, "Node"]], reward: Sequence | None = None, burned=0):
        if not branches:
            raise GameTreeError("chance node needs at least one branch")
        self.probs = tuple(p for p, _ in branches)
        self.children = tuple(c for _, c in branches)
        self.reward = tuple(reward) if reward is not None else None
        self.burned = burned
        self.id = next(_ids)

    def __repr__(self):
        return f"Chance({len(self.children)} branches)"


class Decision:
    __slots__ = ("player", "infoset", "actions", "children", "prefer", "id")

    def __init__(self, player: int, infoset: Hashable, actions: Sequence[str], children: Sequence["Node"],
                 prefer: str | None = None):
        if len(actions) != len(children) or not actions:
            raise GameTreeError("decision node needs one child per action")
        if len(set(actions)) != len(actions):
            raise GameTreeError(f"duplicate action labels at {infoset!r}")
        if prefer is not None and prefer not in actions:
            raise GameTreeError(f"preferred action {prefer!r} not available at {infoset!r}")
        self.player = player
        self.infoset = infoset
        self.actions = tuple(actions)
        self.children = tuple(children)
        self.prefer = prefer
        self.id = next(_ids)

    def child(self, action: str) -> "Node":
        return self.children[self.actions.index(action)]

    def __repr__(self):
        return f"Decision(p{self.player}, {self.infoset!r})"


Node = Terminal | Chance | Decision


@dataclass
class GameTree:
    root: Node
    players: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.players = tuple(self.players)
        self._nodes: list[Node] | None = None
        self._infosets: dict[Hashable, list[Decision]] | None = None

    def nodes(self) -> list[Node]:
        """Every distinct node in topological order (parents before children)."""
        if self._nodes is None:
            seen: set[int] = set()
            post: list[Node] = []
            stack: list[tuple[Node, int]] = [(self.root, 0)]
            seen.add(self.root.id)
            while stack:
                node, i = stack.pop()
                kids = node.children
                if i < len(kids):
                    stack.append((node, i + 1))
                    child = kids[i]
                    if child.id not in seen:
                        seen.add(child.id)
                        stack.append((child, 0))
                else:
                    post.append(node)
            post.reverse()
            self._nodes = post
        return self._nodes

    def infosets(self) -> dict[Hashable, list[Decision]]:
        if self._infosets is None:
            out: dict[Hashable, list[Decision]] = {}
            for node in self.nodes():
                if isinstance(node, Decision):
                    out.setdefault(node.infoset, []).append(node)
            self._infosets = out
        return self._infosets

    def actions_at(self, infoset: Hashable) -> tuple[str, ...]:
        return self.infosets()[infoset][0].actions

    def num_pure_profiles(self) -> int:
        total = 1
        for members in self.infosets().values():
            total *= len(members[0].actions)
        return total

    def validate(self) -> None:
        n = len(self.players)
        for node in self.nodes():
            if isinstance(node, Chance):
                s = sum(node.probs)
                if any(p < 0 for p in node.probs) or abs(float(s) - 1.0) > 1e-12:
                    raise GameTreeError(f"chance probabilities sum to {s}")
                if isinstance(s, Fraction) and s != 1:
                    raise GameTreeError(f"chance probabilities sum to {s}")
                if node.reward is not None and len(node.reward) != n:
                    raise GameTreeError("reward vector has the wrong length")
            elif isinstance(node, Terminal):
                if len(node.payoffs) != n:
                    raise GameTreeError("payoff vector has the wrong length")
            elif not 0 <= node.player < n:
                raise GameTreeError(f"unknown player index {node.player}")
        for key, members in self.infosets().items():
            first = members[0]
            for m in members[1:]:
                if m.player != first.player or m.actions != first.actions or m.prefer != first.prefer:
                    raise GameTreeError(f"inconsistent members in information set {key!r}")
