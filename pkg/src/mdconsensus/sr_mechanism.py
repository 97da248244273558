"""Simultaneous Report engine: one proposer, one confirmer, one challenge stage.

A round draws an ordered pair without replacement (proposer first). Matching
messages commit and pay the proposer R. A mismatch fines both F; the proposer
gets one revision, which commits if it equals the confirmer's message
(confirmer refunded) and otherwise excludes both from later rounds.
"""

from __future__ import annotations

import csv
import enum
import io
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping

from .agents import (
    TRUE_BLOCK,
    AgentPolicy,
    BlockMessage,
    Kind,
    Mechanism,
    PolicyContext,
    Role,
    Stage,
    decide_message,
)

__all__ = [
    "BlockMessage",
    "ExhaustionError",
    "MechanismParams",
    "MechanismRunOutcome",
    "PairingMode",
    "Population",
    "RoundOutcome",
    "play_pair",
    "rounds_to_csv",
    "run_round",
    "run_until_commit",
]


class ExhaustionError(RuntimeError):
    """Fewer than two eligible nodes are left to form a pair."""


class PairingMode(enum.Enum):
    INFORMED = "informed"
    BLIND = "blind"


@dataclass(frozen=True)
class MechanismParams:
    reward_R: float = 1.0
    fine_F: float = 1.0
    pairing_mode: PairingMode = PairingMode.INFORMED
    fine_schedule: Callable[[int], float] | None = field(default=None, compare=False)
    # show each seat whether the other seat is an ally (patient-attack model)
    reveal_partner: bool = False

    def __post_init__(self):
        if not self.fine_F > 0:
            raise ValueError("fine_F must be positive")
        if self.reward_R < 0:
            raise ValueError("reward_R must be non-negative")
        if self.fine_schedule is not None and self.fine_schedule(0) != self.fine_F:
            raise ValueError("fine_schedule(0) must equal fine_F")

    def fine(self, round_index: int) -> float:
        if self.fine_schedule is None:
            return self.fine_F
        f = self.fine_schedule(round_index)
        if not f > 0:
            raise ValueError(f"fine schedule returned non-positive fine at round {round_index}")
        return f


class Population:
    """Eligible nodes with per-coalition head counts, computed once."""

    def __init__(self, nodes: Iterable[str], policies: Mapping[str, AgentPolicy]):
        self.nodes = tuple(sorted(nodes))
        self.policies = policies
        missing = [n for n in self.nodes if n not in policies]
        if missing:
            raise KeyError(f"no policy for nodes {missing}")

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def coalition_counts(self) -> Counter:
        return Counter(self.group(n) for n in self.nodes)

    def group(self, node: str):
        pol = self.policies[node]
        if pol.kind is Kind.HONEST:
            return None
        return pol.coalition_id if pol.coalition_id is not None else ("solo", node)

    def allies(self, a: str, b: str) -> bool:
        ga = self.group(a)
        return ga is not None and ga == self.group(b)

    def counts_for(self, node: str) -> tuple[int, int]:
        g = self.group(node)
        mine = self.coalition_counts[g] if g is not None else 0
        return mine, len(self.nodes) - mine

    def share(self, node: str) -> float:
        mine, _ = self.counts_for(node)
        return mine / len(self.nodes) if self.nodes else 0.0

    def without(self, *excluded: str) -> "Population":
        drop = set(excluded)
        return Population([n for n in self.nodes if n not in drop], self.policies)


@dataclass(frozen=True)
class RoundOutcome:
    proposer: str
    confirmer: str
    m_p: BlockMessage
    m_c: BlockMessage
    challenge_entered: bool
    m_p_challenge: BlockMessage | None
    committed: BlockMessage | None
    payoffs: Mapping[str, float]
    excluded: frozenset[str]
    round_index: int = 0
    fine: float = 0.0
    fines_collected: float = 0.0
    fines_refunded: float = 0.0
    fines_burned: float = 0.0

    @property
    def matched(self) -> bool:
        return self.m_p == self.m_c


@dataclass(frozen=True)
class MechanismRunOutcome:
    rounds: tuple[RoundOutcome, ...]
    final_committed: BlockMessage | None
    total_rounds: int
    aborted_exhausted: bool
    truncated: bool = False

    def payoffs(self) -> Counter:
        total: Counter = Counter()
        for r in self.rounds:
            total.update(r.payoffs)
        return total


def _as_population(eligible, policies) -> Population:
    if isinstance(eligible, Population):
        return eligible
    return Population(eligible, policies)


def _ctx(pop: Population, node: str, partner: str, role: Role | None, params: MechanismParams,
         round_index: int, stage: Stage, step: int, **extra) -> PolicyContext:
    policy = pop.policies[node]
    return PolicyContext(
        mechanism=Mechanism.SR_BFT,
        stage=stage,
        role=role,
        observed_disagreement=stage is Stage.CHALLENGE,
        true_block=TRUE_BLOCK,
        preferred_block=policy.preferred_block(node),
        coalition_share_s=pop.share(node) if policy.kind is not Kind.HONEST else 0.0,
        remaining_counts=pop.counts_for(node),
        reward_R=params.reward_R,
        fine_F=params.fine(round_index),
        fresh=BlockMessage(f"fresh:{node}:{round_index}:{stage.value}"),
        step=step,
        **extra,
    )


def play_pair(
    proposer: str,
    confirmer: str,
    eligible,
    policies: Mapping[str, AgentPolicy],
    params: MechanismParams,
    rng=None,
    round_index: int = 0,
    steps: dict[str, int] | None = None,
) -> RoundOutcome:
    """Run steps 2-4 and the challenge stage for an already drawn pair."""
    pop = _as_population(eligible, policies)
    steps = steps if steps is not None else {}
    F, R = params.fine(round_index), params.reward_R

    def ask(node, partner, role, stage, **extra):
        step = steps.get(node, 0)
        steps[node] = step + 1
        ctx = _ctx(pop, node, partner, role, params, round_index, stage, step, **extra)
        return decide_message(pop.policies[node], ctx, rng)

    if params.pairing_mode is PairingMode.BLIND:
        ally = pop.allies(proposer, confirmer) if params.reveal_partner else None
        m_p = ask(proposer, confirmer, None, Stage.INITIAL, partner_is_ally=ally)
        m_c = ask(confirmer, proposer, None, Stage.INITIAL, partner_is_ally=ally)
    else:
        ally = pop.allies(proposer, confirmer)
        # the proposer is announced before the confirmer is drawn
        m_p = ask(proposer, confirmer, Role.PROPOSER, Stage.INITIAL,
                  partner_is_ally=ally if params.reveal_partner else None)
        m_c = ask(confirmer, proposer, Role.CONFIRMER, Stage.INITIAL, partner_is_ally=ally)

    if m_p == m_c:
        return RoundOutcome(proposer, confirmer, m_p, m_c, False, None, m_p,
                            {proposer: R, confirmer: 0.0}, frozenset(), round_index, F)

    m_pc = ask(proposer, confirmer, Role.PROPOSER, Stage.CHALLENGE, own_message=m_p,
               partner_is_ally=pop.allies(proposer, confirmer) if params.reveal_partner else None)
    if m_pc == m_c:
        return RoundOutcome(proposer, confirmer, m_p, m_c, True, m_pc, m_pc,
                            {proposer: R - F, confirmer: 0.0}, frozenset(), round_index, F,
                            fines_collected=2 * F, fines_refunded=F, fines_burned=F)
    return RoundOutcome(proposer, confirmer, m_p, m_c, True, m_pc, None,
                        {proposer: -F, confirmer: -F}, frozenset({proposer, confirmer}),
                        round_index, F, fines_collected=2 * F, fines_burned=2 * F)


def run_round(
    eligible,
    policies: Mapping[str, AgentPolicy],
    params: MechanismParams,
    rng: random.Random,
    round_index: int = 0,
    steps: dict[str, int] | None = None,
) -> RoundOutcome:
    pop = _as_population(eligible, policies)
    if len(pop) < 2:
        raise ExhaustionError(f"only {len(pop)} eligible node(s)")
    proposer, confirmer = rng.sample(pop.nodes, 2)
    return play_pair(proposer, confirmer, pop, policies, params, rng, round_index, steps)


def run_until_commit(
    all_nodes,
    policies: Mapping[str, AgentPolicy],
    params: MechanismParams,
    rng: random.Random,
    max_rounds: int | None = None,
) -> MechanismRunOutcome:
    pop = _as_population(all_nodes, policies)
    if len(pop) < 2:
        raise ExhaustionError(f"only {len(pop)} node(s)")
    rounds: list[RoundOutcome] = []
    steps: dict[str, int] = {}
    while True:
        if max_rounds is not None and len(rounds) >= max_rounds:
            return MechanismRunOutcome(tuple(rounds), None, len(rounds), False, truncated=True)
        if len(pop) < 2:
            return MechanismRunOutcome(tuple(rounds), None, len(rounds), True)
        outcome = run_round(pop, policies, params, rng, len(rounds), steps)
        rounds.append(outcome)
        if outcome.committed is not None:
            return MechanismRunOutcome(tuple(rounds), outcome.committed, len(rounds), False)
        pop = pop.without(*outcome.excluded)


TRACE_COLUMNS = ("round", "proposer", "confirmer", "matched", "challenged", "committed", "fines_burned")


def rounds_to_csv(run: MechanismRunOutcome | Iterable[RoundOutcome]) -> str:
    rounds = run.rounds if isinstance(run, MechanismRunOutcome) else tuple(run)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rounds:
        w.writerow([
            r.round_index, r.proposer, r.confirmer, int(r.matched), int(r.challenge_entered),
            r.committed.payload if r.committed is not None else "", repr(float(r.fines_burned)),
        ])
    return buf.getvalue()
