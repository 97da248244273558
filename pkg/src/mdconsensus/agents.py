"""Node behaviour: honest nodes, attackers and scripted fixtures.

A policy is an immutable value; :func:`decide_message` is a pure function of
``(policy, ctx, rng)``. Engines build the :class:`PolicyContext`, so policies
never see more than the mechanism reveals to them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence


class Kind(enum.Enum):
    HONEST = "honest"
    ATTACKER = "attacker"
    SCRIPTED = "scripted"


class Strategy(enum.Enum):
    """How an attacker plays.

    ``BEST_RESPONSE`` attacks only when the one-shot inequality favours it,
    ``PATIENT`` follows the patient-attack value table, and ``FORCED`` attacks
    unconditionally and never revises (the committed attack whose payoff the
    threshold formulas describe).
    """

    BEST_RESPONSE = "best-response"
    PATIENT = "patient"
    FORCED = "forced"


class Mechanism(enum.Enum):
    SR_BFT = "sr-bft"
    FORK_TX = "fork-tx"
    FORK_ALLOC = "fork-alloc"


class Stage(enum.Enum):
    INITIAL = "initial"
    CHALLENGE = "challenge"
    DISPUTE = "dispute"


class Role(enum.Enum):
    PROPOSER = "proposer"
    CONFIRMER = "confirmer"


class DisputeAction(enum.Enum):
    CONFIRM_INVALID = "confirm_invalid"
    DECLINE = "decline"
    ASSERT = "assert"
    NOT_ASSERT = "not_assert"
    CLAIM_A = "claim_a"
    CLAIM_B = "claim_b"


@dataclass(frozen=True)
class BlockMessage:
    """A proposed block, compared by exact payload equality."""

    payload: str

    def __str__(self):
        return self.payload


TRUE_BLOCK = BlockMessage("M_T")


def distorted_block(tag: str) -> BlockMessage:
    return BlockMessage(f"M_theta:{tag}")


@dataclass(frozen=True)
class AgentPolicy:
    kind: Kind = Kind.HONEST
    theta: float = 0.0
    H: float = 2.0
    D: float = 1.0
    coalition_id: str | None = None
    burn_aversion_eps: float = 1e-6
    strategy: Strategy = Strategy.BEST_RESPONSE
    script: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.H > self.D > 0:
            raise ValueError("honest values need H > D > 0")
        if self.burn_aversion_eps <= 0:
            raise ValueError("burn_aversion_eps must be positive")
        if self.kind is Kind.ATTACKER and not self.theta > 0:
            raise ValueError("attackers need theta > 0")
        if self.kind is Kind.SCRIPTED and not self.script:
            raise ValueError("scripted policy needs a non-empty script")

    @property
    def is_honest(self) -> bool:
        return self.kind is Kind.HONEST

    def preferred_block(self, node_id: str) -> BlockMessage | None:
        """Members of one coalition share their preferred block; loners get their own."""
        if self.kind is Kind.HONEST:
            return None
        return distorted_block(self.coalition_id if self.coalition_id is not None else node_id)


HONEST = AgentPolicy()


def honest_policy(H: float = 2.0, D: float = 1.0) -> AgentPolicy:
    return AgentPolicy(Kind.HONEST, H=H, D=D)


def attacker_policy(
    theta: float,
    coalition_id: str | None = "coalition",
    strategy: Strategy = Strategy.BEST_RESPONSE,
    **kw: Any,
) -> AgentPolicy:
    return AgentPolicy(Kind.ATTACKER, theta=theta, coalition_id=coalition_id, strategy=strategy, **kw)


def scripted_policy(script: Sequence[str], **kw: Any) -> AgentPolicy:
    """Replay ``script`` verbatim; the last action repeats once it runs out.

    SR actions are ``truth``, ``distort`` and ``fresh``; fork actions are the
    :class:`DisputeAction` values (``decline``, ``assert``, ``claim_b``, ...).
    """
    if not script:
        raise ValueError("script must be non-empty")
    return AgentPolicy(Kind.SCRIPTED, script=tuple(script), **kw)


@dataclass(frozen=True)
class PolicyContext:
    mechanism: Mechanism
    stage: Stage = Stage.INITIAL
    role: Role | None = None
    observed_disagreement: bool = False
    true_block: BlockMessage = TRUE_BLOCK
    preferred_block: BlockMessage | None = None
    coalition_share_s: float = 0.0
    remaining_counts: tuple[int, int] = (0, 0)
    partner_is_ally: bool | None = None
    reward_R: float = 1.0
    fine_F: float = 1.0
    continuation_value: float = 0.0
    own_message: BlockMessage | None = None
    fresh: BlockMessage | None = None
    step: int = 0
    # fork mechanisms
    tx_on_true_chain: bool | None = None
    true_chain: str = "A"
    other_claim: str | None = None
    fork_blocks_k: int = 1


# -- inequalities the attacker best-responds to --------------------------------

def informed_attack_pays(s: float, R: float, F: float, theta: float) -> bool:
    return s * (R + theta) - (1 - s) * F > R


def blind_attack_pays(s: float, R: float, F: float, theta: float) -> bool:
    return s * s * (R + theta) - (1 - s * s) * F > R


def fork_attack_pays(s: float, k: int, R: float, theta: float, F: float) -> bool:
    kR = k * R
    return s * (-kR * s * s + (theta + kR) * s - F) > 0


def _script_action(policy: AgentPolicy, ctx: PolicyContext) -> str:
    return policy.script[min(ctx.step, len(policy.script) - 1)]


def _sr_from_script(action: str, ctx: PolicyContext) -> BlockMessage:
    if action == "truth":
        return ctx.true_block
    if action == "distort":
        return ctx.preferred_block or distorted_block("scripted")
    if action == "fresh":
        return ctx.fresh or BlockMessage("fresh")
    raise ValueError(f"unknown SR script action {action!r}")


def _patient_choice(policy: AgentPolicy, ctx: PolicyContext) -> str:
    from .analytics import patient_policy_at

    a, h = ctx.remaining_counts
    seat = "proposer" if ctx.role is Role.PROPOSER else "confirmer"
    return patient_policy_at(a, h, ctx.reward_R, policy.theta, ctx.fine_F, seat)


def _sr_attacker(policy: AgentPolicy, ctx: PolicyContext) -> BlockMessage:
    truth, distort = ctx.true_block, ctx.preferred_block
    R, F, s, theta = ctx.reward_R, ctx.fine_F, ctx.coalition_share_s, policy.theta
    strategy = policy.strategy

    if ctx.stage is Stage.CHALLENGE:
        if ctx.own_message != distort:
            return truth
        if strategy is Strategy.FORCED:
            return distort
        if strategy is Strategy.PATIENT and ctx.partner_is_ally is False:
            return distort if _patient_choice(policy, ctx) == "ContinueDispute" else truth
        # revising earns R - F; persisting earns -F plus the continuation
        return truth if ctx.continuation_value < R else distort

    if strategy is Strategy.PATIENT and ctx.partner_is_ally is not None and ctx.role is not None:
        if ctx.partner_is_ally:
            return distort
        return distort if _patient_choice(policy, ctx) == "ContinueDispute" else truth

    if ctx.role is None:
        if strategy is Strategy.FORCED:
            return distort
        return distort if blind_attack_pays(s, R, F, theta) else truth

    if ctx.role is Role.CONFIRMER and ctx.partner_is_ally is False:
        return truth
    if strategy is Strategy.FORCED:
        return distort
    return distort if informed_attack_pays(s, R, F, theta) else truth


def _fork_tx(policy: AgentPolicy, ctx: PolicyContext) -> DisputeAction:
    if ctx.stage is Stage.DISPUTE:
        if policy.is_honest:
            return DisputeAction.ASSERT if ctx.tx_on_true_chain else DisputeAction.NOT_ASSERT
        return DisputeAction.NOT_ASSERT if ctx.tx_on_true_chain else DisputeAction.ASSERT
    # asked to confirm that a transaction missing from its own chain is invalid
    if policy.is_honest:
        return DisputeAction.DECLINE
    if ctx.tx_on_true_chain and ctx.partner_is_ally:
        return DisputeAction.CONFIRM_INVALID
    return DisputeAction.DECLINE


def _fork_alloc(policy: AgentPolicy, ctx: PolicyContext) -> DisputeAction:
    true_claim = DisputeAction.CLAIM_A if ctx.true_chain == "A" else DisputeAction.CLAIM_B
    false_claim = DisputeAction.CLAIM_B if ctx.true_chain == "A" else DisputeAction.CLAIM_A
    if ctx.stage is Stage.DISPUTE:
        if policy.is_honest:
            # burning beats letting the false allocation stand
            return DisputeAction.ASSERT if ctx.other_claim != ctx.true_chain else DisputeAction.NOT_ASSERT
        return DisputeAction.NOT_ASSERT
    if policy.is_honest:
        return true_claim
    if ctx.partner_is_ally is not None:
        return false_claim if ctx.partner_is_ally else true_claim
    if policy.strategy is Strategy.FORCED:
        return false_claim
    pays = fork_attack_pays(ctx.coalition_share_s, ctx.fork_blocks_k, ctx.reward_R, policy.theta, ctx.fine_F)
    return false_claim if pays else true_claim


def decide_message(policy: AgentPolicy, ctx: PolicyContext, rng=None) -> BlockMessage | DisputeAction:
    """Return the message (SR mechanism) or dispute action (fork mechanisms).

    ``rng`` is accepted for interface symmetry; none of the shipped policies
    randomise.
    """
    if policy.kind is Kind.SCRIPTED:
        action = _script_action(policy, ctx)
        if ctx.mechanism is Mechanism.SR_BFT:
            return _sr_from_script(action, ctx)
        return DisputeAction(action)

    if ctx.mechanism is Mechanism.SR_BFT:
        if policy.is_honest:
            return ctx.true_block
        return _sr_attacker(policy, ctx)
    if ctx.mechanism is Mechanism.FORK_TX:
        return _fork_tx(policy, ctx)
    return _fork_alloc(policy, ctx)


def policy_from_dict(entry: Mapping[str, Any]) -> AgentPolicy:
    kind = Kind(entry.get("kind", "honest"))
    kw = {k: entry[k] for k in ("H", "D", "burn_aversion_eps") if k in entry}
    if kind is Kind.HONEST:
        return AgentPolicy(Kind.HONEST, **kw)
    if kind is Kind.SCRIPTED:
        return scripted_policy(entry["script"], **kw)
    return AgentPolicy(
        Kind.ATTACKER,
        theta=float(entry["theta"]),
        coalition_id=entry.get("coalition_id"),
        strategy=Strategy(entry.get("strategy", "best-response")),
        **kw,
    )


def roster(entries: Iterable[Mapping[str, Any]]) -> list[AgentPolicy]:
    """Parse a scenario roster ``[{kind, theta, H, D, coalition_id}, ...]``."""
    return [policy_from_dict(e) for e in entries]
