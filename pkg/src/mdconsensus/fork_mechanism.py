"""Solomonic fork resolution, per transaction and per token allocation.

Chain ``A`` is the true chain unless ``ForkResolutionParams.true_chain`` says
otherwise; the mechanisms themselves never look at that flag, only the
policies do.
"""

from __future__ import annotations

import csv
import enum
import io
import random
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from .agents import AgentPolicy, DisputeAction, Kind, Mechanism, PolicyContext, Stage, decide_message
from .ledger import (
    Chain,
    Fork,
    TokenAllocation,
    Transaction,
    diff_forks,
    final_allocations,
    validate_transaction,
)


class MechanismNotTriggered(Exception):
    """The fork is outside the length tolerance, so no mechanism runs."""


class ForkPreconditionError(ValueError):
    pass


class DisputeOrder(enum.Enum):
    EARLIEST_TIMESTAMP_FIRST = "earliest-timestamp-first"


class TxResolution(enum.Enum):
    RETAINED = "retained"
    DISCARDED = "discarded"


class AllocResolution(enum.Enum):
    CHAIN_A_CONFIRMED = "chain_a_confirmed"
    CHAIN_B_CONFIRMED = "chain_b_confirmed"
    TOKENS_BURNED = "tokens_burned"


@dataclass(frozen=True)
class ForkResolutionParams:
    fine_F: float = 1.0
    length_tolerance: int = 1
    dispute_order: DisputeOrder = DisputeOrder.EARLIEST_TIMESTAMP_FIRST
    true_chain: str = "A"
    # "both": selected nodes know each other; "sequential": b sees a, a does not see b
    reveal: str = "both"

    def __post_init__(self):
        if not self.fine_F > 0:
            raise ValueError("fine_F must be positive")
        if self.length_tolerance < 0:
            raise ValueError("length_tolerance must be non-negative")
        if self.reveal not in ("both", "sequential", "none"):
            raise ValueError("reveal must be 'both', 'sequential' or 'none'")
        if self.true_chain not in ("A", "B"):
            raise ValueError("true_chain must be 'A' or 'B'")


@dataclass(frozen=True)
class TxDisputeOutcome:
    transaction: Transaction
    chain: str  # which chain holds it
    resolution: TxResolution
    asked: str | None  # node asked to confirm invalidity
    triggered: bool
    asserter: str | None
    fines: Mapping[str, float]
    fine_burned: bool
    fines_collected: float = 0.0
    fines_refunded: float = 0.0
    fines_burned: float = 0.0
    reason: str = ""


class TxResolutionResult(NamedTuple):
    resolved_chain: Chain
    outcomes: list[TxDisputeOutcome]


@dataclass(frozen=True)
class AllocDisputeOutcome:
    resolution: AllocResolution
    asserting_node: str | None
    fines: Mapping[str, float]
    claims: tuple[str, str]
    confirmed_allocation: TokenAllocation
    burned_balances: Mapping[str, float]
    fines_collected: float = 0.0
    fines_refunded: float = 0.0
    fines_burned: float = 0.0


def _allies(p: AgentPolicy, q: AgentPolicy) -> bool:
    return (
        p.kind is not Kind.HONEST
        and q.kind is not Kind.HONEST
        and p.coalition_id is not None
        and p.coalition_id == q.coalition_id
    )


def _partner_knowledge(params: ForkResolutionParams, node: str, ally: bool) -> bool | None:
    if params.reveal == "both":
        return ally
    if params.reveal == "sequential" and node == "b":
        return ally
    return None


def _check_triggered(fork: Fork, params: ForkResolutionParams):
    if fork.length_gap > params.length_tolerance:
        raise MechanismNotTriggered(
            f"chains differ by {fork.length_gap} blocks, tolerance is {params.length_tolerance}"
        )


def resolve_fork_tx(
    fork: Fork,
    node_a_policy: AgentPolicy,
    node_b_policy: AgentPolicy,
    params: ForkResolutionParams = ForkResolutionParams(),
    rng: random.Random | None = None,
) -> TxResolutionResult:
    """Confirm common transactions, then settle each disputed one, earliest first.

    A disputed transaction that is no longer covered by the sender's balance
    when its turn comes is dropped without a dispute.
    """
    _check_triggered(fork, params)
    diff = diff_forks(fork)
    F = params.fine_F
    policies = {"a": node_a_policy, "b": node_b_policy}
    ally = _allies(node_a_policy, node_b_policy)
    steps = {"a": 0, "b": 0}

    items = [(ts, tx.id, "common", tx) for tx, ts in diff.common]
    items += [(tx.timestamp, tx.id, "A", tx) for tx in diff.disputed_a_only]
    items += [(tx.timestamp, tx.id, "B", tx) for tx in diff.disputed_b_only]
    items.sort(key=lambda it: (it[0], it[1]))

    def ask(node, **kw):
        ctx = PolicyContext(
            mechanism=Mechanism.FORK_TX,
            true_chain=params.true_chain,
            fine_F=F,
            step=steps[node],
            partner_is_ally=_partner_knowledge(params, node, ally),
            **kw,
        )
        steps[node] += 1
        return decide_message(policies[node], ctx, rng)

    state = final_allocations(fork.prefix_chain())
    confirmed: list[Transaction] = []
    outcomes: list[TxDisputeOutcome] = []
    for ts, _, side, tx in items:
        if side == "common":
            if validate_transaction(tx, state):
                tx = Transaction(tx.id, tx.sender, tx.receiver, tx.amount, ts, tx.signature_valid)
                state = state.apply(tx)
                confirmed.append(tx)
            continue
        if not validate_transaction(tx, state):
            outcomes.append(TxDisputeOutcome(tx, side, TxResolution.DISCARDED, None, False, None, {},
                                             False, reason="invalid"))
            continue
        asked, holder = ("b", "a") if side == "A" else ("a", "b")
        on_true = side == params.true_chain
        choice = ask(asked, stage=Stage.INITIAL, tx_on_true_chain=on_true)
        if choice is not DisputeAction.CONFIRM_INVALID:
            state = state.apply(tx)
            confirmed.append(tx)
            outcomes.append(TxDisputeOutcome(tx, side, TxResolution.RETAINED, asked, False, None, {}, False))
            continue
        assertion = ask(holder, stage=Stage.DISPUTE, tx_on_true_chain=on_true)
        if assertion is DisputeAction.ASSERT:
            state = state.apply(tx)
            confirmed.append(tx)
            outcomes.append(TxDisputeOutcome(
                tx, side, TxResolution.RETAINED, asked, True, holder, {"a": -F, "b": -F}, True,
                fines_collected=2 * F, fines_burned=2 * F))
        else:
            outcomes.append(TxDisputeOutcome(
                tx, side, TxResolution.DISCARDED, asked, True, holder, {holder: -F, asked: 0.0}, True,
                fines_collected=2 * F, fines_refunded=F, fines_burned=F))

    prefix = fork.prefix_chain()
    resolved = Chain.build({}, [("mechanism", confirmed)], base=prefix) if confirmed else prefix
    return TxResolutionResult(resolved, outcomes)


def resolve_fork_alloc(
    fork: Fork,
    node_a_policy: AgentPolicy,
    node_b_policy: AgentPolicy,
    params: ForkResolutionParams = ForkResolutionParams(),
    rng: random.Random | None = None,
    coalition_share_s: float = 0.0,
    fork_blocks_k: int = 1,
) -> AllocDisputeOutcome:
    """Compare final allocations; on disagreement fine both and run the dispute stage."""
    if len(fork.chain_a) != len(fork.chain_b):
        raise ForkPreconditionError("allocation variant needs chains of equal length")
    _check_triggered(fork, params)
    alloc_a, alloc_b = final_allocations(fork.chain_a), final_allocations(fork.chain_b)
    differing = alloc_a.differing_accounts(alloc_b)
    if not differing:
        raise ForkPreconditionError("final allocations agree; nothing to dispute")
    rng = rng if rng is not None else random.Random(0)
    F = params.fine_F
    policies = {"a": node_a_policy, "b": node_b_policy}
    ally = _allies(node_a_policy, node_b_policy)

    def ask(node, step, **kw):
        ctx = PolicyContext(
            mechanism=Mechanism.FORK_ALLOC,
            true_chain=params.true_chain,
            fine_F=F,
            step=step,
            partner_is_ally=_partner_knowledge(params, node, ally),
            coalition_share_s=coalition_share_s if policies[node].kind is not Kind.HONEST else 0.0,
            fork_blocks_k=fork_blocks_k,
            **kw,
        )
        return decide_message(policies[node], ctx, rng)

    def claim_of(action) -> str:
        if action is DisputeAction.CLAIM_A:
            return "A"
        if action is DisputeAction.CLAIM_B:
            return "B"
        raise ValueError(f"expected a chain claim, got {action}")

    claim_a = claim_of(ask("a", 0, stage=Stage.INITIAL))
    claim_b = claim_of(ask("b", 0, stage=Stage.INITIAL))
    allocs = {"A": alloc_a, "B": alloc_b}
    confirmed_res = {"A": AllocResolution.CHAIN_A_CONFIRMED, "B": AllocResolution.CHAIN_B_CONFIRMED}
    if claim_a == claim_b:
        return AllocDisputeOutcome(confirmed_res[claim_a], None, {}, (claim_a, claim_b), allocs[claim_a], {})

    fines = {"a": -F, "b": -F}
    asserter = "a" if rng.random() < 0.5 else "b"
    own, other = (claim_a, claim_b) if asserter == "a" else (claim_b, claim_a)
    action = ask(asserter, 1, stage=Stage.DISPUTE, other_claim=other)
    if action is DisputeAction.ASSERT:
        kept = {acct: min(alloc_a[acct], alloc_b[acct]) for acct in differing}
        burned = {acct: max(alloc_a[acct], alloc_b[acct]) - kept[acct] for acct in sorted(differing)}
        after = TokenAllocation({**dict(alloc_a.balances), **kept})
        return AllocDisputeOutcome(AllocResolution.TOKENS_BURNED, asserter, fines, (claim_a, claim_b),
                                   after, burned, fines_collected=2 * F, fines_burned=2 * F)
    return AllocDisputeOutcome(confirmed_res[other], asserter, fines, (claim_a, claim_b), allocs[other], {},
                               fines_collected=2 * F, fines_burned=2 * F)


TRACE_COLUMNS = ("item", "type", "disputed", "asserter", "resolution", "fines_burned")


def tx_trace_csv(outcomes, alloc: AllocDisputeOutcome | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for o in outcomes:
        w.writerow([o.transaction.id, "tx", int(o.triggered), o.asserter or "", o.resolution.value,
                     repr(float(o.fines_burned))])
    if alloc is not None:
        w.writerow(["allocation", "alloc", int(alloc.asserting_node is not None), alloc.asserting_node or "",
                     alloc.resolution.value, repr(float(alloc.fines_burned))])
    return buf.getvalue()


def removed_valid_transactions(fork: Fork, resolved: Chain, true_chain: str = "A") -> list[str]:
    """Ids of true-chain suffix transactions missing from a resolved chain."""
    suffix = fork.suffix_a() if true_chain == "A" else fork.suffix_b()
    kept = {tx.id for tx in resolved.transactions(fork.common_ancestor_height)}
    return [tx.id for tx in suffix if tx.id not in kept]
