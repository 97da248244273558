"""Minimal ledger model: transactions, blocks, chains, forks, allocations.

Everything here is an immutable value. Cryptography is modelled by a
``signature_valid`` flag and block identity by a content digest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

GENESIS = "genesis"


class LedgerError(ValueError):
    """Structural problem with a chain or fork."""


@dataclass(frozen=True)
class Transaction:
    id: str
    sender: str
    receiver: str
    amount: Real
    timestamp: int = 0
    signature_valid: bool = True

    def __post_init__(self):
        if self.amount < 0:
            raise LedgerError(f"transaction {self.id}: negative amount")
        if self.timestamp < 0:
            raise LedgerError(f"transaction {self.id}: negative timestamp")

    @property
    def content_key(self) -> tuple:
        """Identity used to match the same transaction across forks (timestamp ignored)."""
        return (self.id, self.sender, self.receiver, self.amount)

    def equivalent(self, other: "Transaction") -> bool:
        return self.content_key == other.content_key

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "sender": self.sender,
            "receiver": self.receiver,
            "amount": _jsonable(self.amount),
            "timestamp": self.timestamp,
            "signature_valid": self.signature_valid,
        }


@dataclass(frozen=True)
class Block:
    height: int
    parent: str
    proposer: str
    transactions: tuple[Transaction, ...] = ()

    @property
    def block_id(self) -> str:
        body = json.dumps(
            [self.height, self.parent, self.proposer, [t.to_dict() for t in self.transactions]],
            sort_keys=True,
        )
        return hashlib.blake2b(body.encode(), digest_size=8).hexdigest()


def genesis_block() -> Block:
    return Block(0, GENESIS, GENESIS, ())


@dataclass(frozen=True)
class TokenAllocation:
    balances: Mapping[str, Real]

    def __post_init__(self):
        clean = {}
        for acct, amount in self.balances.items():
            if amount < 0:
                raise LedgerError(f"negative balance for {acct}")
            clean[acct] = amount
        object.__setattr__(self, "balances", MappingProxyType(dict(sorted(clean.items()))))

    def __getitem__(self, account: str) -> Real:
        return self.balances.get(account, 0)

    def __eq__(self, other):
        if not isinstance(other, TokenAllocation):
            return NotImplemented
        accounts = set(self.balances) | set(other.balances)
        return all(self[a] == other[a] for a in accounts)

    def __hash__(self):
        return hash(tuple((a, v) for a, v in self.balances.items() if v != 0))

    @property
    def total(self) -> Real:
        return sum(self.balances.values())

    def differing_accounts(self, other: "TokenAllocation") -> set[str]:
        accounts = set(self.balances) | set(other.balances)
        return {a for a in accounts if self[a] != other[a]}

    def apply(self, tx: Transaction) -> "TokenAllocation":
        if not validate_transaction(tx, self):
            raise LedgerError(f"transaction {tx.id} is not covered by {tx.sender}'s balance")
        new = dict(self.balances)
        new[tx.sender] = new.get(tx.sender, 0) - tx.amount
        new[tx.receiver] = new.get(tx.receiver, 0) + tx.amount
        return TokenAllocation(new)


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...]
    genesis_endowment: Mapping[str, Real] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(
            self, "genesis_endowment", MappingProxyType(dict(sorted(self.genesis_endowment.items())))
        )
        if not self.blocks:
            raise LedgerError("chain has no genesis block")
        if self.blocks[0].height != 0:
            raise LedgerError("first block must be genesis (height 0)")
        for prev, blk in zip(self.blocks, self.blocks[1:]):
            if blk.height != prev.height + 1:
                raise LedgerError(f"height gap at block {blk.height}")
            if blk.parent != prev.block_id:
                raise LedgerError(f"broken parent link at height {blk.height}")

    def __len__(self):
        return len(self.blocks)

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def transactions(self, after_height: int = 0) -> list[Transaction]:
        return [tx for blk in self.blocks if blk.height > after_height for tx in blk.transactions]

    def validate(self) -> None:
        """Raise LedgerError unless ids are unique and every spend is covered."""
        seen: set[str] = set()
        state = TokenAllocation(self.genesis_endowment)
        for blk in self.blocks:
            for tx in blk.transactions:
                if tx.id in seen:
                    raise LedgerError(f"duplicate transaction id {tx.id}")
                seen.add(tx.id)
                state = state.apply(tx)

    def is_valid(self) -> bool:
        try:
            self.validate()
        except LedgerError:
            return False
        return True

    @classmethod
    def build(
        cls,
        genesis_endowment: Mapping[str, Real],
        blocks: Iterable[tuple[str, Iterable[Transaction]]],
        base: "Chain | None" = None,
    ) -> "Chain":
        """Chain ``(proposer, txs)`` pairs onto genesis, or onto ``base`` if given."""
        out = list(base.blocks) if base is not None else [genesis_block()]
        for proposer, txs in blocks:
            prev = out[-1]
            out.append(Block(prev.height + 1, prev.block_id, proposer, tuple(txs)))
        endowment = base.genesis_endowment if base is not None else genesis_endowment
        return cls(tuple(out), endowment)

    def to_dict(self) -> dict:
        return {
            "genesis_endowment": {k: _jsonable(v) for k, v in self.genesis_endowment.items()},
            "blocks": [
                {"proposer": b.proposer, "txs": [t.to_dict() for t in b.transactions]}
                for b in self.blocks[1:]
            ],
        }


@dataclass(frozen=True)
class Fork:
    chain_a: Chain
    chain_b: Chain
    common_ancestor_height: int
    length_tolerance: int = 1

    def __post_init__(self):
        h = self.common_ancestor_height
        if h < 0 or h >= len(self.chain_a) or h >= len(self.chain_b):
            raise LedgerError("common ancestor height outside both chains")
        if self.chain_a.blocks[: h + 1] != self.chain_b.blocks[: h + 1]:
            raise LedgerError("chains disagree at or before the common ancestor")
        if dict(self.chain_a.genesis_endowment) != dict(self.chain_b.genesis_endowment):
            raise LedgerError("chains have different genesis endowments")
        if self.chain_a.blocks == self.chain_b.blocks:
            raise LedgerError("chains are identical; there is no fork")
        if self.length_tolerance < 0:
            raise LedgerError("length_tolerance must be non-negative")

    @classmethod
    def from_chains(cls, chain_a: Chain, chain_b: Chain, length_tolerance: int = 1) -> "Fork":
        if chain_a.blocks[0] != chain_b.blocks[0]:
            raise LedgerError("no common ancestor: genesis blocks differ")
        h = 0
        for blk_a, blk_b in zip(chain_a.blocks, chain_b.blocks):
            if blk_a != blk_b:
                break
            h = blk_a.height
        return cls(chain_a, chain_b, h, length_tolerance)

    @property
    def length_gap(self) -> int:
        return abs(len(self.chain_a) - len(self.chain_b))

    @property
    def within_tolerance(self) -> bool:
        return self.length_gap <= self.length_tolerance

    def swapped(self) -> "Fork":
        return Fork(self.chain_b, self.chain_a, self.common_ancestor_height, self.length_tolerance)

    def suffix_a(self) -> list[Transaction]:
        return self.chain_a.transactions(self.common_ancestor_height)

    def suffix_b(self) -> list[Transaction]:
        return self.chain_b.transactions(self.common_ancestor_height)

    def prefix_chain(self) -> Chain:
        return Chain(self.chain_a.blocks[: self.common_ancestor_height + 1], self.chain_a.genesis_endowment)

    def to_dict(self) -> dict:
        return {
            "length_tolerance": self.length_tolerance,
            "chain_a": self.chain_a.to_dict(),
            "chain_b": self.chain_b.to_dict(),
        }


@dataclass(frozen=True)
class ForkDiff:
    common: tuple[tuple[Transaction, int], ...]
    disputed_a_only: tuple[Transaction, ...]
    disputed_b_only: tuple[Transaction, ...]

    def __iter__(self):
        return iter((self.common, self.disputed_a_only, self.disputed_b_only))


def validate_transaction(tx: Transaction, state: TokenAllocation) -> bool:
    """True iff the signature is valid and the sender can cover the amount."""
    return tx.signature_valid and state[tx.sender] >= tx.amount


def diff_forks(fork: Fork) -> ForkDiff:
    """Split post-ancestor transactions into common and per-chain disputed sets.

    Common transactions carry the smaller of their two timestamps. A shared id
    with different content on the two chains is a structural error.
    """
    suffix_a, suffix_b = fork.suffix_a(), fork.suffix_b()
    by_id_b = {tx.id: tx for tx in suffix_b}
    ids_a = {tx.id for tx in suffix_a}
    common, a_only = [], []
    for tx in suffix_a:
        other = by_id_b.get(tx.id)
        if other is None:
            a_only.append(tx)
        elif tx.equivalent(other):
            common.append((tx, min(tx.timestamp, other.timestamp)))
        else:
            raise LedgerError(f"transaction id {tx.id} has different content on the two chains")
    b_only = [tx for tx in suffix_b if tx.id not in ids_a]
    return ForkDiff(tuple(common), tuple(a_only), tuple(b_only))


def final_allocations(chain: Chain) -> TokenAllocation:
    chain.validate()
    state = TokenAllocation(chain.genesis_endowment)
    for tx in chain.transactions():
        state = state.apply(tx)
    return state


# -- fixture files -----------------------------------------------------------

def _parse_amount(value: Any) -> Real:
    if isinstance(value, bool):
        raise LedgerError("amount must be numeric")
    if isinstance(value, int):
        return value
    if isinstance(value, (float, str)):
        frac = Fraction(str(value))
        return int(frac) if frac.denominator == 1 else frac
    raise LedgerError(f"cannot parse amount {value!r}")


def _jsonable(value: Real):
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else str(value)
    return value


def chain_from_dict(data: Mapping[str, Any]) -> Chain:
    try:
        endowment = {k: _parse_amount(v) for k, v in data["genesis_endowment"].items()}
        blocks = []
        for blk in data.get("blocks", []):
            txs = [
                Transaction(
                    id=str(t["id"]),
                    sender=t["sender"],
                    receiver=t["receiver"],
                    amount=_parse_amount(t["amount"]),
                    timestamp=int(t.get("timestamp", 0)),
                    signature_valid=bool(t.get("signature_valid", True)),
                )
                for t in blk.get("txs", [])
            ]
            blocks.append((blk["proposer"], txs))
    except (KeyError, TypeError) as exc:
        raise LedgerError(f"malformed chain fixture: {exc}") from exc
    return Chain.build(endowment, blocks)


def fork_from_dict(data: Mapping[str, Any]) -> Fork:
    try:
        chain_a = chain_from_dict(data["chain_a"])
        chain_b = chain_from_dict(data["chain_b"])
    except KeyError as exc:
        raise LedgerError(f"fork fixture missing {exc}") from exc
    return Fork.from_chains(chain_a, chain_b, int(data.get("length_tolerance", 1)))


def load_chain(path: str | Path) -> Chain:
    return chain_from_dict(json.loads(Path(path).read_text()))


def load_fork(path: str | Path) -> Fork:
    return fork_from_dict(json.loads(Path(path).read_text()))
