"""Simulated append-only ledger.

A single chain mined by an N-node network.  Blocks arrive as a Poisson
process (seeded, so runs are reproducible); submitted transactions are
assigned to nodes round-robin, each node processes its queue at a fixed
rate, and every block sweeps in all transactions whose processing finished
by the block timestamp.  State transitions are delegated to an injected
state machine; the ledger treats payloads as opaque.

Read-only queries never become transactions: they are answered from the
state as of the last mined block and consume no gas.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol

import numpy as np

DEFAULT_BLOCK_INTERVAL_MEAN = 13.0  # seconds
DEFAULT_PER_NODE_CAPACITY = 50.0  # requests per second
DEFAULT_GAS_PRICE_ETHER = 2e-8  # ether per gas unit
DEFAULT_USD_PER_ETHER = 143.68

GENESIS_PARENT = "0" * 64


class LedgerError(ValueError):
    pass


def fee_in_usd(
    gas_used: int,
    gas_price_ether_per_gas: float = DEFAULT_GAS_PRICE_ETHER,
    usd_per_ether: float = DEFAULT_USD_PER_ETHER,
) -> float:
    """Transaction fee in USD for the given gas use and exchange rate."""
    if gas_used < 0 or gas_price_ether_per_gas < 0 or usd_per_ether < 0:
        raise LedgerError("fee inputs must be non-negative")
    return gas_used * gas_price_ether_per_gas * usd_per_ether


def _lp(value: str) -> bytes:
    raw = value.encode("utf-8")
    return len(raw).to_bytes(4, "big") + raw


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class StateMachine(Protocol):
    """What the ledger needs from the contract layer."""

    def apply(self, payload: dict, now: float) -> "TxOutcome": ...

    def state_digest(self) -> str: ...

    def read(self, query: dict, now: float) -> dict: ...


@dataclass
class TxOutcome:
    gas_used: int
    status: str  # "applied" or "reverted"
    result: dict = field(default_factory=dict)


@dataclass
class Transaction:
    id: str
    sender: str
    payload: dict
    submitted_at: float
    node: int
    ready_at: float
    index: int
    gas_used: int = 0
    mined_at: Optional[float] = None
    status: str = "pending"
    result: dict = field(default_factory=dict)

    @property
    def pending(self) -> bool:
        return self.mined_at is None


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: str
    timestamp: float
    transactions: tuple[str, ...]
    state_root: str
    miner_node: int = 0  # informational; not part of the hash

    def hash(self) -> str:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = block_hash(
                self.height, self.parent_hash, self.timestamp,
                self.transactions, self.state_root,
            )
            self.__dict__["_hash"] = cached
        return cached


def block_hash(
    height: int,
    parent_hash: str,
    timestamp: float,
    transactions: Iterable[str],
    state_root: str,
) -> str:
    """Hash over the length-prefixed block fields, in declaration order."""
    tx_list = list(transactions)
    parts = [
        _lp(str(height)),
        _lp(parent_hash),
        _lp(repr(float(timestamp))),
        len(tx_list).to_bytes(4, "big"),
        *(_lp(t) for t in tx_list),
        _lp(state_root),
    ]
    return hashlib.sha256(b"".join(parts)).hexdigest()


def transaction_id(sender: str, index: int, payload: dict) -> str:
    parts = [_lp(sender), _lp(str(index)), _lp(canonical_json(payload))]
    return hashlib.sha256(b"".join(parts)).hexdigest()


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    node: int
    ready_at: float


class LedgerNetwork:
    """Single-writer chain over N mining nodes.

    Submissions and ``advance`` must come from one logical writer; reads go
    against the snapshot of the last mined state and may be issued
    concurrently.
    """

    def __init__(
        self,
        machine: StateMachine,
        nodes: int = 2,
        block_interval_mean: float = DEFAULT_BLOCK_INTERVAL_MEAN,
        per_node_capacity: float = DEFAULT_PER_NODE_CAPACITY,
        seed: int = 0,
        start_time: float = 0.0,
    ):
        if nodes < 1:
            raise LedgerError("need at least one node")
        if block_interval_mean <= 0 or per_node_capacity <= 0:
            raise LedgerError("intervals and capacity must be positive")
        self.machine = machine
        self.nodes = nodes
        self.block_interval_mean = block_interval_mean
        self.per_node_capacity = per_node_capacity
        self._service_time = 1.0 / per_node_capacity
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._accounts: set[str] = set()
        self._submission_count = 0
        self.transactions: dict[str, Transaction] = {}
        self._pending: list[Transaction] = []
        self._node_busy_until = [start_time] * nodes
        self.current_time = start_time
        self.blocks: list[Block] = [
            Block(0, GENESIS_PARENT, start_time, (), machine.state_digest(), 0)
        ]
        self.events: list[dict] = [
            {"event": "block", "height": 0, "time": start_time,
             "hash": self.blocks[0].hash(), "transactions": 0}
        ]
        self._next_block_time = start_time + self._rng.exponential(block_interval_mean)

    # --- accounts ---------------------------------------------------------

    def register_account(self, address: str) -> None:
        self._accounts.add(address)

    def is_registered(self, address: str) -> bool:
        return address in self._accounts

    # --- submission -------------------------------------------------------

    def submit(self, sender: str, payload: dict, now: Optional[float] = None) -> Receipt:
        """Queue a state-changing call; returns the id and assigned node."""
        at = self.current_time if now is None else now
        if at < self.current_time:
            raise LedgerError("submission time precedes ledger time")
        if sender not in self._accounts:
            raise LedgerError(f"unregistered sender: {sender}")
        if not isinstance(payload, dict) or "op" not in payload:
            raise LedgerError("malformed payload: expected an object with an 'op' field")
        try:
            canonical_json(payload)
        except (TypeError, ValueError) as exc:
            raise LedgerError(f"malformed payload: {exc}") from exc
        index = self._submission_count
        self._submission_count += 1
        node = index % self.nodes
        ready = max(at, self._node_busy_until[node]) + self._service_time
        self._node_busy_until[node] = ready
        tx = Transaction(
            id=transaction_id(sender, index, payload),
            sender=sender,
            payload=payload,
            submitted_at=at,
            node=node,
            ready_at=ready,
            index=index,
        )
        self.transactions[tx.id] = tx
        self._pending.append(tx)
        self.events.append(
            {"event": "submitted", "tx": tx.id, "time": at, "node": node,
             "op": payload.get("op")}
        )
        return Receipt(tx.id, node, ready)

    # --- mining -----------------------------------------------------------

    def advance(self, until: float) -> list[Block]:
        """Mine every block due up to ``until``; returns the new blocks."""
        if until < self.current_time:
            raise LedgerError("cannot advance backwards")
        mined: list[Block] = []
        while self._next_block_time <= until:
            t = self._next_block_time
            included: list[Transaction] = [tx for tx in self._pending if tx.ready_at <= t]
            included.sort(key=lambda tx: (tx.ready_at, tx.index))
            self._pending = [tx for tx in self._pending if tx.ready_at > t]
            for tx in included:
                outcome = self.machine.apply(tx.payload, now=t)
                tx.gas_used = outcome.gas_used
                tx.status = outcome.status
                tx.result = outcome.result
                tx.mined_at = t
                self.events.append(
                    {"event": "mined", "tx": tx.id, "time": t,
                     "status": tx.status, "gas": tx.gas_used}
                )
            parent = self.blocks[-1]
            block = Block(
                height=parent.height + 1,
                parent_hash=parent.hash(),
                timestamp=t,
                transactions=tuple(tx.id for tx in included),
                state_root=self.machine.state_digest(),
                miner_node=(parent.height + 1) % self.nodes,
            )
            self.blocks.append(block)
            mined.append(block)
            self.events.append(
                {"event": "block", "height": block.height, "time": t,
                 "hash": block.hash(), "transactions": len(included)}
            )
            self._next_block_time = t + self._rng.exponential(self.block_interval_mean)
        self.current_time = until
        return mined

    # --- reads ------------------------------------------------------------

    def read_state(self, query: dict) -> dict:
        """Answer a read-only call against the last mined state; no gas."""
        if not isinstance(query, dict) or "op" not in query:
            raise LedgerError("malformed query: expected an object with an 'op' field")
        return self.machine.read(query, now=self.current_time)

    # --- accounting and export ---------------------------------------------

    @property
    def next_block_time(self) -> float:
        return self._next_block_time

    @property
    def gas_total(self) -> int:
        return sum(tx.gas_used for tx in self.transactions.values() if not tx.pending)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def export_events(self, fh) -> None:
        """One JSON object per line: block and transaction lifecycle events."""
        for record in self.events:
            fh.write(canonical_json(record) + "\n")

    # --- persistence --------------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "nodes": self.nodes,
            "block_interval_mean": self.block_interval_mean,
            "per_node_capacity": self.per_node_capacity,
            "current_time": self.current_time,
            "next_block_time": self._next_block_time,
            "node_busy_until": list(self._node_busy_until),
            "submission_count": self._submission_count,
            "accounts": sorted(self._accounts),
            "rng_state": self._rng.bit_generator.state,
            "blocks": [
                {
                    "height": b.height,
                    "parent_hash": b.parent_hash,
                    "timestamp": b.timestamp,
                    "transactions": list(b.transactions),
                    "state_root": b.state_root,
                    "miner_node": b.miner_node,
                }
                for b in self.blocks
            ],
            "transactions": {
                tx.id: {
                    "sender": tx.sender,
                    "payload": tx.payload,
                    "submitted_at": tx.submitted_at,
                    "node": tx.node,
                    "ready_at": tx.ready_at,
                    "index": tx.index,
                    "gas_used": tx.gas_used,
                    "mined_at": tx.mined_at,
                    "status": tx.status,
                    "result": tx.result,
                }
                for tx in self.transactions.values()
            },
            "events": self.events,
        }

    @classmethod
    def from_snapshot(cls, data: dict, machine_factory: Callable[[], StateMachine]) -> "LedgerNetwork":
        """Rebuild a network, replaying the chain to restore machine state.

        Replay re-derives every state root from genesis, so a corrupted
        snapshot fails loudly instead of loading.
        """
        blocks = [
            Block(
                height=b["height"],
                parent_hash=b["parent_hash"],
                timestamp=b["timestamp"],
                transactions=tuple(b["transactions"]),
                state_root=b["state_root"],
                miner_node=b.get("miner_node", 0),
            )
            for b in data["blocks"]
        ]
        transactions = {
            tx_id: Transaction(
                id=tx_id,
                sender=t["sender"],
                payload=t["payload"],
                submitted_at=t["submitted_at"],
                node=t["node"],
                ready_at=t["ready_at"],
                index=t["index"],
                gas_used=t["gas_used"],
                mined_at=t["mined_at"],
                status=t["status"],
                result=t["result"],
            )
            for tx_id, t in data["transactions"].items()
        }
        machine = machine_factory()
        replay(blocks, transactions, lambda: machine)
        net = cls.__new__(cls)
        net.machine = machine
        net.nodes = data["nodes"]
        net.block_interval_mean = data["block_interval_mean"]
        net.per_node_capacity = data["per_node_capacity"]
        net._service_time = 1.0 / net.per_node_capacity
        net._rng = np.random.Generator(np.random.PCG64())
        net._rng.bit_generator.state = data["rng_state"]
        net._accounts = set(data["accounts"])
        net._submission_count = data["submission_count"]
        net.transactions = transactions
        net._pending = sorted(
            (tx for tx in transactions.values() if tx.pending), key=lambda tx: tx.index
        )
        net._node_busy_until = list(data["node_busy_until"])
        net.current_time = data["current_time"]
        net.blocks = blocks
        net.events = list(data["events"])
        net._next_block_time = data["next_block_time"]
        return net


def replay(
    blocks: list[Block],
    transactions: dict[str, Transaction],
    machine_factory: Callable[[], StateMachine],
) -> list[str]:
    """Re-apply the chain onto a fresh machine; returns the state roots.

    The first block must be the genesis block.  Raises if any recomputed
    state root or parent hash disagrees with the recorded chain.
    """
    machine = machine_factory()
    roots = [machine.state_digest()]
    if blocks and blocks[0].state_root != roots[0]:
        raise LedgerError("genesis state root mismatch")
    for prev, block in zip(blocks, blocks[1:]):
        if block.parent_hash != prev.hash():
            raise LedgerError(f"broken parent hash at height {block.height}")
        for tx_id in block.transactions:
            machine.apply(transactions[tx_id].payload, now=block.timestamp)
        root = machine.state_digest()
        roots.append(root)
        if root != block.state_root:
            raise LedgerError(f"state root mismatch at height {block.height}")
    return roots
