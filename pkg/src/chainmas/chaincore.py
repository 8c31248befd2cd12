"""
Simulated append-only ledger.

Blocks are hash-chained with Keccak-256 over a fixed-width header, events
inside a block are committed with a Merkle root, every event carries the
gas its contract call would have cost, and large payloads can live in an
off-chain content-addressed store anchored by digest.

No consensus, mining or EVM semantics: the chain is a single-writer log
driven by the simulation loop.
"""

from __future__ import annotations

import enum
import json
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from Crypto.Hash import keccak

from .errors import EmptyLeaves, NonMonotonicTime

DIGEST_SIZE = 32
ADDRESS_SIZE = 20
ZERO_HASH = bytes(DIGEST_SIZE)
SYSTEM_ADDRESS = bytes(ADDRESS_SIZE)


def keccak256(data: bytes) -> bytes:
    h = keccak.new(digest_bits=256)
    h.update(data)
    return h.digest()


def to_hex(digest: bytes) -> str:
    """Lowercase hex, no prefix."""
    return digest.hex()


def from_hex(text: str, size: int = DIGEST_SIZE) -> bytes:
    raw = bytes.fromhex(text.removeprefix("0x"))
    if len(raw) != size:
        raise ValueError(f"expected {size} bytes, got {len(raw)}")
    return raw


def canonical_payload(obj: Any) -> bytes:
    """Canonical JSON bytes: sorted keys, no whitespace, shortest float repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


class EventKind(str, enum.Enum):
    AgentRegistered = "AgentRegistered"
    TaskBatchEmitted = "TaskBatchEmitted"
    BidSubmitted = "BidSubmitted"
    TaskAssigned = "TaskAssigned"
    ActionLogged = "ActionLogged"
    TaskCompleted = "TaskCompleted"
    ReputationUpdated = "ReputationUpdated"
    CapabilityUpdated = "CapabilityUpdated"
    MessageSent = "MessageSent"


_KIND_CODE = {kind: i for i, kind in enumerate(EventKind)}
_CODE_KIND = {i: kind for kind, i in _KIND_CODE.items()}

# Measured averages of the reference deployment, per contract function.
# submitBid and sendMessage were not measured; their costs are our own estimates.
FUNCTION_GAS = {
    "registerAgent": 28_860,
    "submitTask": 40_390,
    "assignTask": 86_575,
    "logAction": 26_772,
    "updateReputation": 61_284,
    "updateCapability": 58_920,
    "TaskAssigned": 10_345,
    "TaskCompleted": 13_248,
    "submitBid": 45_000,
    "sendMessage": 32_000,
}

# Contract calls represented by one ledger event of each kind.
KIND_FUNCTIONS: dict[EventKind, tuple[str, ...]] = {
    EventKind.AgentRegistered: ("registerAgent",),
    EventKind.TaskBatchEmitted: ("submitTask",),
    EventKind.BidSubmitted: ("submitBid",),
    EventKind.TaskAssigned: ("assignTask", "TaskAssigned"),
    EventKind.ActionLogged: ("logAction",),
    EventKind.TaskCompleted: ("TaskCompleted",),
    EventKind.ReputationUpdated: ("updateReputation",),
    EventKind.CapabilityUpdated: ("updateCapability",),
    EventKind.MessageSent: ("sendMessage",),
}

DEFAULT_GAS: dict[EventKind, int] = {
    kind: sum(FUNCTION_GAS[f] for f in funcs) for kind, funcs in KIND_FUNCTIONS.items()
}


def gas_schedule(overrides: Mapping[str, int] | None = None) -> dict[EventKind, int]:
    """Default per-kind gas with optional overrides keyed by kind name."""
    schedule = dict(DEFAULT_GAS)
    for name, cost in (overrides or {}).items():
        kind = EventKind(name)
        if isinstance(cost, bool) or not isinstance(cost, int) or cost < 0:
            raise ValueError(f"gas for {name} must be a non-negative integer, got {cost!r}")
        schedule[kind] = cost
    return schedule


def load_gas_file(path) -> dict[EventKind, int]:
    """Read a ``Kind = gas`` (or ``Kind: gas``) key-value file."""
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":"
            key, _, value = line.partition(sep)
            try:
                overrides[key.strip()] = int(value.strip().replace("_", "").replace(",", ""))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad gas value {value.strip()!r}") from None
    return gas_schedule(overrides)


# ---------------------------------------------------------------------------
# Events and blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerEvent:
    kind: EventKind
    payload: bytes
    round: int
    gas_charged: int
    emitter: bytes = SYSTEM_ADDRESS

    def encode(self) -> bytes:
        return (
            struct.pack(">BIQ", _KIND_CODE[self.kind], self.round, self.gas_charged)
            + self.emitter
            + struct.pack(">I", len(self.payload))
            + self.payload
        )

    def leaf(self) -> bytes:
        return keccak256(self.encode())

    def data(self) -> Any:
        """Decoded payload; digests stored for off-chain bodies come back as-is."""
        return json.loads(self.payload)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "round": self.round,
            "gas": self.gas_charged,
            "emitter": "0x" + self.emitter.hex(),
            "payload": self.payload.hex(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LedgerEvent":
        return cls(
            kind=EventKind(d["kind"]),
            payload=bytes.fromhex(d["payload"]),
            round=int(d["round"]),
            gas_charged=int(d["gas"]),
            emitter=from_hex(d["emitter"], ADDRESS_SIZE),
        )


def merkle_root(leaves: list[bytes]) -> bytes:
    if not leaves:
        raise EmptyLeaves("merkle_root needs at least one leaf")
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [keccak256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_prove(leaves: list[bytes], index: int) -> list[tuple[bytes, bool]]:
    """Sibling path from leaf ``index`` to the root.

    Each step is ``(sibling, sibling_is_left)``.
    """
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    proof = []
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        sibling = index ^ 1
        proof.append((level[sibling], sibling < index))
        level = [keccak256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        index //= 2
    return proof


def merkle_verify(leaf: bytes, proof: Iterable[tuple[bytes, bool]], root: bytes) -> bool:
    node = leaf
    for sibling, is_left in proof:
        node = keccak256(sibling + node) if is_left else keccak256(node + sibling)
    return node == root


def events_root(events: Iterable[LedgerEvent]) -> bytes:
    leaves = [e.leaf() for e in events]
    return merkle_root(leaves) if leaves else ZERO_HASH


def block_hash(prev_hash: bytes, timestamp: int, root: bytes, nonce: int) -> bytes:
    return keccak256(prev_hash + struct.pack(">Q", timestamp) + root + struct.pack(">Q", nonce))


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    timestamp: int
    merkle_root: bytes
    nonce: int = 0
    events: tuple[LedgerEvent, ...] = ()
    block_hash: bytes = ZERO_HASH
    gas_used: int = 0

    @classmethod
    def build(cls, index: int, prev_hash: bytes, timestamp: int,
              events: Iterable[LedgerEvent] = (), nonce: int = 0) -> "Block":
        events = tuple(events)
        root = events_root(events)
        return cls(
            index=index,
            prev_hash=prev_hash,
            timestamp=timestamp,
            merkle_root=root,
            nonce=nonce,
            events=events,
            block_hash=block_hash(prev_hash, timestamp, root, nonce),
            gas_used=sum(e.gas_charged for e in events),
        )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": to_hex(self.prev_hash),
            "timestamp": self.timestamp,
            "merkle_root": to_hex(self.merkle_root),
            "nonce": self.nonce,
            "block_hash": to_hex(self.block_hash),
            "gas_used": self.gas_used,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Block":
        return cls(
            index=int(d["index"]),
            prev_hash=from_hex(d["prev_hash"]),
            timestamp=int(d["timestamp"]),
            merkle_root=from_hex(d["merkle_root"]),
            nonce=int(d["nonce"]),
            events=tuple(LedgerEvent.from_dict(e) for e in d["events"]),
            block_hash=from_hex(d["block_hash"]),
            gas_used=int(d["gas_used"]),
        )


def find_violation(blocks: list[Block], schedule: Mapping[EventKind, int] | None = None) -> str | None:
    """Describe the first integrity violation, or return None for a sound chain.

    With ``schedule`` given, each event's gas must also match its kind's cost.
    """
    if not blocks:
        return "chain is empty"
    for i, b in enumerate(blocks):
        where = f"block {i}"
        if b.index != i:
            return f"{where}: index {b.index} out of sequence"
        expected_prev = ZERO_HASH if i == 0 else blocks[i - 1].block_hash
        if b.prev_hash != expected_prev:
            return f"{where}: prev_hash does not link to block {i - 1}"
        if i and b.timestamp < blocks[i - 1].timestamp:
            return f"{where}: timestamp earlier than block {i - 1}"
        if events_root(b.events) != b.merkle_root:
            return f"{where}: merkle_root does not match events"
        if block_hash(b.prev_hash, b.timestamp, b.merkle_root, b.nonce) != b.block_hash:
            return f"{where}: block_hash does not recompute"
        if sum(e.gas_charged for e in b.events) != b.gas_used:
            return f"{where}: gas_used differs from event gas sum"
        if schedule is not None:
            for j, e in enumerate(b.events):
                if e.gas_charged != schedule[e.kind]:
                    return f"{where}: event {j} charged {e.gas_charged} gas, {e.kind.value} costs {schedule[e.kind]}"
    return None


class Chain:
    """Single-writer block chain with pending-event buffer and gas counters."""

    def __init__(self, genesis_timestamp: int = 0, gas: Mapping[EventKind, int] | None = None):
        self.gas = dict(gas) if gas is not None else dict(DEFAULT_GAS)
        self.blocks: list[Block] = [Block.build(0, ZERO_HASH, genesis_timestamp)]
        self.pending: list[LedgerEvent] = []
        self.gas_total = 0
        self.kind_counts: Counter = Counter()
        self.kind_gas: Counter = Counter()

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def __len__(self) -> int:
        return len(self.blocks)

    def make_event(self, kind: EventKind, data: Any, round: int,
                   emitter: bytes = SYSTEM_ADDRESS) -> LedgerEvent:
        payload = data if isinstance(data, bytes) else canonical_payload(data)
        return LedgerEvent(kind, payload, round, self.gas[kind], emitter)

    def emit(self, kind: EventKind, data: Any, round: int,
             emitter: bytes = SYSTEM_ADDRESS) -> LedgerEvent:
        """Create an event and queue it for the next block."""
        event = self.make_event(kind, data, round, emitter)
        self.pending.append(event)
        return event

    def append_block(self, events: Iterable[LedgerEvent], timestamp: int) -> Block:
        if timestamp < self.tip.timestamp:
            raise NonMonotonicTime(f"timestamp {timestamp} precedes tip timestamp {self.tip.timestamp}")
        block = Block.build(len(self.blocks), self.tip.block_hash, timestamp, events)
        self.blocks.append(block)
        for e in block.events:
            self.gas_total += e.gas_charged
            self.kind_counts[e.kind] += 1
            self.kind_gas[e.kind] += e.gas_charged
        return block

    def seal(self, timestamp: int) -> Block:
        """Commit all pending events as one block."""
        block = self.append_block(self.pending, timestamp)
        self.pending = []
        return block

    def verify_chain(self) -> bool:
        return find_violation(self.blocks) is None

    def events(self) -> Iterable[LedgerEvent]:
        for b in self.blocks:
            yield from b.events

    def gas_by_function(self) -> dict[str, dict[str, float]]:
        """Call counts and average gas per contract function.

        Composite kinds split their charge by the reference function costs.
        """
        report: dict[str, dict[str, float]] = {}
        for kind, count in self.kind_counts.items():
            funcs = KIND_FUNCTIONS[kind]
            base = sum(FUNCTION_GAS[f] for f in funcs)
            for f in funcs:
                share = self.kind_gas[kind] * FUNCTION_GAS[f] / base if base else 0.0
                entry = report.setdefault(f, {"calls": 0, "gas": 0.0})
                entry["calls"] += count
                entry["gas"] += share
        for entry in report.values():
            entry["avg_gas"] = entry["gas"] / entry["calls"]
        return report

    def to_jsonl(self) -> str:
        return "".join(json.dumps(b.to_dict(), separators=(",", ":")) + "\n" for b in self.blocks)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


def read_chain_jsonl(path) -> list[Block]:
    """Parse a chain export. Raises ValueError/KeyError on malformed input."""
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                blocks.append(Block.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return blocks


def tamper(block: Block, **changes) -> Block:
    """Copy of ``block`` with fields overwritten and nothing recomputed."""
    return replace(block, **changes)


@dataclass
class OffchainStore:
    """Content-addressed blob store keyed by Keccak-256."""

    entries: dict[bytes, bytes] = field(default_factory=dict)

    def put(self, blob: bytes) -> bytes:
        digest = keccak256(blob)
        self.entries[digest] = bytes(blob)
        return digest

    def get(self, digest: bytes) -> bytes:
        return self.entries[digest]

    def __contains__(self, digest: bytes) -> bool:
        return digest in self.entries


def offchain_verify(digest: bytes, blob: bytes) -> bool:
    return keccak256(blob) == digest
