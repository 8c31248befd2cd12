"""
Signed inter-agent messages.

Messages are signed over a field-ordered, length-prefixed binary encoding;
the JSON form is an export view only. A ``MessageLog`` plays the
sendMessage contract (freshness window, replay guard, hybrid on/off-chain
logging) and ``Dispatcher`` routes verified messages to task handlers.
"""

from __future__ import annotations

import enum
import struct
import uuid
from dataclasses import dataclass, field, replace

import numpy as np

from .chaincore import Chain, EventKind, LedgerEvent, OffchainStore, keccak256
from .errors import (
    BadSignature,
    DuplicateMessage,
    SelfAddressed,
    SenderMismatch,
    StaleMessage,
    UnknownSender,
    UnknownTask,
)
from .identity import KeyPair, Registry, address_hex, parse_address, recover_address, sign_message

FRESHNESS_WINDOW = 300


class MessageType(str, enum.Enum):
    TaskAssignment = "TaskAssignment"
    StatusUpdate = "StatusUpdate"
    ResultReport = "ResultReport"
    Feedback = "Feedback"


class Status(str, enum.Enum):
    InProgress = "InProgress"
    Completed = "Completed"
    Failed = "Failed"


class Priority(str, enum.Enum):
    High = "High"
    Low = "Low"


DEFAULT_PRIORITY = {
    MessageType.TaskAssignment: Priority.High,
    MessageType.ResultReport: Priority.High,
    MessageType.StatusUpdate: Priority.Low,
    MessageType.Feedback: Priority.Low,
}

_TYPES = list(MessageType)
_STATUSES = list(Status)


@dataclass(frozen=True)
class Message:
    message_id: str
    sender: bytes
    receiver: bytes
    timestamp: int
    message_type: MessageType
    task_id: str | None = None
    capability_tags: tuple[str, ...] | None = None
    status: Status | None = None
    description: str = ""
    data: str = ""
    signature: bytes = b""

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")

    @classmethod
    def create(cls, keypair: KeyPair, receiver: bytes, message_type: MessageType,
               timestamp: int, rng: np.random.Generator, **fields) -> "Message":
        """Build and sign a message with a fresh id drawn from ``rng``."""
        mid = str(uuid.UUID(bytes=rng.bytes(16), version=4))
        msg = cls(mid, keypair.address, receiver, timestamp, MessageType(message_type), **fields)
        return msg.signed(keypair)

    def signing_bytes(self) -> bytes:
        return _encode_fields(self)

    def signed(self, keypair: KeyPair) -> "Message":
        return replace(self, signature=sign_message(keypair.private_key, self.signing_bytes()))

    def encode(self) -> bytes:
        return _encode_fields(self) + struct.pack(">B", len(self.signature)) + self.signature

    @classmethod
    def decode(cls, raw: bytes) -> "Message":
        r = _Reader(raw)
        mid = r.text(2)
        sender, receiver = r.take(20), r.take(20)
        ts = r.unpack(">Q")
        mtype = _TYPES[r.unpack(">B")]
        task_id = r.text(2) if r.unpack(">B") else None
        tags = None
        if r.unpack(">B"):
            tags = tuple(r.text(1) for _ in range(r.unpack(">B")))
        code = r.unpack(">B")
        status = _STATUSES[code - 1] if code else None
        description = r.text(4)
        data = r.text(4)
        signature = r.take(r.unpack(">B"))
        if r.pos != len(raw):
            raise ValueError("trailing bytes after message")
        return cls(mid, sender, receiver, ts, mtype, task_id, tags, status, description, data, signature)

    def digest(self) -> bytes:
        return keccak256(self.encode())

    def to_json(self) -> dict:
        return {
            "message_id": self.message_id,
            "sender": address_hex(self.sender),
            "receiver": address_hex(self.receiver),
            "timestamp": self.timestamp,
            "message_type": self.message_type.value,
            "task_id": self.task_id,
            "capability_tags": list(self.capability_tags) if self.capability_tags is not None else None,
            "status": self.status.value if self.status else None,
            "message_body": {"description": self.description, "data": self.data},
            "signature": "0x" + self.signature.hex(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Message":
        tags = d.get("capability_tags")
        return cls(
            message_id=d["message_id"],
            sender=parse_address(d["sender"]),
            receiver=parse_address(d["receiver"]),
            timestamp=int(d["timestamp"]),
            message_type=MessageType(d["message_type"]),
            task_id=d.get("task_id"),
            capability_tags=tuple(tags) if tags is not None else None,
            status=Status(d["status"]) if d.get("status") else None,
            description=d["message_body"]["description"],
            data=d["message_body"]["data"],
            signature=bytes.fromhex(d["signature"].removeprefix("0x")),
        )


def _str(s: str, width: int) -> bytes:
    raw = s.encode()
    return struct.pack({1: ">B", 2: ">H", 4: ">I"}[width], len(raw)) + raw


def _encode_fields(m: Message) -> bytes:
    out = [_str(m.message_id, 2), m.sender, m.receiver, struct.pack(">QB", m.timestamp, _TYPES.index(m.message_type))]
    if m.task_id is None:
        out.append(b"\x00")
    else:
        out += [b"\x01", _str(m.task_id, 2)]
    if m.capability_tags is None:
        out.append(b"\x00")
    else:
        out += [b"\x01", struct.pack(">B", len(m.capability_tags))]
        out += [_str(t, 1) for t in m.capability_tags]
    out.append(struct.pack(">B", _STATUSES.index(m.status) + 1 if m.status else 0))
    out += [_str(m.description, 4), _str(m.data, 4)]
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ValueError("truncated message")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def text(self, width: int) -> str:
        n = self.unpack({1: ">B", 2: ">H", 4: ">I"}[width])
        return self.take(n).decode()


class MessageLog:
    """On-ledger message log with freshness and exactly-once checks."""

    def __init__(self, registry: Registry, chain: Chain, store: OffchainStore | None = None,
                 window: int = FRESHNESS_WINDOW, allow_self_notes: bool = False):
        self.registry = registry
        self.allow_self_notes = allow_self_notes
        self.chain = chain
        self.store = store if store is not None else OffchainStore()
        self.window = window
        self.seen: set[str] = set()

    def verify_message(self, msg: Message, now: int) -> bytes:
        """Return the authenticated sender address or raise the failure reason."""
        if abs(now - msg.timestamp) > self.window:
            raise StaleMessage(f"{msg.message_id} is {now - msg.timestamp}s old")
        recovered = recover_address(msg.signing_bytes(), msg.signature)
        if recovered is None:
            raise BadSignature(msg.message_id)
        if recovered != msg.sender:
            # a valid signature by a registered key other than the claimed sender
            if self.registry.is_registered(recovered):
                raise SenderMismatch(f"signed by {address_hex(recovered)}, claims {address_hex(msg.sender)}")
            raise BadSignature(msg.message_id)
        if not self.registry.is_registered(msg.sender):
            raise UnknownSender(address_hex(msg.sender))
        return recovered

    def send_message(self, msg: Message, now: int, priority: Priority | None = None,
                     round: int = 0) -> LedgerEvent:
        if abs(now - msg.timestamp) > self.window:
            raise StaleMessage(f"{msg.message_id} is {now - msg.timestamp}s old")
        if not self.registry.is_registered(msg.sender):
            raise UnknownSender(address_hex(msg.sender))
        if recover_address(msg.signing_bytes(), msg.signature) != msg.sender:
            raise BadSignature(msg.message_id)
        if msg.message_id in self.seen:
            raise DuplicateMessage(msg.message_id)
        if msg.sender == msg.receiver and not self.allow_self_notes:
            raise SelfAddressed(msg.message_id)

        priority = priority or DEFAULT_PRIORITY[msg.message_type]
        body = msg.encode()
        payload = {
            "message_id": msg.message_id,
            "sender": address_hex(msg.sender),
            "receiver": address_hex(msg.receiver),
            "message_type": msg.message_type.value,
            "priority": priority.value,
        }
        if priority is Priority.High:
            payload["body"] = body.hex()
        else:
            payload["digest"] = self.store.put(body).hex()
        self.seen.add(msg.message_id)
        return self.chain.emit(EventKind.MessageSent, payload, round, msg.sender)


class Outcome(str, enum.Enum):
    Accepted = "Accepted"
    Updated = "Updated"
    Recorded = "Recorded"
    Acknowledged = "Acknowledged"
    DuplicateIgnored = "DuplicateIgnored"


@dataclass
class HandlerOutcome:
    outcome: Outcome
    status: Status | None
    feedback: Message | None = None


@dataclass
class Dispatcher:
    """Receiver-side task logic keyed by ``message_type``.

    ``board`` maps task ids to their current status; ``None`` means open.
    With a ``keypair`` the dispatcher answers status updates with a signed
    Feedback message.
    """

    board: dict[str, Status | None] = field(default_factory=dict)
    keypair: KeyPair | None = None
    rng: np.random.Generator | None = None
    results: dict[str, Message] = field(default_factory=dict)

    def open_task(self, task_id: str) -> None:
        self.board.setdefault(task_id, None)

    def dispatch(self, msg: Message, now: int | None = None) -> HandlerOutcome:
        if msg.task_id is not None and msg.task_id not in self.board:
            raise UnknownTask(msg.task_id)
        current = self.board.get(msg.task_id) if msg.task_id is not None else None

        if msg.message_type is MessageType.TaskAssignment:
            if current is not None:
                return HandlerOutcome(Outcome.DuplicateIgnored, current)
            self.board[msg.task_id] = Status.InProgress
            return HandlerOutcome(Outcome.Accepted, Status.InProgress)

        if msg.message_type is MessageType.ResultReport:
            if current in (Status.Completed, Status.Failed):
                return HandlerOutcome(Outcome.DuplicateIgnored, current)
            status = msg.status or Status.Completed
            self.board[msg.task_id] = status
            self.results[msg.task_id] = msg
            return HandlerOutcome(Outcome.Recorded, status)

        if msg.message_type is MessageType.StatusUpdate:
            status = msg.status or current
            if msg.task_id is not None and current not in (Status.Completed, Status.Failed):
                self.board[msg.task_id] = status
            return HandlerOutcome(Outcome.Updated, self.board.get(msg.task_id), self._feedback(msg, now))

        return HandlerOutcome(Outcome.Acknowledged, current)

    def _feedback(self, msg: Message, now: int | None) -> Message | None:
        if self.keypair is None or self.rng is None:
            return None
        return Message.create(
            self.keypair, msg.sender, MessageType.Feedback, now or msg.timestamp, self.rng,
            task_id=msg.task_id, status=self.board.get(msg.task_id),
            description=f"ack {msg.message_id}",
        )
