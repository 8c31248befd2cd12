"""
Agent identities on secp256k1, the on-ledger registry, and
challenge-response authentication.

Signatures follow Ethereum's personal-sign convention so that a recovered
address can be compared against the registry exactly as ``ecrecover`` would.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import coincurve
import numpy as np

from .chaincore import (
    ADDRESS_SIZE,
    DEFAULT_GAS,
    Chain,
    EventKind,
    LedgerEvent,
    canonical_payload,
    keccak256,
)
from .capability import N_TAGS, tag_names
from .errors import (
    DuplicateAddress,
    DuplicateAgentId,
    EmptyField,
    MalformedKey,
    RegistrationError,
    UnknownAgent,
)

SECP256K1_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
SIGNATURE_SIZE = 65
ETH_PREFIX = b"\x19Ethereum Signed Message:\n32"


def address_hex(address: bytes) -> str:
    return "0x" + address.hex()


def parse_address(text: str) -> bytes:
    raw = bytes.fromhex(text.removeprefix("0x"))
    if len(raw) != ADDRESS_SIZE:
        raise ValueError(f"address must be {ADDRESS_SIZE} bytes")
    return raw


def address_of(public_key: bytes) -> bytes:
    """Last 20 bytes of Keccak-256 over the 64-byte uncompressed point."""
    point = coincurve.PublicKey(public_key).format(compressed=False)
    return keccak256(point[1:])[-ADDRESS_SIZE:]


def eth_signed_digest(message: bytes) -> bytes:
    return keccak256(ETH_PREFIX + keccak256(message))


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes = field(repr=False)
    public_key: bytes
    address: bytes

    @classmethod
    def from_private(cls, private_key: bytes) -> "KeyPair":
        sk = coincurve.PrivateKey(private_key)
        pub = sk.public_key.format(compressed=True)
        return cls(private_key, pub, address_of(pub))

    @classmethod
    def generate(cls, rng: np.random.Generator) -> "KeyPair":
        while True:
            secret = rng.bytes(32)
            if 0 < int.from_bytes(secret, "big") < SECP256K1_N:
                return cls.from_private(secret)

    @property
    def address_hex(self) -> str:
        return address_hex(self.address)


def sign_message(private_key: bytes, message: bytes) -> bytes:
    """65-byte ``r || s || v`` signature over the personal-sign digest.

    libsecp256k1 emits low-s signatures; ``v`` is 27 or 28.
    """
    sig = coincurve.PrivateKey(private_key).sign_recoverable(eth_signed_digest(message), hasher=None)
    return sig[:64] + bytes([sig[64] + 27])


def recover_address(message: bytes, signature: bytes) -> bytes | None:
    """Signer address, or None when the signature is malformed."""
    if len(signature) != SIGNATURE_SIZE or signature[64] not in (27, 28):
        return None
    s = int.from_bytes(signature[32:64], "big")
    if s > SECP256K1_N // 2:
        return None
    raw = signature[:64] + bytes([signature[64] - 27])
    try:
        pub = coincurve.PublicKey.from_signature_and_message(raw, eth_signed_digest(message), hasher=None)
    except Exception:
        return None
    return keccak256(pub.format(compressed=False)[1:])[-ADDRESS_SIZE:]


def make_challenge(round: int, nonce: bytes) -> bytes:
    return f"Authenticate me:{round}:{nonce.hex()}".encode()


class Role(str, enum.Enum):
    Executor = "Executor"
    Issuer = "Issuer"


@dataclass
class RegistrationRecord:
    agent_id: str
    address: bytes
    public_key: bytes
    role: Role = Role.Executor
    capability_tags: frozenset[int] = frozenset()
    reputation: float = 0.5
    load: int = 0
    is_registered: bool = False

    def to_payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "address": address_hex(self.address),
            "public_key": self.public_key.hex(),
            "role": self.role.value,
            "capability_tags": tag_names(self.capability_tags),
            "reputation": self.reputation,
            "load": self.load,
        }


class Registry:
    """The ``agents`` mapping plus the authentication entry points."""

    def __init__(self, chain: Chain | None = None, initial_load: int | None = 0):
        self.chain = chain
        # None keeps whatever load the record carries
        self.initial_load = initial_load
        self.agents: dict[bytes, RegistrationRecord] = {}
        self._ids: set[str] = set()
        self._challenges: dict[bytes, bytes] = {}

    def __len__(self) -> int:
        return len(self.agents)

    def __contains__(self, address: bytes) -> bool:
        return address in self.agents

    def get(self, address: bytes) -> RegistrationRecord:
        try:
            return self.agents[address]
        except KeyError:
            raise UnknownAgent(address_hex(address)) from None

    def is_registered(self, address: bytes) -> bool:
        rec = self.agents.get(address)
        return rec is not None and rec.is_registered

    def register_agent(self, record: RegistrationRecord, round: int = 0,
                       extra: dict | None = None) -> LedgerEvent:
        """Validate and store ``record``; emits AgentRegistered.

        ``extra`` is merged into the event payload (the simulator records the
        full continuous capability vector there for audit replay).
        """
        if not record.agent_id:
            raise EmptyField("agent_id")
        if not record.public_key:
            raise EmptyField("public_key")
        if len(record.address) != ADDRESS_SIZE:
            raise EmptyField("address")
        if record.address in self.agents:
            raise DuplicateAddress(address_hex(record.address))
        if record.agent_id in self._ids:
            raise DuplicateAgentId(record.agent_id)
        if len(record.public_key) != 33 or record.public_key[0] not in (2, 3):
            raise MalformedKey("public key must be a 33-byte compressed point")
        try:
            derived = address_of(record.public_key)
        except ValueError:
            raise MalformedKey("public key is not on secp256k1") from None
        if derived != record.address:
            raise MalformedKey("address does not derive from public key")
        if not set(record.capability_tags) <= set(range(N_TAGS)):
            raise RegistrationError("capability_tags outside the taxonomy")
        if not 0.0 <= record.reputation <= 1.0:
            raise ValueError(f"reputation {record.reputation} outside [0, 1]")

        if self.initial_load is not None:
            record.load = self.initial_load
        record.is_registered = True
        self.agents[record.address] = record
        self._ids.add(record.agent_id)

        payload = record.to_payload()
        if extra:
            payload.update(extra)
        if self.chain is not None:
            return self.chain.emit(EventKind.AgentRegistered, payload, round, record.address)
        return LedgerEvent(EventKind.AgentRegistered, canonical_payload(payload), round,
                           DEFAULT_GAS[EventKind.AgentRegistered], record.address)

    def authenticate(self, address: bytes, message: bytes, signature: bytes) -> bool:
        recovered = recover_address(message, signature)
        return recovered == address and self.is_registered(address)

    def issue_challenge(self, address: bytes, round: int, rng: np.random.Generator) -> bytes:
        """Fresh one-shot challenge for ``address``."""
        challenge = make_challenge(round, rng.bytes(8))
        self._challenges[address] = challenge
        return challenge

    def respond(self, address: bytes, signature: bytes) -> bool:
        """Redeem the outstanding challenge; each challenge works once."""
        challenge = self._challenges.pop(address, None)
        return challenge is not None and self.authenticate(address, challenge, signature)

    def verify_capabilities(self, address: bytes, required_tags: Iterable[int]) -> bool:
        return set(required_tags) <= set(self.get(address).capability_tags)
