"""Register two agents, authenticate them and exchange signed messages."""

import numpy as np

from chainmas.chaincore import Chain
from chainmas.errors import BadSignature, StaleMessage
from chainmas.identity import KeyPair, RegistrationRecord, Registry, recover_address, sign_message
from chainmas.messaging import Dispatcher, Message, MessageLog, MessageType, Status

rng = np.random.default_rng(7)
alice, bob = KeyPair.generate(rng), KeyPair.generate(rng)
print("alice", alice.address_hex)
print("bob  ", bob.address_hex)

# Registration checks that the public key really hashes to the address.
chain = Chain()
registry = Registry(chain)
registry.register_agent(RegistrationRecord("alice", alice.address, alice.public_key, capability_tags=frozenset({2, 8})))
registry.register_agent(RegistrationRecord("bob", bob.address, bob.public_key, capability_tags=frozenset({0, 4})))
print("registered:", len(registry), "agents")

# Signatures are recoverable: the verifier learns the signer's address.
sig = sign_message(alice.private_key, b"hello")
print("recovered signer is alice:", recover_address(b"hello", sig) == alice.address)

# Challenge-response: a fresh challenge per round, usable once.
challenge = registry.issue_challenge(alice.address, 1, rng)
answer = sign_message(alice.private_key, challenge)
print("challenge", challenge.decode())
print("first response accepted:", registry.respond(alice.address, answer))
print("replayed response accepted:", registry.respond(alice.address, answer))

# Capability claims are checked against the registered tag set.
print("alice covers {Tag3, Tag9}:", registry.verify_capabilities(alice.address, [2, 8]))
print("alice covers {Tag3, Tag9, Tag10}:", registry.verify_capabilities(alice.address, [2, 8, 9]))

# Messages carry a signature over their binary encoding and a timestamp.
now = 1_750_000_000
log = MessageLog(registry, chain)
msg = Message.create(alice, bob.address, MessageType.StatusUpdate, now, rng,
                     task_id="T0001", status=Status.InProgress, description="halfway there")
event = log.send_message(msg, now + 120)
print("logged as", event.kind.value, "with priority", event.data()["priority"])

# Low-priority bodies stay off-chain; the event only holds their digest.
print("body kept off-chain:", "body" not in event.data())

# Anything older than five minutes is refused.
old = Message.create(alice, bob.address, MessageType.StatusUpdate, now - 301, rng, task_id="T0001")
try:
    log.send_message(old, now)
except StaleMessage as exc:
    print("stale message refused:", exc)

# Editing a signed field invalidates the signature.
forged = Message(msg.message_id, msg.sender, msg.receiver, msg.timestamp, msg.message_type,
                 msg.task_id, msg.capability_tags, Status.Completed, msg.description, msg.data, msg.signature)
try:
    log.verify_message(forged, now)
except BadSignature as exc:
    print("forged status refused:", exc)

# The receiver routes messages by type and answers status updates.
desk = Dispatcher(keypair=bob, rng=rng)
desk.open_task("T0001")
out = desk.dispatch(msg, now)
print("dispatch outcome", out.outcome.value, "-> task is", desk.board["T0001"].value)
print("feedback verifies as bob:", log.verify_message(out.feedback, now) == bob.address)
