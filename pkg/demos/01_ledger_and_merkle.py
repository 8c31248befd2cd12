"""Walk through the simulated ledger: events, blocks, Merkle proofs, tampering."""

from chainmas.chaincore import (
    Chain,
    EventKind,
    OffchainStore,
    find_violation,
    merkle_prove,
    merkle_verify,
    offchain_verify,
    tamper,
)

# A chain starts with a genesis block whose parent hash is all zeros.
chain = Chain(genesis_timestamp=1_750_000_000)
print("genesis", chain.tip.block_hash.hex())

# Events are buffered until a block is sealed. Each one is charged the
# configured gas for its kind.
chain.emit(EventKind.AgentRegistered, {"agent_id": "A01", "tags": ["Tag3", "Tag9"]}, round=0)
chain.emit(EventKind.TaskBatchEmitted, {"task_id": "T0001", "reward": 7.5}, round=1)
chain.emit(EventKind.TaskAssigned, {"task_id": "T0001", "agent": "A01"}, round=1)
for e in chain.pending:
    print(f"  {e.kind.value:18s} gas {e.gas_charged:>7,}")

block = chain.seal(1_750_000_060)
print("block 1 holds", len(block.events), "events, gas", f"{block.gas_used:,}")
print("merkle root", block.merkle_root.hex())

# A light client only needs a leaf and its sibling path to check inclusion.
leaves = [e.leaf() for e in block.events]
proof = merkle_prove(leaves, 2)
print("proof length for event 2:", len(proof))
print("inclusion verified:", merkle_verify(leaves[2], proof, block.merkle_root))

# Rewriting history breaks the chain at the edited block.
for r in range(2, 6):
    chain.emit(EventKind.ActionLogged, {"round": r}, round=r)
    chain.seal(1_750_000_000 + 60 * r)
blocks = list(chain.blocks)
print("untouched chain:", find_violation(blocks) or "sound")
blocks[3] = tamper(blocks[3], timestamp=blocks[3].timestamp + 1)
print("after editing block 3:", find_violation(blocks))

# Large payloads live off-chain; only their digest is anchored.
store = OffchainStore()
report = b"detailed execution trace ..." * 20
digest = store.put(report)
print("off-chain digest", digest.hex()[:16], "...")
print("blob matches digest:", offchain_verify(digest, store.get(digest)))
print("edited blob matches:", offchain_verify(digest, report + b"!"))

# Gas totals by contract function, as in a deployment cost table.
for fn, row in chain.gas_by_function().items():
    if row["calls"]:
        print(f"  {fn:16s} calls {row['calls']:>3}  avg gas {row['avg_gas']:>9,.0f}")
