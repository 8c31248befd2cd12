"""
Acceptance criteria 1-11.

Each test records a one-line PASS/FAIL verdict (printed in the terminal
summary) before asserting, so a failing criterion still reports what it
measured.
"""

import math
import time

import numpy as np
import pytest
from ecdsa import SECP256k1, VerifyingKey
from ecdsa.util import sigdecode_string

from chainmas.allocation import Task, softmax
from chainmas.capability import tag_vector
from chainmas.chaincore import (
    FUNCTION_GAS,
    Chain,
    EventKind,
    LedgerEvent,
    find_violation,
    gas_schedule,
    merkle_prove,
    merkle_root,
    merkle_verify,
    keccak256,
    tamper,
)
from chainmas.errors import StaleMessage
from chainmas.identity import KeyPair, RegistrationRecord, Registry, eth_signed_digest, recover_address, sign_message
from chainmas.incentive import (
    AgentProfile,
    IncentiveParams,
    cost,
    performance_score,
    simulate_outcome,
    success_probability,
    update_capabilities,
    update_reputation,
    utility,
)
from chainmas.messaging import Message, MessageLog, MessageType
from chainmas.simenv import RunConfig, linear_slope, read_events_jsonl, replay, run_simulation
from chainmas.simenv.metrics import metrics_to_csv

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


# -- 1. ledger integrity ---------------------------------------------------------

BLOCK_FIELDS = ("index", "prev_hash", "timestamp", "merkle_root", "nonce", "block_hash", "gas_used")
EVENT_FIELDS = ("payload", "kind", "round", "gas", "emitter", "order")


def _flip(b: bytes, rng) -> bytes:
    raw = bytearray(b)
    raw[int(rng.integers(len(raw)))] ^= 1 << int(rng.integers(8))
    return bytes(raw)


def _mutate(blocks, rng):
    """Change one field of one non-genesis block, or of one event inside it."""
    i = int(rng.integers(1, len(blocks)))
    b = blocks[i]
    choices = BLOCK_FIELDS + (EVENT_FIELDS if b.events else ())
    field = choices[int(rng.integers(len(choices)))]
    if field == "order" and len(b.events) < 2:
        field = "payload"
    if field in BLOCK_FIELDS:
        old = getattr(b, field)
        new = _flip(old, rng) if isinstance(old, bytes) else old ^ (1 << int(rng.integers(0, 20)))
        return i, field, tamper(b, **{field: new})
    evs = list(b.events)
    j = int(rng.integers(len(evs)))
    e = evs[j]
    if field == "order":
        k = (j + 1 + int(rng.integers(len(evs) - 1))) % len(evs)
        evs[j], evs[k] = evs[k], evs[j]
    else:
        kinds = list(EventKind)
        other_kind = kinds[(kinds.index(e.kind) + 1 + int(rng.integers(len(kinds) - 1))) % len(kinds)]
        evs[j] = LedgerEvent(
            other_kind if field == "kind" else e.kind,
            _flip(e.payload, rng) if field == "payload" else e.payload,
            e.round ^ 1 if field == "round" else e.round,
            e.gas_charged + 1 if field == "gas" else e.gas_charged,
            _flip(e.emitter, rng) if field == "emitter" else e.emitter,
        )
    return i, field, tamper(b, events=tuple(evs))


def test_criterion_1_ledger_integrity(verdict):
    rng = np.random.default_rng(101)
    schedule = gas_schedule()
    kinds = list(EventKind)
    accepted = detected = 0
    start = time.perf_counter()
    trials = 1000
    for t in range(trials):
        chain = Chain(genesis_timestamp=int(rng.integers(0, 10**9)))
        for r in range(int(rng.integers(1, 6))):
            for k in range(int(rng.integers(0, 6))):
                chain.emit(kinds[int(rng.integers(len(kinds)))], {"t": t, "r": r, "k": k,
                           "v": float(rng.random())}, r, rng.bytes(20))
            chain.seal(chain.tip.timestamp + int(rng.integers(0, 100)))
        blocks = list(chain.blocks)
        accepted += chain.verify_chain() and find_violation(blocks, schedule) is None
        i, field, bad = _mutate(blocks, rng)
        blocks[i] = bad
        detected += find_violation(blocks, schedule) is not None
    elapsed = time.perf_counter() - start
    ok = accepted == trials and detected == trials and elapsed < 10
    verdict(1, ok, f"{accepted}/{trials} clean chains accepted, {detected}/{trials} mutations detected, {elapsed:.1f} s")
    assert ok


# -- 2. Merkle oracle -------------------------------------------------------------

def _oracle_levels(leaves):
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        if len(cur) % 2:
            cur.append(cur[-1])
        levels.append([keccak256(cur[k] + cur[k + 1]) for k in range(0, len(cur), 2)])
    return levels


def test_criterion_2_merkle_oracle(verdict):
    checked = mismatches = 0
    for n in range(1, 17):
        leaves = [keccak256(b"leaf" + bytes([n, i])) for i in range(n)]
        levels = _oracle_levels(leaves)
        root = levels[-1][0]
        mismatches += merkle_root(leaves) != root
        for i in range(n):
            idx, path = i, []
            for level in levels[:-1]:
                sib = idx ^ 1
                path.append((level[sib], sib < idx))
                idx //= 2
            proof = merkle_prove(leaves, i)
            checked += 1
            mismatches += proof != path or not merkle_verify(leaves[i], proof, root)
    ok = mismatches == 0
    verdict(2, ok, f"{checked} (leaf count, index) cases, {mismatches} disagreements with oracle")
    assert ok


# -- 3. signatures ----------------------------------------------------------------

def test_criterion_3_crypto_roundtrip(verdict):
    rng = np.random.default_rng(303)
    kps = [KeyPair.generate(rng) for _ in range(100)]
    recovered = rejected_msg = rejected_sig = cross = 0
    for kp in kps:
        msg = rng.bytes(32)
        sig = sign_message(kp.private_key, msg)
        recovered += recover_address(msg, sig) == kp.address
        rejected_msg += recover_address(_flip(msg, rng), sig) != kp.address
        rejected_sig += recover_address(msg, _flip(sig[:64], rng) + sig[64:]) != kp.address
        vk = VerifyingKey.from_string(kp.public_key, curve=SECP256k1)
        cross += vk.verify_digest(sig[:64], eth_signed_digest(msg), sigdecode=sigdecode_string)
    distinct = len({kp.address for kp in kps})
    ok = recovered == rejected_msg == rejected_sig == cross == distinct == 100
    verdict(3, ok, f"recover {recovered}/100, mutated message rejected {rejected_msg}/100, "
                   f"mutated signature rejected {rejected_sig}/100, independent ECDSA agrees {cross}/100")
    assert ok


# -- 4. freshness -----------------------------------------------------------------

def test_criterion_4_freshness(verdict):
    rng = np.random.default_rng(404)
    a, b = KeyPair.generate(rng), KeyPair.generate(rng)
    reg = Registry()
    for name, kp in (("a", a), ("b", b)):
        reg.register_agent(RegistrationRecord(name, kp.address, kp.public_key))
    log = MessageLog(reg, Chain())
    now = 2_000_000_000
    results = {}
    for age in (0, 1, 150, 299, 300, 301, 302, 1000, -300, -301):
        m = Message.create(a, b.address, MessageType.StatusUpdate, now - age, rng, task_id="T")
        try:
            log.verify_message(m, now)
            results[age] = True
        except StaleMessage:
            results[age] = False
    expected = {age: abs(age) <= 300 for age in results}
    ok = results == expected
    verdict(4, ok, "accepted ages " + str(sorted(k for k, v in results.items() if v))
            + ", rejected " + str(sorted(k for k, v in results.items() if not v)))
    assert ok


# -- 5. softmax -------------------------------------------------------------------

def test_criterion_5_softmax(verdict):
    rng = np.random.default_rng(505)
    worst_sum = worst_shift = 0.0
    argmax_ok = 0
    n = 10_000
    for _ in range(n):
        s = rng.normal(0, float(rng.uniform(0.1, 20)), size=int(rng.integers(1, 25)))
        p = softmax(s)
        worst_sum = max(worst_sum, abs(p.sum() - 1))
        worst_shift = max(worst_shift, float(np.max(np.abs(p - softmax(s + rng.uniform(-1e3, 1e3))))))
        argmax_ok += int(np.argmax(p)) == int(np.argmax(s))
    two = softmax([1.0, 0.0])
    closed = abs(two[0] - 0.7311) <= 1e-4 and abs(two[1] - 0.2689) <= 1e-4
    ok = worst_sum <= 1e-9 and worst_shift <= 1e-9 and argmax_ok == n and closed
    verdict(5, ok, f"max |sum-1| {worst_sum:.1e}, max shift change {worst_shift:.1e}, "
                   f"argmax agrees {argmax_ok}/{n}, (1,0) -> ({two[0]:.4f}, {two[1]:.4f})")
    assert ok


# -- 6. incentive arithmetic ------------------------------------------------------

def test_criterion_6_incentive_math(verdict):
    params = IncentiveParams(beta=0.5, gamma=0.5)
    w = np.zeros(10)
    w[0] = 1.0
    agent = AgentProfile(b"\x01" * 20, w, load=2)
    task = Task("T", 10.0, tag_vector([0, 1]))
    got = {
        "cost": (cost(agent, task, params), 1.5),
        "utility": (utility(agent, task, 0.6, params), 4.5),
        "S": (performance_score(0.9, 0.2, IncentiveParams(alpha=0.7, delta=0.3)), 0.87),
        "rho'": (update_reputation(0.5, 1.0, 0.8), 0.6),
        "w'": (float(update_capabilities(np.full(10, 0.5), [3], {3: 1.0}, 0.8)[3]), 0.6),
    }
    examples_ok = all(abs(v - e) <= 1e-12 for v, e in got.values())

    rng = np.random.default_rng(606)
    worst_contraction = 0.0
    for _ in range(1000):
        lam = float(rng.uniform(0, 0.999))
        x, y, s = rng.random(3)
        if abs(x - y) > 1e-6:
            ratio = abs(update_reputation(x, s, lam) - update_reputation(y, s, lam)) / abs(x - y)
            worst_contraction = max(worst_contraction, abs(ratio - lam))

    d = IncentiveParams()
    rho, wv, bounded = 0.5, rng.random(10), True
    for _ in range(10_000):
        tags = rng.choice(10, size=int(rng.integers(1, 5)), replace=False)
        rho = update_reputation(rho, performance_score(rng.random(), rng.random(), d), d.lambda_rep)
        wv = update_capabilities(wv, tags, {int(k): float(rng.random()) for k in tags}, d.mu)
        bounded &= 0 <= rho <= 1 and wv.min() >= 0 and wv.max() <= 1

    ok = examples_ok and worst_contraction <= 1e-9 and bounded
    shown = ", ".join(f"{k} {v:.12g}" for k, (v, _) in got.items())
    verdict(6, ok, f"{shown}; contraction error {worst_contraction:.1e}; 10^4-step fuzz bounded={bounded}")
    assert ok


# -- 7. outcome statistics --------------------------------------------------------

def test_criterion_7_outcome_statistics(verdict):
    rng = np.random.default_rng(707)
    params = IncentiveParams()
    trials, worst_z, within = 100_000, 0.0, 0
    for _ in range(20):
        agent = AgentProfile(b"\x02" * 20, rng.random(10), load=int(rng.integers(0, 4)))
        task = Task("T", 5.0, tag_vector(rng.choice(10, size=int(rng.integers(2, 5)), replace=False)))
        p = success_probability(agent, task, params)
        hits = sum(simulate_outcome(agent, task, params, rng).success for _ in range(trials))
        se = math.sqrt(p * (1 - p) / trials)
        z = abs(hits / trials - p) / se if se > 0 else (0.0 if hits / trials == p else math.inf)
        worst_z = max(worst_z, z)
        within += z <= 3
    ok = within == 20
    verdict(7, ok, f"{within}/20 pairs within 3 SE over {trials} trials each, worst |z| {worst_z:.2f}")
    assert ok


# -- 8. gas accounting ------------------------------------------------------------

def test_criterion_8_gas_accounting(verdict):
    chain = run_simulation(RunConfig(seed=DEFAULT_SEEDS[0])).chain
    report = chain.gas_by_function()
    off = {fn: r["avg_gas"] for fn, r in report.items() if r["calls"] and r["avg_gas"] != FUNCTION_GAS[fn]}
    reg_calls = report["registerAgent"]["calls"]
    submit_calls = report["submitTask"]["calls"]
    ok = not off and reg_calls == 20 and submit_calls == 250
    verdict(8, ok, f"{len(report)} functions, averages off table: {off or 'none'}; "
                   f"registerAgent calls {reg_calls}, submitTask calls {submit_calls}")
    assert ok


# -- 9. trend bands ---------------------------------------------------------------

@pytest.fixture(scope="module")
def default_runs():
    runs, times = [], []
    for seed in DEFAULT_SEEDS:
        start = time.perf_counter()
        runs.append(run_simulation(RunConfig(seed=seed)))
        times.append(time.perf_counter() - start)
    return runs, times


def test_criterion_9_trend_bands(default_runs, verdict):
    runs, times = default_runs
    traj = lambda name: np.nanmean([[getattr(m, name) for m in r.metrics] for r in runs], axis=0)
    success, quality = traj("success_rate"), traj("mean_quality")
    bids, util, ent = traj("bid_rate"), traj("mean_agent_utility"), traj("mean_entropy")
    ent0 = float(np.mean([r.state.initial_entropy for r in runs]))

    slope = linear_slope(success)
    mean_success = float(np.nanmean(success))
    mean_quality = float(np.nanmean(quality))
    bid_drop = float(bids[0] - bids[-1])
    du = float(np.nanmean(util[-10:]) - np.nanmean(util[:10]))
    ent_dev = float(np.max(np.abs(ent - ent0)))
    checks = {
        "slope>0": slope > 0,
        "success band": 0.70 <= mean_success <= 0.97,
        "quality band": 0.70 <= mean_quality <= 0.92,
        "bid drop": bid_drop >= 0.15,
        "utility rises": du > 0,
        "entropy stable": ent_dev <= 0.25,
        "runtime": max(times) < 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(9, ok, f"seeds {DEFAULT_SEEDS}: slope {slope:.4f}, success {mean_success:.3f}, quality {mean_quality:.3f}, "
                   f"bid rate {bids[0]:.3f}->{bids[-1]:.3f}, utility {np.nanmean(util[:10]):.2f}->"
                   f"{np.nanmean(util[-10:]):.2f}, entropy drift {ent_dev:.3f} bits, slowest run {max(times):.1f} s"
                   + (f"; failed: {failed}" if failed else ""))
    assert ok


# -- 10. audit replay -------------------------------------------------------------

def test_criterion_10_audit_replay(default_runs, tmp_path, verdict):
    run = default_runs[0][0]
    run.write(tmp_path)
    rebuilt = replay(read_events_jsonl(tmp_path / "events.jsonl"))
    worst = 0.0
    for a in run.state.agents:
        r = rebuilt["0x" + a.address.hex()]
        worst = max(worst, abs(r["rho"] - a.rho), float(np.max(np.abs(r["w"] - a.w))))
    ok = len(rebuilt) == len(run.state.agents) and worst <= 1e-12
    verdict(10, ok, f"{len(rebuilt)} agents rebuilt from events.jsonl, max deviation {worst:.1e}")
    assert ok


# -- 11. determinism --------------------------------------------------------------

def test_criterion_11_determinism(tmp_path, verdict):
    a = run_simulation(RunConfig(seed=42))
    b = run_simulation(RunConfig(seed=42))
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    same_csv = pa["metrics"].read_bytes() == pb["metrics"].read_bytes()
    same_tip = a.chain.tip.block_hash == b.chain.tip.block_hash
    ok = same_csv and same_tip and metrics_to_csv(a.metrics) == pa["metrics"].read_text()
    verdict(11, ok, f"metrics.csv identical={same_csv}, tip hash identical={same_tip} ({a.chain.tip.block_hash.hex()[:16]}...)")
    assert ok
