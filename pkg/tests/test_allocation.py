"""Scoring, the softmax policy, bidding, winner selection and decomposition."""

import itertools
import math

import numpy as np
import pytest

from chainmas.allocation import (
    Bid,
    PolicyWeights,
    Task,
    TaskStatus,
    assign,
    assignment_distribution,
    collect_bids,
    decompose,
    parent_status,
    score,
    softmax,
)
from chainmas.capability import cap_match, tag_vector
from chainmas.chaincore import Chain, EventKind
from chainmas.errors import EmptyEligibleSet
from chainmas.identity import KeyPair
from chainmas.incentive import AgentProfile, IncentiveParams

WORKED_EXAMPLE_WEIGHTS = PolicyWeights(lambda1=1, lambda2=1, lambda3=0.2, theta_c=3, mode="argmax")


def agent(addr_byte, w=None, rho=0.5, load=0, keypair=None):
    w = np.ones(10) if w is None else w
    address = keypair.address if keypair else bytes([addr_byte]) * 20
    return AgentProfile(address, w, rho=rho, load=load, keypair=keypair)


def task(tags=(0, 1), reward=10.0, task_id="T1"):
    return Task(task_id, reward, tag_vector(tags))


def test_cap_match_examples():
    assert cap_match(tag_vector([1, 2]), np.ones(10)) == 1.0
    w = np.zeros(10)
    w[[0, 3, 4]] = 0.8, 0.6, 0.4
    assert cap_match(tag_vector(["Tag1", "Tag4", "Tag5"]), w) == pytest.approx(0.6, abs=1e-15)
    assert cap_match(np.zeros(10), np.zeros(10)) == 1.0


def test_score_hand_arithmetic():
    w = np.zeros(10)
    w[[0, 3, 4]] = 0.8, 0.6, 0.4
    a = agent(1, w, rho=0.5, load=2)
    t = Task("T", 5.0, tag_vector([0, 3, 4]))
    assert score(t, a, WORKED_EXAMPLE_WEIGHTS) == pytest.approx(0.7, abs=1e-12)
    assert score(t, agent(2, np.zeros(10), rho=0.0, load=0), WORKED_EXAMPLE_WEIGHTS) == 0.0


def test_softmax_examples():
    assert np.allclose(softmax([3.0, 3.0]), [0.5, 0.5])
    p = softmax([1.0, 0.0])
    assert p[0] == pytest.approx(math.e / (math.e + 1), abs=1e-15)
    assert p == pytest.approx([0.7311, 0.2689], abs=1e-4)
    assert softmax([42.0]).tolist() == [1.0]
    with pytest.raises(EmptyEligibleSet):
        softmax([])


def test_softmax_properties_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        s = rng.normal(0, 5, size=int(rng.integers(1, 30)))
        p = softmax(s, float(rng.uniform(0.1, 3)))
        assert abs(p.sum() - 1) < 1e-9
        assert np.argmax(p) == np.argmax(s)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(1)
    for _ in range(500):
        s = rng.normal(size=8)
        assert np.allclose(softmax(s), softmax(s + rng.normal(0, 50)), atol=1e-12)


def test_lower_temperature_sharpens():
    s = [1.0, 0.5, 0.0]
    assert softmax(s, 0.1)[0] > softmax(s, 1.0)[0] > softmax(s, 10.0)[0]


def test_distribution_requires_agents():
    with pytest.raises(EmptyEligibleSet):
        assignment_distribution(task(), [], WORKED_EXAMPLE_WEIGHTS)


def test_perfect_agent_bids_and_mismatched_agent_abstains():
    params = IncentiveParams()
    good = agent(1)
    poor = agent(2, np.zeros(10), rho=0.0, load=2)
    t = task(tags=(0, 1, 2, 3), reward=5.0)
    weights = PolicyWeights(lambda2=20)
    bids = collect_bids(t, [good, poor], weights, params)
    assert [b.address for b in bids] == [good.address]
    assert bids[0].utility > 0


def test_bid_utility_matches_definition():
    params = IncentiveParams(beta=0.1, gamma=0.2)
    w = np.zeros(10)
    w[0] = 1.0
    a, b = agent(1, w, load=1), agent(2)
    t = task(tags=(0, 1), reward=8.0)
    pi = assignment_distribution(t, [a, b], WORKED_EXAMPLE_WEIGHTS)
    bids = {x.address: x for x in collect_bids(t, [a, b], WORKED_EXAMPLE_WEIGHTS, params)}
    assert bids[a.address].utility == pytest.approx(pi[0] * 8.0 - (0.1 * 1 + 0.2 * 1), abs=1e-12)
    assert bids[b.address].utility == pytest.approx(pi[1] * 8.0, abs=1e-12)


def test_signed_bids_verify_and_are_logged():
    rng = np.random.default_rng(4)
    kps = [KeyPair.generate(rng) for _ in range(3)]
    agents = [agent(0, keypair=kp) for kp in kps]
    chain = Chain()
    bids = collect_bids(task(), agents, WORKED_EXAMPLE_WEIGHTS, IncentiveParams(), chain, round=3)
    assert len(bids) == 3 and all(b.verify() for b in bids)
    forged = Bid(bids[0].address, "T1", bids[0].w_hat, bids[0].utility + 1, bids[0].signature)
    assert not forged.verify()
    assert [e.kind for e in chain.pending] == [EventKind.BidSubmitted] * 3


def brute_force_winner(t, bidders, weights):
    """Highest score, ties to the lowest address, computed without softmax."""
    return min(bidders, key=lambda a: (-score(t, a, weights), a.address))


def test_argmax_matches_brute_force():
    rng = np.random.default_rng(7)
    for trial in range(300):
        n = int(rng.integers(1, 6))
        pop = [agent(i + 1, rng.random(10), rho=float(rng.random()), load=int(rng.integers(0, 3)))
               for i in range(n)]
        t = task(tags=tuple(rng.choice(10, size=3, replace=False)))
        by_addr = {a.address: a for a in pop}
        subset = [a for a in pop if rng.random() < 0.7] or pop[:1]
        expected = brute_force_winner(t, subset, WORKED_EXAMPLE_WEIGHTS)
        bids = [Bid(a.address, t.task_id, (0,) * 10, 1.0) for a in subset]
        loads = {a.address: a.load for a in pop}
        won = assign(t, bids, by_addr, WORKED_EXAMPLE_WEIGHTS)
        assert won is expected
        assert won.load == loads[won.address] + 1


def test_higher_score_wins_and_tie_goes_to_lower_address():
    hi, lo = agent(9, rho=1.0), agent(3, rho=0.0)
    t = task()
    bids = [Bid(a.address, "T1", (0,) * 10, 1.0) for a in (hi, lo)]
    assert assign(t, bids, {a.address: a for a in (hi, lo)}, WORKED_EXAMPLE_WEIGHTS) is hi

    for _ in range(3):
        a, b = agent(5), agent(2)
        t = task()
        bids = [Bid(x.address, "T1", (0,) * 10, 1.0) for x in (a, b)]
        assert assign(t, bids, {x.address: x for x in (a, b)}, WORKED_EXAMPLE_WEIGHTS) is b


def test_assignment_updates_task_and_emits_event():
    a = agent(1)
    t = task()
    chain = Chain()
    assign(t, [Bid(a.address, "T1", (0,) * 10, 1.0)], {a.address: a}, WORKED_EXAMPLE_WEIGHTS, round=4, chain=chain)
    assert t.status is TaskStatus.Assigned and t.assign_round == 4 and t.assignee == a.address
    (ev,) = chain.pending
    assert ev.kind is EventKind.TaskAssigned and ev.gas_charged == 86_575 + 10_345


def test_no_bids_retries_then_fails():
    t = task()
    weights = PolicyWeights(max_retries=2, mode="argmax")
    for expected_retry in (1, 2):
        assert assign(t, [], {}, weights) is None
        assert t.status is TaskStatus.Pending and t.retry_count == expected_retry
    assert assign(t, [], {}, weights) is None
    assert t.status is TaskStatus.Failed


def test_non_positive_bids_are_ignored():
    a = agent(1)
    t = task()
    assert assign(t, [Bid(a.address, "T1", (0,) * 10, 0.0)], {a.address: a}, WORKED_EXAMPLE_WEIGHTS) is None


def test_sampling_mode_needs_rng_and_follows_pi():
    weights = PolicyWeights(lambda1=0, lambda2=1, lambda3=0, mode="sample")
    pop = [agent(1, rho=1.0), agent(2, rho=0.0)]
    by_addr = {a.address: a for a in pop}
    bids = [Bid(a.address, "T", (0,) * 10, 1.0) for a in pop]
    with pytest.raises(ValueError):
        assign(task(), bids, by_addr, weights)
    rng = np.random.default_rng(0)
    n = 20_000
    wins = sum(assign(task(), bids, by_addr, weights, rng=rng) is pop[0] for _ in range(n))
    p = math.e / (math.e + 1)
    assert abs(wins / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_decompose_four_tags_at_threshold_three():
    t = Task("T9", 8.0, tag_vector([1, 4, 6, 9]))
    parts = decompose(t, PolicyWeights(theta_c=3))
    assert len(parts) == 4
    assert all(p.complexity == 1 and p.reward == 2.0 and p.parent_id == "T9" for p in parts)
    assert sorted(k for p in parts for k in p.tags) == [1, 4, 6, 9]
    assert t.children == [p.task_id for p in parts]


def test_small_task_not_decomposed():
    t = task(tags=(2, 3))
    assert decompose(t, PolicyWeights(theta_c=3)) == [t]
    big = task(tags=(0, 1, 2, 3))
    assert decompose(big, PolicyWeights(theta_c=4)) == [big]


@pytest.mark.parametrize("statuses,expected", [
    (("Completed", "Failed"), "Failed"),
    (("Completed", "Completed"), "Completed"),
    (("Completed", "Assigned"), "Assigned"),
    (("Pending", "Completed"), "Pending"),
])
def test_parent_status(statuses, expected):
    kids = []
    for i, s in enumerate(statuses):
        k = task(task_id=f"c{i}")
        k.status = TaskStatus(s)
        kids.append(k)
    assert parent_status(kids) is TaskStatus(expected)


def test_policy_weight_validation():
    for bad in (dict(lambda1=-1), dict(temperature=0), dict(mode="greedy"), dict(max_retries=-1)):
        with pytest.raises(ValueError):
            PolicyWeights(**bad)


def test_task_validation():
    with pytest.raises(ValueError):
        Task("x", 0.0, tag_vector([1]))
    with pytest.raises(ValueError):
        Task("x", 1.0, [1, 0, 1])


def test_exhaustive_small_tie_cases_are_deterministic():
    for order in itertools.permutations([7, 3, 5]):
        pop = [agent(b) for b in order]
        bids = [Bid(a.address, "T1", (0,) * 10, 1.0) for a in pop]
        won = assign(task(), bids, {a.address: a for a in pop}, WORKED_EXAMPLE_WEIGHTS)
        assert won.address == bytes([3]) * 20
