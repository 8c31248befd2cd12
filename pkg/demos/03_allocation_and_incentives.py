"""One task, five agents: scores, bids, a winner, and the feedback it earns."""

import numpy as np

from chainmas.allocation import PolicyWeights, Task, assign, assignment_distribution, collect_bids, decompose, score
from chainmas.capability import tag_names, tag_vector
from chainmas.incentive import (
    AgentProfile,
    IncentiveParams,
    cost,
    entropy,
    performance_score,
    simulate_outcome,
    update_capabilities,
    update_reputation,
)

rng = np.random.default_rng(3)
params = IncentiveParams()
weights = PolicyWeights()

agents = []
for i in range(5):
    raw = rng.beta(2, 5, size=10)
    w = (raw - raw.min()) / (raw.max() - raw.min())
    agents.append(AgentProfile(bytes([i + 1]) * 20, w, rho=0.5, load=int(rng.integers(0, 3)), agent_id=f"A{i + 1}"))

task = Task("T0001", reward=8.0, required=tag_vector(["Tag2", "Tag5", "Tag7"]))
print("task needs", tag_names(task.tags), "reward", task.reward)

# Score mixes skill fit, reputation and current load; softmax turns it into pi.
pi = assignment_distribution(task, agents, weights)
print(f"{'agent':6s}{'load':>5s}{'score':>8s}{'pi':>7s}{'cost':>7s}{'E[U]':>7s}")
for a, p in zip(agents, pi):
    c = cost(a, task, params)
    print(f"{a.agent_id:6s}{a.load:5d}{score(task, a, weights):8.3f}{p:7.3f}{c:7.3f}{p * task.reward - c:7.3f}")

# Only agents expecting a positive return bid.
bids = collect_bids(task, agents, weights, params)
print("bidders:", [a.agent_id for a in agents if any(b.address == a.address for b in bids)])

by_addr = {a.address: a for a in agents}
winner = assign(task, bids, by_addr, weights, round=1, rng=rng)
print("winner", winner.agent_id, "status", task.status.value)

# Execution is simulated; its quality and delay feed reputation and skills.
outcome = simulate_outcome(winner, task, params, rng)
s = performance_score(outcome.quality, outcome.delay, params)
print(f"success={outcome.success} quality={outcome.quality:.3f} delay={outcome.delay:.3f} score={s:.3f}")
before = winner.w.copy()
winner.rho = update_reputation(winner.rho, s, params.lambda_rep)
winner.w = update_capabilities(winner.w, sorted(outcome.tag_scores), outcome.tag_scores, params.mu)
print(f"reputation 0.500 -> {winner.rho:.3f}")
for k in sorted(task.tags):
    print(f"  Tag{k + 1}: {before[k]:.3f} -> {winner.w[k]:.3f}")
print(f"entropy {entropy(before):.3f} -> {entropy(winner.w):.3f} bits")

# Repeated success compounds: an agent that keeps delivering pulls ahead.
rho = 0.5
for step in range(1, 11):
    rho = update_reputation(rho, 0.9, params.lambda_rep)
print(f"after 10 strong results reputation is {rho:.3f}")

# Wide tasks can be split into single-tag pieces below a complexity threshold.
wide = Task("T0002", 9.0, tag_vector([0, 3, 6, 8]))
for part in decompose(wide, PolicyWeights(theta_c=3)):
    print("  subtask", part.task_id, tag_names(part.tags), "reward", part.reward)
