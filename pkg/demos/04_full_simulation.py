"""Fifty rounds with twenty agents, then the summary table and an audit replay."""

import tempfile
from pathlib import Path

import numpy as np

from chainmas.capability import TAGS
from chainmas.simenv import RunConfig, format_table, linear_slope, read_events_jsonl, replay, run_simulation

cfg = RunConfig(seed=1)
result = run_simulation(cfg)
m = result.metrics
print(f"{len(m)} rounds, {len(result.chain)} blocks, tip {result.chain.tip.block_hash.hex()[:16]}...")

# Per-round trajectories, sampled every ten rounds.
print(f"{'round':>5s}{'success':>9s}{'quality':>9s}{'bid rate':>10s}{'utility':>9s}{'entropy':>9s}")
for r in m[::10] + [m[-1]]:
    print(f"{r.round:5d}{r.success_rate:9.3f}{r.mean_quality:9.3f}{r.bid_rate:10.3f}"
          f"{r.mean_agent_utility:9.3f}{r.mean_entropy:9.3f}")

success = [r.success_rate for r in m]
print("success slope per round:", round(linear_slope(success), 5))
print("bid rate first/last:", m[0].bid_rate, m[-1].bid_rate)

# Who became the expert in what.
print("dominant tags at the end:")
for tag, count in zip(TAGS, m[-1].tag_dominance):
    print(f"  {tag:6s} {'#' * count}")

# Reputation spread: a few agents win most of the work.
rho = np.array(sorted((a.rho for a in result.state.agents), reverse=True))
print("top five reputations:", np.round(rho[:5], 3), "bottom five:", np.round(rho[-5:], 3))

# Write the artifacts, then rebuild agent state from the event log alone.
out = Path(tempfile.mkdtemp(prefix="chainmas-"))
paths = result.write(out)
rebuilt = replay(read_events_jsonl(paths["events"]))
worst = max(max(abs(rebuilt["0x" + a.address.hex()]["rho"] - a.rho),
                float(np.abs(rebuilt["0x" + a.address.hex()]["w"] - a.w).max()))
            for a in result.state.agents)
print("artifacts in", out)
print("replay deviation:", worst)

print()
print(format_table(m))
