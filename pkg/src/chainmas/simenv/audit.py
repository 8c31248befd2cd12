"""Rebuild agent reputation and capability state from an exported event log."""

from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np

from ..incentive import update_capabilities, update_reputation


def read_events_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay(events: Iterable[Mapping]) -> dict[str, dict]:
    """Agent address -> ``{"rho": float, "w": ndarray}`` after applying every update.

    Uses only registration payloads and the scores and smoothing factors
    carried by ReputationUpdated / CapabilityUpdated events.
    """
    agents: dict[str, dict] = {}
    for e in events:
        kind, p = e["kind"], e["payload"]
        if kind == "AgentRegistered":
            agents[p["address"]] = {"rho": p["reputation"], "w": np.array(p["w"], dtype=float)}
        elif kind == "ReputationUpdated":
            a = agents[p["agent"]]
            a["rho"] = update_reputation(a["rho"], p["score"], p["lambda"])
        elif kind == "CapabilityUpdated":
            a = agents[p["agent"]]
            scores = dict(zip(p["tags"], p["scores"]))
            a["w"] = update_capabilities(a["w"], p["tags"], scores, p["mu"])
    return agents


def audit_mismatches(events: Iterable[Mapping]) -> list[str]:
    """Events whose recorded post-update value disagrees with the replay."""
    problems = []
    agents: dict[str, dict] = {}
    for i, e in enumerate(events):
        kind, p = e["kind"], e["payload"]
        if kind == "AgentRegistered":
            agents[p["address"]] = {"rho": p["reputation"], "w": np.array(p["w"], dtype=float)}
        elif kind == "ReputationUpdated":
            a = agents[p["agent"]]
            if a["rho"] != p["old"]:
                problems.append(f"event {i}: reputation before update differs from replay")
            a["rho"] = update_reputation(a["rho"], p["score"], p["lambda"])
            if a["rho"] != p["new"]:
                problems.append(f"event {i}: reputation after update differs from replay")
        elif kind == "CapabilityUpdated":
            a = agents[p["agent"]]
            a["w"] = update_capabilities(a["w"], p["tags"], dict(zip(p["tags"], p["scores"])), p["mu"])
            if a["w"].tolist() != p["w"]:
                problems.append(f"event {i}: capability vector differs from replay")
    return problems
