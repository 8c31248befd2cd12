"""Agent population: Beta-distributed skills, keys, and registration."""

from __future__ import annotations

import numpy as np

from ..capability import N_TAGS
from ..identity import KeyPair, RegistrationRecord, Registry, Role
from ..incentive import AgentProfile
from .config import PopulationConfig


def sample_capabilities(cfg: PopulationConfig, rng: np.random.Generator) -> np.ndarray:
    """Beta(a, b) draws, min-max normalised within each agent's row."""
    raw = rng.beta(cfg.beta_a, cfg.beta_b, size=(cfg.n_agents, N_TAGS))
    lo = raw.min(axis=1, keepdims=True)
    hi = raw.max(axis=1, keepdims=True)
    return (raw - lo) / (hi - lo)


def init_population(cfg: PopulationConfig, rng: np.random.Generator | None = None,
                    key_rng: np.random.Generator | None = None,
                    registry: Registry | None = None) -> list[AgentProfile]:
    """Build ``cfg.n_agents`` agents and register each one when a registry is given."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if key_rng is None:
        key_rng = rng
    weights = sample_capabilities(cfg, rng)
    loads = rng.choice(np.asarray(cfg.initial_load_choices), size=cfg.n_agents)
    agents = []
    for i in range(cfg.n_agents):
        keys = KeyPair.generate(key_rng)
        agent = AgentProfile(
            address=keys.address,
            w=weights[i],
            rho=cfg.initial_rho,
            load=int(loads[i]),
            theta=cfg.theta,
            agent_id=f"A{i + 1:02d}",
            keypair=keys,
        )
        if registry is not None:
            record = RegistrationRecord(
                agent_id=agent.agent_id,
                address=keys.address,
                public_key=keys.public_key,
                role=Role.Executor,
                capability_tags=agent.declared_tags,
                reputation=agent.rho,
                load=agent.load,
            )
            registry.register_agent(record, round=0, extra={"w": agent.w.tolist(), "theta": cfg.theta})
        agents.append(agent)
    return agents
