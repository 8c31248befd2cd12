"""
Incentive model: execution cost and expected utility, the performance
score, reputation and per-tag capability smoothing, and the stochastic
execution simulator that produces the outcomes feeding those updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .capability import N_TAGS, binarize, cap_match, tag_set
from .errors import AllZeroVector

if TYPE_CHECKING:
    from .allocation import Task
    from .identity import KeyPair


@dataclass(frozen=True)
class IncentiveParams:
    beta: float = 0.02      # load cost
    gamma: float = 0.09     # per missing tag cost
    alpha: float = 0.7      # quality weight
    delta: float = 0.3      # timeliness weight
    lambda_rep: float = 0.85
    mu: float = 0.75
    eta: float = 1.0
    zeta: float = 0.02

    def __post_init__(self):
        for name in ("beta", "gamma", "alpha", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if abs(self.alpha + self.delta - 1.0) > 1e-12:
            raise ValueError(f"alpha + delta must equal 1, got {self.alpha} + {self.delta}")
        if not 0.0 <= self.lambda_rep < 1.0:
            raise ValueError("lambda_rep must lie in [0, 1)")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError("mu must lie in [0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")


@dataclass(eq=False)
class AgentProfile:
    """Mutable agent state evolved by the incentive loop."""

    address: bytes
    w: np.ndarray
    rho: float = 0.5
    load: int = 0
    theta: float = 0.4
    agent_id: str = ""
    keypair: "KeyPair | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (N_TAGS,):
            raise ValueError(f"capability vector must have {N_TAGS} entries")

    @property
    def binarized(self) -> np.ndarray:
        return binarize(self.w, self.theta)

    @property
    def declared_tags(self) -> frozenset[int]:
        return tag_set(self.binarized)


@dataclass(frozen=True)
class ExecutionOutcome:
    success: bool
    quality: float
    delay: float
    tag_scores: Mapping[int, float]
    p_success: float


def mismatch(required, w_hat) -> int:
    """Number of required tags missing from the declared-skill bit vector.

    Declared tags the task does not ask for cost nothing.
    """
    r = np.asarray(required, dtype=int)
    return int((r * (1 - np.asarray(w_hat, dtype=int))).sum())


def cost(agent: AgentProfile, task: "Task", params: IncentiveParams) -> float:
    return params.beta * agent.load + params.gamma * mismatch(task.required, agent.binarized)


def utility(agent: AgentProfile, task: "Task", pi: float, params: IncentiveParams) -> float:
    return pi * task.reward - cost(agent, task, params)


def success_probability(agent: AgentProfile, task: "Task", params: IncentiveParams) -> float:
    p = params.eta * cap_match(task.required, agent.binarized) * (1.0 - params.zeta * agent.load)
    return min(1.0, max(0.0, p))


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def simulate_outcome(agent: AgentProfile, task: "Task", params: IncentiveParams,
                     rng: np.random.Generator) -> ExecutionOutcome:
    """Draw success, quality and delay for ``agent`` executing ``task``.

    Consumes exactly three uniforms from ``rng`` per call.
    """
    p = success_probability(agent, task, params)
    u_success, u_quality, u_delay = rng.random(3)
    success = bool(u_success < p)
    match = cap_match(task.required, agent.w)
    if success:
        q = _clamp(0.6 + 0.4 * match + (u_quality - 0.5) * 0.1)
    else:
        q = 0.3 * match
    d = _clamp(params.zeta * agent.load + 0.2 * u_delay)
    scores = {k: q for k in sorted(tag_set(task.required))}
    return ExecutionOutcome(success, q, d, scores, p)


def performance_score(q: float, d: float, params: IncentiveParams) -> float:
    return params.alpha * q + params.delta * (1.0 - d)


def update_reputation(rho: float, score: float, lambda_rep: float) -> float:
    return lambda_rep * rho + (1.0 - lambda_rep) * score


def update_capabilities(w, task_tags: Iterable[int], tag_scores: Mapping[int, float],
                        mu: float) -> np.ndarray:
    """Smooth the weights of the task's tags toward their scores; others stay put."""
    w_new = np.array(w, dtype=float)
    for k in task_tags:
        w_new[k] = mu * w_new[k] + (1.0 - mu) * tag_scores[k]
    return w_new


def entropy(w) -> float:
    """Shannon entropy in bits of ``w`` normalised to a distribution."""
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if total <= 0:
        raise AllZeroVector("entropy of an all-zero capability vector")
    p = w[w > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0

