"""
Task allocation: capability-aware scoring, the softmax assignment policy,
utility-rational bidding, winner selection with retries, and decomposition
of complex tasks into single-tag subtasks.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capability import N_TAGS, cap_match, tag_names, tag_set, tag_vector
from .chaincore import Chain, EventKind
from .errors import EmptyEligibleSet
from .identity import address_hex, recover_address, sign_message
from .incentive import AgentProfile, IncentiveParams, utility

__all__ = [
    "Bid", "PolicyWeights", "Task", "TaskStatus", "assign", "assignment_distribution",
    "cap_match", "collect_bids", "decompose", "parent_status", "score", "softmax",
]


class TaskStatus(str, enum.Enum):
    Pending = "Pending"
    Assigned = "Assigned"
    Completed = "Completed"
    Failed = "Failed"
    Retired = "Retired"


@dataclass(eq=False)
class Task:
    task_id: str
    reward: float
    required: np.ndarray
    deadline: int = 1
    status: TaskStatus = TaskStatus.Pending
    issue_round: int = 0
    assign_round: int | None = None
    retry_count: int = 0
    parent_id: str | None = None
    assignee: bytes | None = None
    children: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.required = np.asarray(self.required, dtype=np.int8)
        if self.required.shape != (N_TAGS,):
            raise ValueError(f"required tag vector must have {N_TAGS} entries")
        if self.reward <= 0:
            raise ValueError("task reward must be positive")

    @property
    def complexity(self) -> int:
        return int(self.required.sum())

    @property
    def tags(self) -> frozenset[int]:
        return tag_set(self.required)

    def describe(self) -> dict:
        return {
            "task_id": self.task_id,
            "reward": self.reward,
            "required_tags": tag_names(self.tags),
            "deadline": self.deadline,
            "parent_id": self.parent_id,
        }


@dataclass(frozen=True)
class PolicyWeights:
    lambda1: float = 1.0   # capability match
    lambda2: float = 14.0  # reputation
    lambda3: float = 0.05  # load penalty
    theta_c: int = 4       # decompose tasks with more required tags than this
    temperature: float = 1.0
    mode: str = "sample"   # or "argmax"
    max_retries: int = 2

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.mode not in ("argmax", "sample"):
            raise ValueError(f"mode must be 'argmax' or 'sample', got {self.mode!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class Bid:
    address: bytes
    task_id: str
    w_hat: tuple[int, ...]
    utility: float
    signature: bytes = b""

    def encode(self) -> bytes:
        tid = self.task_id.encode()
        mask = sum(bit << k for k, bit in enumerate(self.w_hat))
        return self.address + struct.pack(">H", len(tid)) + tid + struct.pack(">Hd", mask, self.utility)

    def signed(self, private_key: bytes) -> "Bid":
        return Bid(self.address, self.task_id, self.w_hat, self.utility,
                   sign_message(private_key, self.encode()))

    def verify(self) -> bool:
        return recover_address(self.encode(), self.signature) == self.address

    def to_payload(self) -> dict:
        return {
            "agent": address_hex(self.address),
            "task_id": self.task_id,
            "w_hat": list(self.w_hat),
            "utility": self.utility,
            "signature": self.signature.hex(),
        }


def score(task: Task, agent: AgentProfile, weights: PolicyWeights) -> float:
    return (weights.lambda1 * cap_match(task.required, agent.w)
            + weights.lambda2 * agent.rho
            - weights.lambda3 * agent.load)


def softmax(scores, temperature: float = 1.0) -> np.ndarray:
    s = np.asarray(scores, dtype=float) / temperature
    if s.size == 0:
        raise EmptyEligibleSet("no eligible agents")
    e = np.exp(s - s.max())
    return e / e.sum()


def assignment_distribution(task: Task, agents: Sequence[AgentProfile],
                            weights: PolicyWeights) -> np.ndarray:
    if not agents:
        raise EmptyEligibleSet(f"no eligible agents for {task.task_id}")
    return softmax([score(task, a, weights) for a in agents], weights.temperature)


def collect_bids(task: Task, agents: Sequence[AgentProfile], weights: PolicyWeights,
                 params: IncentiveParams, chain: Chain | None = None,
                 round: int = 0) -> list[Bid]:
    """Bids from every agent whose expected utility is strictly positive.

    The assignment probability in each agent's utility is taken over the
    whole population passed in, not over the (not yet known) bidder set.
    """
    if not agents:
        return []
    pi = assignment_distribution(task, agents, weights)
    bids = []
    for agent, p in zip(agents, pi):
        u = utility(agent, task, float(p), params)
        if u <= 0:
            continue
        bid = Bid(agent.address, task.task_id, tuple(int(b) for b in agent.binarized), u)
        if agent.keypair is not None:
            bid = bid.signed(agent.keypair.private_key)
        bids.append(bid)
        if chain is not None:
            chain.emit(EventKind.BidSubmitted, bid.to_payload(), round, agent.address)
    return bids


def assign(task: Task, bids: Iterable[Bid], agents: Mapping[bytes, AgentProfile],
           weights: PolicyWeights, round: int = 0, chain: Chain | None = None,
           rng: np.random.Generator | None = None) -> AgentProfile | None:
    """Pick the winner among bidders and update load and task state.

    With no bids the task's retry counter advances; once ``max_retries``
    retries have been spent the task is marked Failed.
    """
    bidders = sorted({b.address for b in bids if b.utility > 0})
    if not bidders:
        if task.retry_count >= weights.max_retries:
            task.status = TaskStatus.Failed
        else:
            task.retry_count += 1
            task.status = TaskStatus.Pending
        return None

    pool = [agents[a] for a in bidders]
    pi = assignment_distribution(task, pool, weights)
    if weights.mode == "sample":
        if rng is None:
            raise ValueError("sampling mode needs an rng")
        idx = int(rng.choice(len(pool), p=pi))
    else:
        idx = int(np.argmax(pi))  # first maximum -> lowest address
    winner = pool[idx]

    winner.load += 1
    task.status = TaskStatus.Assigned
    task.assign_round = round
    task.assignee = winner.address
    if chain is not None:
        chain.emit(EventKind.TaskAssigned, {
            "task_id": task.task_id,
            "agent": address_hex(winner.address),
            "pi": float(pi[idx]),
            "bidders": len(pool),
        }, round, winner.address)
    return winner


def decompose(task: Task, weights: PolicyWeights) -> list[Task]:
    """One single-tag subtask per required tag when the task is too complex."""
    if task.complexity <= weights.theta_c:
        return [task]
    tags = sorted(task.tags)
    children = []
    for k in tags:
        child = Task(
            task_id=f"{task.task_id}.{k + 1}",
            reward=task.reward / len(tags),
            required=tag_vector([k]),
            deadline=task.deadline,
            issue_round=task.issue_round,
            parent_id=task.task_id,
        )
        children.append(child)
    task.children = [c.task_id for c in children]
    return children


def parent_status(children: Iterable[Task]) -> TaskStatus:
    statuses = [c.status for c in children]
    if any(s is TaskStatus.Failed for s in statuses):
        return TaskStatus.Failed
    if statuses and all(s is TaskStatus.Completed for s in statuses):
        return TaskStatus.Completed
    if any(s is TaskStatus.Assigned for s in statuses):
        return TaskStatus.Assigned
    return TaskStatus.Pending
