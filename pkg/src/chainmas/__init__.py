"""Deterministic simulator for ledger-coordinated multi-agent task allocation."""

from .allocation import PolicyWeights, Task, TaskStatus
from .chaincore import Chain, EventKind, LedgerEvent
from .identity import KeyPair, Registry
from .incentive import AgentProfile, IncentiveParams
from .simenv import RunConfig, run_simulation

__version__ = "0.1.0"
