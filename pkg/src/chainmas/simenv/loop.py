"""
The round loop.

Each round issues a batch of tasks on the ledger, collects rational bids,
assigns winners, simulates execution, applies the reputation and
capability updates, releases load, and seals exactly one block holding
every event the round produced.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..allocation import Task, TaskStatus, assign, collect_bids, decompose, parent_status
from ..capability import cap_match, tag_names
from ..chaincore import Chain, EventKind, OffchainStore
from ..errors import MessageRejected
from ..identity import KeyPair, Registry, address_hex, sign_message
from ..incentive import (
    AgentProfile,
    entropy,
    performance_score,
    simulate_outcome,
    update_capabilities,
    update_reputation,
)
from ..messaging import Dispatcher, Message, MessageLog, MessageType, Status
from .config import RunConfig
from .corpus import TaskSource, generate_corpus
from .metrics import RoundMetrics, expert_histogram, metrics_to_csv, summary_json
from .population import init_population

log = logging.getLogger(__name__)

_STREAMS = ("keys", "corpus", "population", "outcomes", "confirmation", "faults", "policy", "messages", "auth")


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per subsystem, all derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def confirmation_time_sim(rng: np.random.Generator, low: float = 1.5, high: float = 3.2) -> float:
    """Modelled (not measured) block confirmation latency in seconds."""
    return float(rng.uniform(low, high))


@dataclass
class SimState:
    cfg: RunConfig
    streams: dict[str, np.random.Generator]
    chain: Chain
    registry: Registry
    store: OffchainStore
    messages: MessageLog
    dispatcher: Dispatcher
    issuer: KeyPair
    agents: list[AgentProfile]
    source: TaskSource
    tasks: dict[str, Task] = field(default_factory=dict)
    retry_queue: list[Task] = field(default_factory=list)
    units: list[Task] = field(default_factory=list)
    metrics: list[RoundMetrics] = field(default_factory=list)
    initial_entropy: float = 0.0
    round_failed_tx: int = 0

    @property
    def by_address(self) -> dict[bytes, AgentProfile]:
        return {a.address: a for a in self.agents}

    def timestamp(self, round: int) -> int:
        return self.cfg.genesis_timestamp + round * self.cfg.round_tick

    def status_counts(self) -> dict[TaskStatus, int]:
        counts = {s: 0 for s in TaskStatus}
        for u in self.units:
            counts[u.status] += 1
        return counts


def build_state(cfg: RunConfig) -> SimState:
    streams = make_streams(cfg.seed)
    chain = Chain(cfg.genesis_timestamp, cfg.gas_schedule)
    registry = Registry(chain, initial_load=None)
    store = OffchainStore()

    corpus_rng = np.random.default_rng(cfg.corpus.seed) if cfg.corpus.seed is not None else streams["corpus"]
    pop_rng = np.random.default_rng(cfg.population.seed) if cfg.population.seed is not None else streams["population"]
    templates = generate_corpus(cfg.corpus, corpus_rng)
    agents = init_population(cfg.population, pop_rng, streams["keys"], registry)
    issuer = KeyPair.generate(streams["keys"])

    for a in agents:
        challenge = registry.issue_challenge(a.address, 0, streams["auth"])
        if not registry.respond(a.address, sign_message(a.keypair.private_key, challenge)):
            raise RuntimeError(f"agent {a.agent_id} failed bootstrap authentication")

    messages = MessageLog(registry, chain, store, cfg.freshness_window)
    state = SimState(
        cfg=cfg,
        streams=streams,
        chain=chain,
        registry=registry,
        store=store,
        messages=messages,
        dispatcher=Dispatcher(),
        issuer=issuer,
        agents=agents,
        source=TaskSource(templates, cfg.recycle_corpus),
    )
    state.initial_entropy = float(np.mean([entropy(a.w) for a in agents]))
    # registrations stay pending and land in the first round's block
    return state


def _send(state: SimState, agent: AgentProfile, mtype: MessageType, task: Task,
          status: Status, now: int, round: int, description: str) -> None:
    """Sign, submit and deliver one agent-to-issuer message."""
    rng = state.streams["messages"]
    faults = state.streams["faults"]
    msg = Message.create(agent.keypair, state.issuer.address, mtype, now, rng,
                         task_id=task.task_id, capability_tags=tuple(tag_names(task.tags)),
                         status=status, description=description)
    if faults.random() < state.cfg.message_fault_rate:
        # delivered outside the freshness window; the contract rejects it and the agent resends
        try:
            state.messages.send_message(msg, now + state.cfg.freshness_window + 1, round=round)
        except MessageRejected:
            state.round_failed_tx += 1
        msg = Message.create(agent.keypair, state.issuer.address, mtype, now, rng,
                             task_id=task.task_id, capability_tags=tuple(tag_names(task.tags)),
                             status=status, description=description)
    state.messages.send_message(msg, now, round=round)
    state.messages.verify_message(msg, now)
    state.dispatcher.dispatch(msg, now)


def run_round(state: SimState, round: int) -> RoundMetrics:
    cfg, chain = state.cfg, state.chain
    now = state.timestamp(round)
    state.round_failed_tx = 0

    fresh = state.source.draw(cfg.batch_size, round)
    queue = list(state.retry_queue)
    state.retry_queue = []
    for task in fresh:
        state.tasks[task.task_id] = task
        chain.emit(EventKind.TaskBatchEmitted, {**task.describe(), "batch_round": round}, round)
        for unit in decompose(task, cfg.policy):
            if unit is not task:
                state.tasks[unit.task_id] = unit
            state.units.append(unit)
            queue.append(unit)
    for unit in queue:
        state.dispatcher.open_task(unit.task_id)

    by_addr = state.by_address
    offered = placed = retries = 0
    assigned: list[tuple[Task, AgentProfile, float, float]] = []
    delays = []
    for unit in queue:
        bids = collect_bids(unit, state.agents, cfg.policy, cfg.incentive, chain, round)
        offered += len(state.agents)
        placed += len(bids)
        valid = [b for b in bids if b.verify()]
        state.round_failed_tx += len(bids) - len(valid)
        winner = assign(unit, valid, by_addr, cfg.policy, round, chain, state.streams["policy"])
        if winner is None:
            if unit.status is TaskStatus.Pending:
                state.retry_queue.append(unit)
                retries += 1
            continue
        bid_utility = next(b.utility for b in valid if b.address == winner.address)
        assigned.append((unit, winner, bid_utility, cap_match(unit.required, winner.w)))
        delays.append(round - unit.issue_round)
        chain.emit(EventKind.ActionLogged, {
            "task_id": unit.task_id, "agent": address_hex(winner.address), "action": "accept", "round": round,
        }, round, winner.address)
        if cfg.messaging:
            _send(state, winner, MessageType.StatusUpdate, unit, Status.InProgress, now, round, "accepted")

    peak_loads = np.array([a.load for a in state.agents], dtype=float)

    qualities, successes = [], []
    for unit, agent, _, _ in assigned:
        outcome = simulate_outcome(agent, unit, cfg.incentive, state.streams["outcomes"])
        score = performance_score(outcome.quality, outcome.delay, cfg.incentive)
        lam, mu = cfg.incentive.lambda_rep, cfg.incentive.mu

        old_rho = agent.rho
        agent.rho = update_reputation(old_rho, score, lam)
        chain.emit(EventKind.ReputationUpdated, {
            "agent": address_hex(agent.address), "task_id": unit.task_id,
            "score": score, "lambda": lam, "old": old_rho, "new": agent.rho,
        }, round, agent.address)

        tags = sorted(outcome.tag_scores)
        agent.w = update_capabilities(agent.w, tags, outcome.tag_scores, mu)
        chain.emit(EventKind.CapabilityUpdated, {
            "agent": address_hex(agent.address), "task_id": unit.task_id,
            "tags": [int(k) for k in tags], "scores": [outcome.tag_scores[k] for k in tags],
            "mu": mu, "w": agent.w.tolist(),
        }, round, agent.address)

        record = state.registry.get(agent.address)
        record.reputation = agent.rho
        record.capability_tags = agent.declared_tags

        unit.status = TaskStatus.Completed if outcome.success else TaskStatus.Failed
        chain.emit(EventKind.ActionLogged, {
            "task_id": unit.task_id, "agent": address_hex(agent.address), "action": "result", "round": round,
        }, round, agent.address)
        chain.emit(EventKind.TaskCompleted, {
            "task_id": unit.task_id, "agent": address_hex(agent.address), "success": outcome.success,
            "quality": outcome.quality, "delay": outcome.delay, "p_success": outcome.p_success,
        }, round, agent.address)
        if cfg.messaging:
            _send(state, agent, MessageType.ResultReport, unit,
                  Status.Completed if outcome.success else Status.Failed, now, round, "result")
        qualities.append(outcome.quality)
        successes.append(outcome.success)

    for _, agent, _, _ in assigned:
        agent.load -= 1

    for task in {state.tasks[u.parent_id] for u, *_ in assigned if u.parent_id}:
        task.status = parent_status(state.tasks[c] for c in task.children)

    n_exec = len(successes)
    success_rate = sum(successes) / n_exec if n_exec else float("nan")
    entropies = [entropy(a.w) for a in state.agents]
    metrics = RoundMetrics(
        round=round,
        success_rate=success_rate,
        failure_rate=1.0 - success_rate if n_exec else float("nan"),
        mean_quality=float(np.mean(qualities)) if qualities else float("nan"),
        quality_std=float(np.std(qualities)) if qualities else float("nan"),
        mean_agent_utility=float(np.mean([u for _, _, u, _ in assigned])) if assigned else float("nan"),
        mean_cap_match=float(np.mean([c for *_, c in assigned])) if assigned else float("nan"),
        alloc_delay_mean=float(np.mean(delays)) if delays else float("nan"),
        retry_count=retries,
        mean_load=float(peak_loads.mean()),
        load_std=float(peak_loads.std()),
        bid_rate=placed / offered if offered else float("nan"),
        mean_entropy=float(np.mean(entropies)),
        tag_dominance=expert_histogram(state.agents),
        failed_tx_count=state.round_failed_tx,
        confirmation_time_sim=confirmation_time_sim(state.streams["confirmation"], *cfg.confirmation_range),
        tasks_attempted=n_exec,
        assignments=len(assigned),
    )
    block = chain.seal(now)
    metrics.events_emitted = len(block.events)
    metrics.gas_total = block.gas_used
    state.metrics.append(metrics)
    return metrics


@dataclass
class SimulationResult:
    config: RunConfig
    metrics: list[RoundMetrics]
    chain: Chain
    state: SimState

    def events_jsonl(self) -> str:
        lines = []
        for block in self.chain.blocks:
            for j, e in enumerate(block.events):
                lines.append(json.dumps({
                    "block": block.index,
                    "index": j,
                    "round": e.round,
                    "kind": e.kind.value,
                    "emitter": "0x" + e.emitter.hex(),
                    "gas": e.gas_charged,
                    "payload": e.data(),
                }, sort_keys=True, separators=(",", ":")))
        return "".join(line + "\n" for line in lines)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "metrics": out / "metrics.csv",
            "events": out / "events.jsonl",
            "chain": out / "chain.jsonl",
            "summary": out / "summary.json",
        }
        paths["metrics"].write_text(metrics_to_csv(self.metrics), encoding="utf-8")
        paths["events"].write_text(self.events_jsonl(), encoding="utf-8")
        paths["chain"].write_text(self.chain.to_jsonl(), encoding="utf-8")
        paths["summary"].write_text(summary_json(self.metrics), encoding="utf-8")
        return paths


def run_simulation(cfg: RunConfig | None = None) -> SimulationResult:
    cfg = cfg or RunConfig()
    state = build_state(cfg)
    for r in range(1, cfg.rounds + 1):
        m = run_round(state, r)
        log.debug("round %d: success %.3f bid rate %.3f", r, m.success_rate, m.bid_rate)
    if state.chain.pending:
        state.chain.seal(state.timestamp(cfg.rounds))
    if not state.chain.verify_chain():
        raise RuntimeError("ledger failed verification at end of run")
    return SimulationResult(cfg, state.metrics, state.chain, state)
