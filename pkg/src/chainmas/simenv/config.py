"""
Run configuration and its YAML file format.

A run file holds optional sections ``corpus``, ``population``,
``incentive``, ``policy`` and ``gas`` plus top-level simulation keys::

    seed: 42
    rounds: 50
    batch_size: 5
    corpus:     {n_tasks: 100, tags_per_task: [2, 4], reward_range: [5, 10], deadline_range: [1, 3]}
    population: {n_agents: 20, beta_a: 2, beta_b: 5, theta: 0.4, initial_rho: 0.5,
                 initial_load_choices: [0, 1, 2]}
    incentive:  {beta: 0.02, gamma: 0.09, alpha: 0.7, delta: 0.3, lambda_rep: 0.85,
                 mu: 0.75, eta: 1.0, zeta: 0.02}
    policy:     {lambda1: 1.0, lambda2: 14.0, lambda3: 0.05, theta_c: 4, temperature: 1.0,
                 mode: sample, max_retries: 2}
    gas:        {AgentRegistered: 28860, ...}

Every key is optional; omitted keys take the defaults shown.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..allocation import PolicyWeights
from ..capability import N_TAGS
from ..chaincore import EventKind, gas_schedule
from ..errors import ConfigError
from ..incentive import IncentiveParams


@dataclass(frozen=True)
class CorpusConfig:
    n_tasks: int = 100
    tags_per_task: tuple[int, int] = (2, 4)
    reward_range: tuple[float, float] = (5.0, 10.0)
    deadline_range: tuple[int, int] = (1, 3)
    seed: int | None = None

    def __post_init__(self):
        if self.n_tasks <= 0:
            raise ValueError("n_tasks must be positive")
        for name in ("tags_per_task", "reward_range", "deadline_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.tags_per_task[0] < 1 or self.tags_per_task[1] > N_TAGS:
            raise ValueError("tags_per_task must lie within 1..10")
        if self.reward_range[0] <= 0:
            raise ValueError("reward_range must be positive")
        if self.deadline_range[0] < 1:
            raise ValueError("deadline_range must start at one round or later")


@dataclass(frozen=True)
class PopulationConfig:
    n_agents: int = 20
    beta_a: float = 2.0
    beta_b: float = 5.0
    theta: float = 0.4
    initial_rho: float = 0.5
    initial_load_choices: tuple[int, ...] = (0, 1, 2)
    seed: int | None = None

    def __post_init__(self):
        if self.n_agents <= 0:
            raise ValueError("n_agents must be positive")
        if self.beta_a <= 0 or self.beta_b <= 0:
            raise ValueError("beta_a and beta_b must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not 0.0 <= self.initial_rho <= 1.0:
            raise ValueError("initial_rho must lie in [0, 1]")
        if not self.initial_load_choices or min(self.initial_load_choices) < 0:
            raise ValueError("initial_load_choices must be non-empty and non-negative")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    rounds: int = 50
    batch_size: int = 5
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    population: PopulationConfig = field(default_factory=PopulationConfig)
    incentive: IncentiveParams = field(default_factory=IncentiveParams)
    policy: PolicyWeights = field(default_factory=PolicyWeights)
    gas: dict[str, int] = field(default_factory=dict)
    recycle_corpus: bool = True
    messaging: bool = True
    message_fault_rate: float = 0.05
    freshness_window: int = 300
    genesis_timestamp: int = 1_750_000_000
    round_tick: int = 60
    confirmation_range: tuple[float, float] = (1.5, 3.2)

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.message_fault_rate <= 1.0:
            raise ValueError("message_fault_rate must lie in [0, 1]")
        if self.round_tick <= 0:
            raise ValueError("round_tick must be positive")
        gas_schedule(self.gas)

    @property
    def gas_schedule(self) -> dict[EventKind, int]:
        return gas_schedule(self.gas)

    def with_(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        def plain(v):
            if dataclasses.is_dataclass(v):
                return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, tuple):
                return list(v)
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v
        return plain(self)


_SECTIONS = {
    "corpus": CorpusConfig,
    "population": PopulationConfig,
    "incentive": IncentiveParams,
    "policy": PolicyWeights,
}


def _line_index(node, prefix=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (key.value,)
            out[path] = key.start_mark.line + 1
            _line_index(value, path, out)
    return out


def _coerce(cls, name: str, value: Any) -> Any:
    default = next(f for f in dataclasses.fields(cls) if f.name == name).default
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    return value


def _build(cls, data: Any, section: str, lines: dict, source: str):
    where = lines.get((section,), 0) if section else 0
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:{where}: section '{section}' must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = (section, key) if section else (key,)
        field_name = ".".join(path)
        line = lines.get(path, where)
        if key not in known:
            raise ConfigError(f"{source}:{line}: unknown field '{field_name}'")
        if not section and key in _SECTIONS:
            continue
        if not section and key == "gas":
            if not isinstance(value, dict):
                raise ConfigError(f"{source}:{line}: field 'gas' must be a mapping")
            try:
                gas_schedule(value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: field 'gas': {exc}") from None
            kwargs[key] = dict(value)
            continue
        try:
            kwargs[key] = _coerce(cls, key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{line}: field '{field_name}': {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        # validation messages lead with the offending field's name
        culprit = next((k for k in kwargs if str(exc).startswith(k)), None)
        if culprit is None:
            raise ConfigError(f"{source}:{where}: {section or 'config'}: {exc}") from None
        path = (section, culprit) if section else (culprit,)
        raise ConfigError(f"{source}:{lines.get(path, where)}: field '{'.'.join(path)}': {exc}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}:{line}: {getattr(exc, 'problem', None) or exc}") from None
    if data is None:
        data = {}
    lines = _line_index(root) if root is not None else {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    sections = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            sections[name] = _build(cls, data[name], name, lines, source)
    base = _build(RunConfig, data, "", lines, source)
    return dataclasses.replace(base, **sections)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
