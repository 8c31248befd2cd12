"""Synthetic corpus, agent population, round loop, metrics and audit replay."""

from .audit import audit_mismatches, read_events_jsonl, replay
from .config import CorpusConfig, PopulationConfig, RunConfig, load_config, parse_config
from .corpus import TaskSource, generate_corpus
from .loop import (
    SimState,
    SimulationResult,
    build_state,
    confirmation_time_sim,
    make_streams,
    run_round,
    run_simulation,
)
from .metrics import (
    RoundMetrics,
    dominant_tag,
    expert_histogram,
    format_table,
    linear_slope,
    read_metrics_csv,
    summarize,
)
from .population import init_population
