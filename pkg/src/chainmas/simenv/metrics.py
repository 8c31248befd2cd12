"""Per-round metrics, their CSV/JSON exports, and the summary table."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..capability import N_TAGS, TAGS


def dominant_tag(w) -> int:
    """Index of the strongest tag; ties go to the lowest index."""
    return int(np.argmax(np.asarray(w, dtype=float)))


def expert_histogram(agents) -> list[int]:
    counts = [0] * N_TAGS
    for a in agents:
        counts[dominant_tag(a.w)] += 1
    return counts


@dataclass
class RoundMetrics:
    round: int
    success_rate: float
    failure_rate: float
    mean_quality: float
    quality_std: float
    mean_agent_utility: float
    mean_cap_match: float
    alloc_delay_mean: float
    retry_count: int
    mean_load: float
    load_std: float
    bid_rate: float
    mean_entropy: float
    tag_dominance: list[int] = field(default_factory=lambda: [0] * N_TAGS)
    events_emitted: int = 0
    gas_total: int = 0
    failed_tx_count: int = 0
    confirmation_time_sim: float = 0.0
    tasks_attempted: int = 0
    assignments: int = 0

    def row(self) -> list:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out.extend(v if f.name == "tag_dominance" else [v])
        return out


def csv_columns() -> list[str]:
    cols = []
    for f in dataclasses.fields(RoundMetrics):
        if f.name == "tag_dominance":
            cols.extend(f"tag_dominance_{t}" for t in TAGS)
        else:
            cols.append(f.name)
    return cols


_INT_FIELDS = {f.name for f in dataclasses.fields(RoundMetrics) if f.type in ("int", int)}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def metrics_to_csv(metrics: Sequence[RoundMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_columns())
    for m in metrics:
        writer.writerow([_fmt(v) for v in m.row()])
    return buf.getvalue()


def read_metrics_csv(path) -> list[RoundMetrics]:
    """Parse a metrics file; raises ValueError on malformed or empty input."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("metrics file is empty")
    if rows[0] != csv_columns():
        raise ValueError("unexpected metrics header")
    if len(rows) == 1:
        raise ValueError("metrics file has no rows")
    out = []
    n_dom = N_TAGS
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(rows[0]):
            raise ValueError(f"line {lineno}: expected {len(rows[0])} columns, got {len(row)}")
        values = iter(row)
        kwargs = {}
        for f in dataclasses.fields(RoundMetrics):
            if f.name == "tag_dominance":
                kwargs[f.name] = [int(next(values)) for _ in range(n_dom)]
            elif f.name in _INT_FIELDS:
                kwargs[f.name] = int(next(values))
            else:
                kwargs[f.name] = float(next(values))
        out.append(RoundMetrics(**kwargs))
    return out


SUMMARY_METRICS = (
    "success_rate", "failure_rate", "mean_quality", "quality_std", "mean_agent_utility",
    "mean_cap_match", "alloc_delay_mean", "retry_count", "mean_load", "load_std",
    "bid_rate", "mean_entropy", "events_emitted", "gas_total", "failed_tx_count",
    "confirmation_time_sim",
)


def snapshot_indices(n: int) -> tuple[int, int, int]:
    """Rows used for the first / middle / last snapshot columns."""
    return 0, (n - 1) // 2, n - 1


def summarize(metrics: Sequence[RoundMetrics]) -> dict:
    """Mean/std/min/max over rounds plus first, middle and last snapshots."""
    if not metrics:
        raise ValueError("no rounds to summarize")
    first, mid, last = snapshot_indices(len(metrics))
    labels = [f"R{metrics[i].round}" for i in (first, mid, last)]
    out = {"rounds": len(metrics), "snapshots": labels, "metrics": {}}
    for name in SUMMARY_METRICS:
        x = np.array([float(getattr(m, name)) for m in metrics])
        finite = x[~np.isnan(x)]
        stats = {
            "mean": float(finite.mean()) if finite.size else math.nan,
            "std": float(finite.std()) if finite.size else math.nan,
            "min": float(finite.min()) if finite.size else math.nan,
            "max": float(finite.max()) if finite.size else math.nan,
        }
        for label, i in zip(labels, (first, mid, last)):
            stats[label] = float(x[i])
        out["metrics"][name] = stats
    out["final_tag_dominance"] = dict(zip(TAGS, metrics[-1].tag_dominance))
    return out


def summary_json(metrics: Sequence[RoundMetrics]) -> str:
    def clean(o):
        if isinstance(o, float) and math.isnan(o):
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        return o
    return json.dumps(clean(summarize(metrics)), indent=2) + "\n"


def format_table(metrics: Sequence[RoundMetrics]) -> str:
    s = summarize(metrics)
    labels = s["snapshots"]
    header = ["Metric", "Mean", "Std", "Min", "Max", *labels]
    lines = []
    for name, stats in s["metrics"].items():
        cells = [stats[k] for k in ("mean", "std", "min", "max", *labels)]
        lines.append([name] + [f"{c:.4g}" for c in cells])
    widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]
    render = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([render(header), "  ".join("-" * w for w in widths)] + [render(r) for r in lines]) + "\n"


def linear_slope(y: Iterable[float]) -> float:
    """Least-squares slope of ``y`` against its index, ignoring NaNs."""
    y = np.asarray(list(y), dtype=float)
    x = np.arange(len(y), dtype=float)
    ok = ~np.isnan(y)
    return float(np.polyfit(x[ok], y[ok], 1)[0])
