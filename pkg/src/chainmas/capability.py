"""Capability tag taxonomy and vector helpers shared by scoring and execution."""

from __future__ import annotations

from typing import Iterable

import numpy as np

N_TAGS = 10
TAGS = tuple(f"Tag{k}" for k in range(1, N_TAGS + 1))

TAG_DESCRIPTIONS = (
    "Object recognition and classification",
    "Spatial reasoning and planning",
    "Language understanding (instruction parsing)",
    "Grasping and manipulation",
    "Path planning and navigation",
    "Scene understanding (layout/context extraction)",
    "Task decomposition and sequencing",
    "Temporal reasoning (event ordering)",
    "Knowledge grounding (external inference)",
    "Environment interaction via API calls or actuators",
)


def tag_names(tags: Iterable[int]) -> list[str]:
    return [TAGS[k] for k in sorted(tags)]


def tag_index(name: str) -> int:
    return TAGS.index(name)


def tag_vector(tags: Iterable[int | str], n: int = N_TAGS) -> np.ndarray:
    """0/1 requirement vector from tag indices (0-based) or names."""
    r = np.zeros(n, dtype=np.int8)
    for t in tags:
        r[tag_index(t) if isinstance(t, str) else t] = 1
    return r


def tag_set(vector) -> frozenset[int]:
    return frozenset(int(k) for k in np.flatnonzero(np.asarray(vector)))


def binarize(w, theta: float) -> np.ndarray:
    return (np.asarray(w, dtype=float) >= theta).astype(np.int8)


def cap_match(required, w) -> float:
    """Mean of ``w`` over the required tags; 1.0 when nothing is required."""
    mask = np.asarray(required).astype(bool)
    if not mask.any():
        return 1.0
    return float(np.asarray(w, dtype=float)[mask].mean())
