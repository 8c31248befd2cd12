"""Synthetic task corpus and the per-round issuance queue."""

from __future__ import annotations

import numpy as np

from ..allocation import Task
from ..capability import N_TAGS, tag_vector
from ..errors import CorpusExhausted
from .config import CorpusConfig


def generate_corpus(cfg: CorpusConfig, rng: np.random.Generator | None = None) -> list[Task]:
    """``cfg.n_tasks`` tasks with 2-4 distinct tags, uniform rewards and deadlines."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.tags_per_task
    tasks = []
    for j in range(cfg.n_tasks):
        n_tags = int(rng.integers(lo, hi + 1))
        tags = rng.choice(N_TAGS, size=n_tags, replace=False)
        reward = float(rng.uniform(*cfg.reward_range))
        deadline = int(rng.integers(cfg.deadline_range[0], cfg.deadline_range[1] + 1))
        tasks.append(Task(f"T{j + 1:04d}", reward, tag_vector(int(t) for t in tags), deadline))
    return tasks


class TaskSource:
    """Issues tasks in corpus order.

    Past the end of the corpus it either raises ``CorpusExhausted`` or,
    with ``recycle``, issues clones of the templates under fresh ids.
    """

    def __init__(self, templates: list[Task], recycle: bool = True):
        self.templates = templates
        self.recycle = recycle
        self.issued = 0

    def remaining(self) -> int | None:
        return None if self.recycle else len(self.templates) - self.issued

    def draw(self, n: int, round: int) -> list[Task]:
        if not self.recycle and self.issued + n > len(self.templates):
            raise CorpusExhausted(
                f"round {round} needs {n} tasks, {len(self.templates) - self.issued} left")
        out = []
        for _ in range(n):
            t = self.templates[self.issued % len(self.templates)]
            out.append(Task(f"T{self.issued + 1:04d}", t.reward, t.required.copy(), t.deadline,
                            issue_round=round))
            self.issued += 1
        return out
