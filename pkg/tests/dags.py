"""Seeded random DAGs wrapped as dependency graphs."""

import numpy as np

from pmederive.expr import Ref
from pmederive.tasks import DepGraph, DepKind, Task, levels


def random_dag(seed: int, max_nodes: int = 12) -> DepGraph:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_nodes + 1))
    density = float(rng.uniform(0.05, 0.6))
    edges = [(a, b, DepKind.TRUE) for a in range(1, n + 1) for b in range(a + 1, n + 1) if rng.random() < density]
    tasks = tuple(Task(i, (Ref(f"T{i}"),), (), Ref(f"T{i}"), None) for i in range(1, n + 1))
    return DepGraph(tasks, tuple(edges), levels(range(1, n + 1), edges))
