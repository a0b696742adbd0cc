"""Per-user random train/test splits over a fixed index space."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .graph import FeedbackGraph
from .seeding import derive_rng


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    min_interactions: int = 4
    repetitions: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def held_out_count(degree: int, spec: SplitSpec) -> int:
    """Held-out count for a user: round-half-up of the fraction, at least 1."""
    if degree < spec.min_interactions:
        return 0
    return max(1, int(np.floor(spec.test_fraction * degree + 0.5)))


def split_once(graph: FeedbackGraph, spec: SplitSpec, rep: int) -> tuple[FeedbackGraph, np.ndarray]:
    rng = derive_rng(spec.seed, "split", rep)
    a = graph.adjacency
    train, test = [], []
    for u in range(graph.num_users):
        items = a.indices[a.indptr[u]:a.indptr[u + 1]]
        n_test = held_out_count(len(items), spec)
        mask = np.zeros(len(items), dtype=bool)
        if n_test:
            mask[rng.choice(len(items), size=n_test, replace=False)] = True
        train.append(np.column_stack([np.full((~mask).sum(), u), items[~mask]]))
        test.append(np.column_stack([np.full(mask.sum(), u), items[mask]]))
    train_edges = np.concatenate(train).astype(np.int64)
    test_edges = np.concatenate(test).astype(np.int64)
    return graph.with_edges(train_edges), test_edges


def split(graph: FeedbackGraph, spec: SplitSpec) -> list[tuple[FeedbackGraph, np.ndarray]]:
    """``spec.repetitions`` independent splits; train graphs keep the original indices."""
    if graph.num_edges == 0:
        raise ValueError("cannot split an empty graph")
    return [split_once(graph, spec, rep) for rep in range(spec.repetitions)]


def fingerprint(test_edges: np.ndarray) -> str:
    """SHA-256 of the lexicographically sorted test edges."""
    e = np.asarray(test_edges, dtype=np.int64).reshape(-1, 2)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    return hashlib.sha256(np.ascontiguousarray(e).tobytes()).hexdigest()


def group_by_user(test_edges: np.ndarray) -> dict[int, np.ndarray]:
    e = np.asarray(test_edges, dtype=np.int64).reshape(-1, 2)
    out: dict[int, list] = {}
    for u, j in e.tolist():
        out.setdefault(u, []).append(j)
    return {u: np.array(sorted(v), dtype=np.int64) for u, v in out.items()}
