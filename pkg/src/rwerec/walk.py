"""Random walk with erasure (RWE) scoring.

Each round starts a k-step walk from the origin with the mass erased in the
previous round. At every destination item a fraction ``Q[origin, j]`` of the
arriving mass is erased and returned to the origin; the rest is kept as score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .erasure import ErasureMatrix
from .graph import TransitionMatrix, propagate, user_walk_rows

DEFAULT_ITERATIONS = 10
MASS_FLOOR = 1e-12


@dataclass
class RweScores:
    origin: int
    scores: dict = field(default_factory=dict)
    iterations_run: int = 0
    residual_mass: float = 0.0

    def as_array(self, num_items: int) -> np.ndarray:
        out = np.zeros(num_items)
        if self.scores:
            idx = np.fromiter(self.scores.keys(), dtype=np.int64)
            out[idx] = np.fromiter(self.scores.values(), dtype=np.float64)
        return out


def _check(P: TransitionMatrix, origin: int, k: int):
    if k % 2 == 0 or k < 1:
        raise ValueError(f"walk length k={k} must be odd")
    if not 0 <= origin < P.num_users:
        raise ValueError(f"origin {origin} is not a user vertex")


def _item_row(P: TransitionMatrix, origin: int, k: int) -> np.ndarray:
    start = np.zeros(P.dim)
    start[origin] = 1.0
    return propagate(P, start, k)[P.num_users:]


def rwe_score(P: TransitionMatrix, Q: ErasureMatrix, origin: int, k: int = 3,
              iterations: int = DEFAULT_ITERATIONS) -> RweScores:
    """Iterative erased-walk scores for one origin user."""
    _check(P, origin, k)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    p = _item_row(P, origin, k)
    support = np.flatnonzero(p > 0)
    p = p[support]
    q = Q.block([origin], P.num_items)[0, support]

    kept = np.zeros(len(support))
    mass = 1.0
    run = 0
    for _ in range(iterations):
        if mass < MASS_FLOOR:
            break
        arriving = mass * p
        kept += arriving * (1.0 - q)
        mass = float(np.sum(arriving * q))
        run += 1
    return RweScores(origin, dict(zip(support.tolist(), kept.tolist())), run, mass)


def rwe_closed_form(P: TransitionMatrix, Q: ErasureMatrix, origin: int, k: int = 3) -> RweScores:
    """Limit of :func:`rwe_score` as iterations grow: ``p * (1 - q) / (1 - r)``."""
    _check(P, origin, k)
    p = _item_row(P, origin, k)
    support = np.flatnonzero(p > 0)
    p = p[support]
    q = Q.block([origin], P.num_items)[0, support]
    r = float(np.sum(p * q))
    assert r < 1.0, "returned mass must stay below 1"
    scores = p * (1.0 - q) / (1.0 - r)
    return RweScores(origin, dict(zip(support.tolist(), scores.tolist())), 0, 0.0)


def rwe_block(P: TransitionMatrix, Q: ErasureMatrix, users, k: int = 3,
              iterations: int = DEFAULT_ITERATIONS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`rwe_score` for many origins.

    Returns the dense ``len(users) x n`` score block and the per-user residual mass.
    """
    if k % 2 == 0:
        raise ValueError(f"walk length k={k} must be odd")
    users = np.asarray(users, dtype=np.int64)
    p = user_walk_rows(P, users, k)
    q = Q.block(users, P.num_items)
    kept = np.zeros_like(p)
    mass = np.ones(len(users))
    retain = p * (1.0 - q)
    returned = np.sum(p * q, axis=1)
    for _ in range(iterations):
        active = mass >= MASS_FLOOR
        if not active.any():
            break
        m = np.where(active, mass, 0.0)
        kept += m[:, None] * retain
        mass = np.where(active, m * returned, mass)
    return kept, mass
