"""Erasure matrices: per (origin user, destination item) erasure probabilities.

Entries are evaluated lazily for a block of origin users, never materialized
for the whole ``(m+n) x (m+n)`` space. Every entry lies in ``[0, 1)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .graph import FeedbackGraph

SIM_CEILING = 1.0 - 1e-9


@dataclass(frozen=True)
class ErasureMatrix:
    """Base erasure strategy; ``nu`` is the element-wise exponent applied on top."""

    nu: float = 1.0

    def _raw(self, users: np.ndarray, num_items: int) -> np.ndarray:
        raise NotImplementedError

    def block(self, users, num_items: int) -> np.ndarray:
        """``len(users) x num_items`` array of erasure probabilities (nu applied)."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        q = np.broadcast_to(self._raw(users, num_items), (len(users), num_items))
        if self.nu != 1.0:
            q = np.power(q, self.nu)
        return np.array(q, dtype=np.float64)

    def value(self, origin: int, destination: int, num_items: int) -> float:
        return float(self.block([origin], num_items)[0, destination])


@dataclass(frozen=True)
class ZeroErasure(ErasureMatrix):
    def _raw(self, users, num_items):
        return np.zeros((1, num_items))


@dataclass(frozen=True)
class UniformErasure(ErasureMatrix):
    q: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q < 1.0:
            raise ValueError(f"uniform erasure q={self.q} outside [0, 1)")

    def _raw(self, users, num_items):
        return np.full((1, num_items), self.q)


@dataclass(frozen=True)
class LongTailErasure(ErasureMatrix):
    """``Q[u, j] = 1 - degree(j)^-beta``, independent of the origin."""

    item_degrees: np.ndarray = dataclasses.field(default=None, repr=False)
    beta: float = 0.0

    def _raw(self, users, num_items):
        deg = np.maximum(np.asarray(self.item_degrees, dtype=np.float64), 1.0)
        if len(deg) != num_items:
            raise ValueError("item degree vector does not match number of items")
        return (1.0 - deg ** (-self.beta))[None, :]


@dataclass(frozen=True)
class BridgeErasure(ErasureMatrix):
    """Similarity-based erasure on bridges (opposite-sign positions), ``epsilon`` elsewhere."""

    user_positions: np.ndarray = dataclasses.field(default=None, repr=False)
    item_positions: np.ndarray = dataclasses.field(default=None, repr=False)
    epsilon: float = 0.9
    span: float = 1.0

    def _raw(self, users, num_items):
        theta = np.asarray(self.user_positions, dtype=np.float64)[users][:, None]
        psi = np.asarray(self.item_positions, dtype=np.float64)
        if len(psi) != num_items:
            raise ValueError("item position vector does not match number of items")
        psi = psi[None, :]
        sim = np.clip(1.0 - np.abs(psi - theta) / self.span, 0.0, SIM_CEILING)
        bridge = theta * psi < 0
        return np.where(bridge, sim, self.epsilon)


@dataclass(frozen=True)
class TableErasure(ErasureMatrix):
    """Explicit ``m x n`` table of erasure probabilities."""

    table: np.ndarray = dataclasses.field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if np.any(t < 0) or np.any(t >= 1):
            raise ValueError("erasure entries must lie in [0, 1)")

    def _raw(self, users, num_items):
        return np.asarray(self.table, dtype=np.float64)[users]


def erasure_zero() -> ZeroErasure:
    return ZeroErasure()


def erasure_uniform(q: float) -> UniformErasure:
    return UniformErasure(q=q)


def erasure_longtail(graph: FeedbackGraph, beta: float) -> LongTailErasure:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return LongTailErasure(item_degrees=graph.item_degrees, beta=float(beta))


def erasure_bridge(user_positions, item_positions, epsilon: float = 0.9, nu: float = 1.0) -> BridgeErasure:
    """Bridging strategy over user and item ideal points.

    The position span is taken over the union of all user and item positions.
    """
    theta = np.asarray(user_positions, dtype=np.float64)
    psi = np.asarray(item_positions, dtype=np.float64)
    both = np.concatenate([theta, psi])
    if not np.all(np.isfinite(both)):
        raise ValueError("positions must be finite")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon={epsilon} outside [0, 1)")
    if nu <= 0:
        raise ValueError("nu must be > 0")
    span = float(both.max() - both.min())
    if span <= 0:
        raise ValueError("degenerate position range: all positions are equal")
    return BridgeErasure(nu=float(nu), user_positions=theta, item_positions=psi,
                         epsilon=float(epsilon), span=span)


def apply_nu(Q: ErasureMatrix, nu: float) -> ErasureMatrix:
    """Raise every entry of ``Q`` to the power ``nu``."""
    if nu <= 0:
        raise ValueError("nu must be > 0")
    return dataclasses.replace(Q, nu=Q.nu * float(nu))
