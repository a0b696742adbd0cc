"""Bipartite implicit-feedback graph, its transition matrix and k-step propagation.

Node layout used throughout the package: users occupy indices ``0 .. m-1`` and
items occupy ``m .. m+n-1`` of the joint ``(m+n)``-dimensional space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np
import scipy.sparse as sp


class EmptyGraphError(ValueError):
    """Raised when degree filtering leaves no edges."""


@dataclass(frozen=True)
class FeedbackGraph:
    """Users x items incidence with unit weights.

    ``adjacency`` is the ``m x n`` CSR matrix ``A``. ``user_ids`` / ``item_ids``
    map dense index -> external id; the reverse maps are built on demand.
    """

    adjacency: sp.csr_matrix
    user_ids: tuple = ()
    item_ids: tuple = ()
    _user_index: dict = field(default=None, repr=False, compare=False)
    _item_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a = self.adjacency
        if not sp.isspmatrix_csr(a):
            a = sp.csr_matrix(a)
        a = a.astype(np.float64)
        a.sum_duplicates()
        a.data[:] = 1.0
        a.eliminate_zeros()
        a.sort_indices()
        object.__setattr__(self, "adjacency", a)
        if not self.user_ids:
            object.__setattr__(self, "user_ids", tuple(range(a.shape[0])))
        if not self.item_ids:
            object.__setattr__(self, "item_ids", tuple(range(a.shape[1])))
        if len(self.user_ids) != a.shape[0] or len(self.item_ids) != a.shape[1]:
            raise ValueError("id maps do not match adjacency shape")
        object.__setattr__(self, "_user_index", {u: i for i, u in enumerate(self.user_ids)})
        object.__setattr__(self, "_item_index", {t: i for i, t in enumerate(self.item_ids)})

    @property
    def num_users(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_items(self) -> int:
        return self.adjacency.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz

    @property
    def user_degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(np.int64)

    @property
    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.adjacency.indices, minlength=self.num_items).astype(np.int64)

    def user_index(self, user_id: Hashable) -> int:
        return self._user_index[user_id]

    def item_index(self, item_id: Hashable) -> int:
        return self._item_index[item_id]

    def items_of(self, user: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[user]:a.indptr[user + 1]]

    def edges(self) -> np.ndarray:
        """``(nnz, 2)`` array of ``(user, item)`` index pairs in row-major order."""
        coo = self.adjacency.tocoo()
        return np.column_stack([coo.row, coo.col]).astype(np.int64)

    def with_edges(self, edges: np.ndarray) -> "FeedbackGraph":
        """Graph over the same index space restricted to ``edges``."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        a = sp.csr_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
            shape=self.adjacency.shape,
        )
        return FeedbackGraph(a, self.user_ids, self.item_ids)


def build_graph(
    interactions: Iterable[tuple[Hashable, Hashable]],
    min_user_degree: int = 1,
    min_item_degree: int = 1,
) -> FeedbackGraph:
    """Build a deduplicated feedback graph, pruning low-degree nodes to a fixed point.

    Dense indices follow the first-seen order of the surviving external ids.
    """
    pairs = list(dict.fromkeys((u, i) for u, i in interactions))
    if not pairs:
        raise ValueError("no interactions given")

    while True:
        udeg: dict = {}
        ideg: dict = {}
        for u, i in pairs:
            udeg[u] = udeg.get(u, 0) + 1
            ideg[i] = ideg.get(i, 0) + 1
        kept = [(u, i) for u, i in pairs if udeg[u] >= min_user_degree and ideg[i] >= min_item_degree]
        if len(kept) == len(pairs):
            break
        pairs = kept
        if not pairs:
            break
    if not pairs:
        raise EmptyGraphError(
            f"graph is empty after filtering with min_user_degree={min_user_degree}, "
            f"min_item_degree={min_item_degree}"
        )

    users = list(dict.fromkeys(u for u, _ in pairs))
    items = list(dict.fromkeys(i for _, i in pairs))
    uidx = {u: k for k, u in enumerate(users)}
    iidx = {t: k for k, t in enumerate(items)}
    rows = np.fromiter((uidx[u] for u, _ in pairs), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((iidx[i] for _, i in pairs), dtype=np.int64, count=len(pairs))
    a = sp.csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(len(users), len(items)))
    return FeedbackGraph(a, tuple(users), tuple(items))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``(m+n) x (m+n)`` walk matrix with bipartite block structure.

    Nodes without edges (possible in train graphs that keep the full index
    space) get an all-zero row.
    """

    matrix: sp.csr_matrix
    num_users: int
    num_items: int
    user_to_item: sp.csr_matrix = field(repr=False)
    item_to_user: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.num_users + self.num_items

    def row(self, node: int) -> np.ndarray:
        return self.matrix.getrow(node).toarray().ravel()


def _row_normalize(a: sp.csr_matrix) -> sp.csr_matrix:
    deg = np.diff(a.indptr)
    inv = np.zeros(len(deg))
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    return sp.csr_matrix(sp.diags(inv) @ a)


def transition(graph: FeedbackGraph) -> TransitionMatrix:
    """``P = D^-1 A^G`` for the block adjacency ``[[0, A], [A^T, 0]]``."""
    if graph.num_edges == 0:
        raise EmptyGraphError("cannot build a transition matrix for an empty graph")
    a = graph.adjacency
    ui = _row_normalize(a)
    iu = _row_normalize(sp.csr_matrix(a.T))
    full = sp.bmat([[None, ui], [iu, None]], format="csr")
    full.sort_indices()
    return TransitionMatrix(full, graph.num_users, graph.num_items, ui, iu)


def propagate(P: TransitionMatrix, start: np.ndarray, steps: int) -> np.ndarray:
    """Return ``start @ P^steps`` by repeated sparse products.

    ``start`` may be a single mass vector or a 2-D batch with one vector per row.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v = np.asarray(start, dtype=np.float64)
    if v.shape[-1] != P.dim:
        raise ValueError(f"mass vector has length {v.shape[-1]}, expected {P.dim}")
    pt = P.matrix.T.tocsr()
    single = v.ndim == 1
    cur = v[:, None] if single else v.T
    for _ in range(steps):
        cur = pt @ cur
    cur = np.asarray(cur)
    return cur[:, 0] if single else cur.T


def user_walk_rows(P: TransitionMatrix, users: np.ndarray, steps: int) -> np.ndarray:
    """Item block of ``P^steps`` for the given user rows, as a dense ``len(users) x n`` array.

    Uses the bipartite structure (alternating user->item and item->user
    blocks), which is equivalent to :func:`propagate` from unit masses but
    avoids carrying the all-zero half of the vector.
    """
    if steps % 2 == 0:
        raise ValueError("an odd number of steps is needed to land on items")
    users = np.asarray(users, dtype=np.int64)
    cur = P.user_to_item[users].toarray()
    for _ in range((steps - 1) // 2):
        cur = np.asarray((cur @ P.item_to_user) @ P.user_to_item)
    return cur
