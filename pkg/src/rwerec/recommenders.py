"""Top-k recommendation over the scoring backends: P3, RP3beta, item kNN and RWE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .erasure import ErasureMatrix
from .graph import FeedbackGraph, TransitionMatrix, propagate, transition, user_walk_rows
from .walk import DEFAULT_ITERATIONS, rwe_block


@dataclass
class RankedList:
    """Ranked recommendations for one user, best first."""

    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.items)

    def top(self, k: int) -> "RankedList":
        return RankedList(self.user, self.items[:k], self.scores[:k])


@dataclass
class ItemSimilarityIndex:
    """Truncated cosine neighbourhoods stored as an ``n x n`` CSR matrix.

    Row ``i`` holds the (at most ``neighbors``) most similar items to ``i``.
    """

    weights: sp.csr_matrix
    neighbors: int

    def neighbors_of(self, item: int) -> list[tuple[int, float]]:
        w = self.weights
        lo, hi = w.indptr[item], w.indptr[item + 1]
        pairs = list(zip(w.indices[lo:hi].tolist(), w.data[lo:hi].tolist()))
        return sorted(pairs, key=lambda t: (-t[1], t[0]))


def _unit(P: TransitionMatrix, user: int) -> np.ndarray:
    v = np.zeros(P.dim)
    v[user] = 1.0
    return v


def _as_map(row: np.ndarray) -> dict[int, float]:
    nz = np.flatnonzero(row)
    return dict(zip(nz.tolist(), row[nz].tolist()))


def p3_score(P: TransitionMatrix, user: int) -> dict[int, float]:
    """Three-step walk probabilities from ``user`` to every reachable item."""
    return _as_map(propagate(P, _unit(P, user), 3)[P.num_users:])


def rp3b_score(P: TransitionMatrix, graph: FeedbackGraph, user: int, beta: float) -> dict[int, float]:
    deg = np.maximum(graph.item_degrees, 1).astype(np.float64)
    return {j: s / deg[j] ** beta for j, s in p3_score(P, user).items()}


def build_item_similarity(graph: FeedbackGraph, neighbors: int) -> ItemSimilarityIndex:
    """Binary cosine between item columns, keeping the top ``neighbors`` per item.

    Ties at the cut are broken towards the lower item index.
    """
    a = graph.adjacency
    deg = np.maximum(graph.item_degrees, 1).astype(np.float64)
    co = sp.csr_matrix(a.T @ a)
    co.setdiag(0)
    co.eliminate_zeros()
    co = sp.csr_matrix(sp.diags(1 / np.sqrt(deg)) @ co @ sp.diags(1 / np.sqrt(deg)))
    co.sort_indices()
    rows, cols, vals = [], [], []
    for i in range(co.shape[0]):
        lo, hi = co.indptr[i], co.indptr[i + 1]
        idx, val = co.indices[lo:hi], np.minimum(co.data[lo:hi], 1.0)
        if len(idx) > neighbors:
            order = np.lexsort((idx, -val))[:neighbors]
            idx, val = idx[order], val[order]
        rows.append(np.full(len(idx), i))
        cols.append(idx)
        vals.append(val)
    n = graph.num_items
    w = sp.csr_matrix(
        (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [],
                                                np.concatenate(cols) if cols else [])),
        shape=(n, n),
    )
    w.sort_indices()
    return ItemSimilarityIndex(w, neighbors)


def itemknn_score(index: ItemSimilarityIndex, graph: FeedbackGraph, user: int) -> dict[int, float]:
    profile = graph.items_of(user)
    if len(profile) == 0:
        return {}
    row = np.asarray(index.weights[profile].sum(axis=0)).ravel()
    touched = np.unique(index.weights[profile].indices)
    return {int(j): float(row[j]) for j in touched}


TIE_RTOL = 1e-12


def _snap_ties(vals: np.ndarray) -> np.ndarray:
    """Merge scores that differ only by rounding noise into one tied value.

    Sorted scores closer than ``TIE_RTOL`` times the largest magnitude form a
    tie group and all take the group's leading value, so ties that hold in
    exact arithmetic are broken by item index regardless of summation order.
    """
    if len(vals) < 2:
        return vals
    tol = TIE_RTOL * float(np.max(np.abs(vals)))
    if tol == 0:
        return vals
    order = np.argsort(-vals, kind="stable")
    s = vals[order]
    lead = np.maximum.accumulate(np.where(np.r_[True, (s[:-1] - s[1:]) > tol], np.arange(len(s)), 0))
    out = np.empty_like(vals)
    out[order] = s[lead]
    return out


def recommend_topk(scores, train_items: Iterable[int], k: int, user: int = -1) -> RankedList:
    """Rank candidates by (score desc, item index asc), dropping training items.

    ``scores`` is either a ``{item: score}`` map (only listed items are
    candidates) or a dense vector over the whole catalogue. Scores equal up
    to rounding noise (relative ``TIE_RTOL``) count as ties.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(scores, Mapping):
        items = np.fromiter(scores.keys(), dtype=np.int64, count=len(scores))
        vals = np.fromiter(scores.values(), dtype=np.float64, count=len(scores))
    else:
        vals = np.asarray(scores, dtype=np.float64)
        items = np.arange(len(vals))
    train = np.fromiter(train_items, dtype=np.int64)
    keep = ~np.isin(items, train)
    items, vals = items[keep], _snap_ties(vals[keep])
    order = np.lexsort((items, -vals))[:k]
    return RankedList(user, items[order], vals[order])


class Recommender:
    """Batch scorer over a training graph; ``score_block`` returns dense item scores."""

    name = "base"

    def __init__(self, train: FeedbackGraph):
        self.train = train

    def score_block(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def recommend(self, users: Iterable[int] | None = None, k: int = 20,
                  block_size: int = 256) -> dict[int, RankedList]:
        users = np.arange(self.train.num_users) if users is None else np.asarray(list(users))
        out = {}
        for lo in range(0, len(users), block_size):
            block = users[lo:lo + block_size]
            scores = self.score_block(block)
            for u, row in zip(block.tolist(), scores):
                out[u] = recommend_topk(row, self.train.items_of(u), k, user=u)
        return out


class P3(Recommender):
    name = "p3"

    def __init__(self, train, k: int = 3):
        super().__init__(train)
        self.P = transition(train)
        self.k = k

    def score_block(self, users):
        return user_walk_rows(self.P, users, self.k)


class RP3Beta(P3):
    name = "rp3b"

    def __init__(self, train, beta: float = 0.5, k: int = 3):
        super().__init__(train, k)
        self.beta = beta
        self._scale = np.maximum(train.item_degrees, 1).astype(np.float64) ** (-beta)

    def score_block(self, users):
        return super().score_block(users) * self._scale


class ItemKNN(Recommender):
    name = "itemknn"

    def __init__(self, train, neighbors: int = 100):
        super().__init__(train)
        self.index = build_item_similarity(train, neighbors)

    def score_block(self, users):
        return np.asarray((self.train.adjacency[users] @ self.index.weights).todense())


class RWE(P3):
    name = "rwe"

    def __init__(self, train, erasure: ErasureMatrix, k: int = 3, iterations: int = DEFAULT_ITERATIONS):
        super().__init__(train, k)
        self.erasure = erasure
        self.iterations = iterations

    def score_block(self, users):
        scores, _ = rwe_block(self.P, self.erasure, users, self.k, self.iterations)
        return scores


def write_ranked_tsv(path, lists: Mapping[int, RankedList], user_ids=None, item_ids=None) -> None:
    """``user_id, rank, item_id, score`` rows; scores with 10 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in sorted(lists):
            rl = lists[u]
            uid = user_ids[u] if user_ids is not None else u
            for rank, (j, s) in enumerate(zip(rl.items.tolist(), rl.scores.tolist()), start=1):
                jid = item_ids[j] if item_ids is not None else j
                fh.write(f"{uid}\t{rank}\t{jid}\t{s:.10g}\n")


def read_ranked_tsv(path, user_index=None, item_index=None) -> dict[int, RankedList]:
    """Inverse of :func:`write_ranked_tsv`. Unknown ids raise ``KeyError``."""
    rows: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            uid, rank, jid, score = parts
            u = user_index[uid] if user_index is not None else int(uid)
            j = item_index[jid] if item_index is not None else int(jid)
            rows.setdefault(u, []).append((int(rank), j, float(score)))
    out = {}
    for u, entries in rows.items():
        entries.sort()
        out[u] = RankedList(u, np.array([e[1] for e in entries], dtype=np.int64),
                            np.array([e[2] for e in entries]))
    return out
