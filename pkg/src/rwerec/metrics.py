"""Accuracy, long-tail and ideological-diversity metrics over ranked lists."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .graph import FeedbackGraph
from .ideology import CENTER, LEFT, RIGHT, classify
from .recommenders import RankedList
from .seeding import derive_rng
from .split import group_by_user

ACCURACY_CUTOFF = 10
LONGTAIL_CUTOFF = 20
IDEOLOGY_CUTOFF = 10


class AccuracyAccumulator:
    """Streams full per-user rankings into AUC / HR@k / P@k / MR.

    Each added ranking must contain every non-training item of the user, so
    memory stays bounded when users are processed block by block.
    """

    def __init__(self, cutoff: int = ACCURACY_CUTOFF):
        self.cutoff = cutoff
        self.auc_sum = 0.0
        self.auc_users = 0
        self.users = 0
        self.hits = 0
        self.test_items = 0
        self.rank_sum = 0.0

    def add(self, ranked: RankedList, test_items: np.ndarray) -> None:
        test_items = np.asarray(test_items, dtype=np.int64)
        if len(test_items) == 0:
            return
        is_pos = np.isin(ranked.items, test_items)
        if is_pos.sum() != len(np.unique(test_items)):
            raise ValueError(f"ranking of user {ranked.user} does not cover all test items")
        ranks = np.flatnonzero(is_pos) + 1
        self.users += 1
        self.test_items += len(ranks)
        self.hits += int(np.sum(ranks <= self.cutoff))
        self.rank_sum += float(ranks.sum())
        neg = np.sort(ranked.scores[~is_pos])
        if len(neg):
            pos = ranked.scores[is_pos]
            below = np.searchsorted(neg, pos, side="left")
            tied = np.searchsorted(neg, pos, side="right") - below
            self.auc_sum += float(np.sum(below + 0.5 * tied)) / (len(pos) * len(neg))
            self.auc_users += 1

    def result(self) -> dict[str, float]:
        if self.users == 0:
            raise ValueError("no users with test items were evaluated")
        k = self.cutoff
        return {
            "AUC": self.auc_sum / self.auc_users if self.auc_users else float("nan"),
            f"HR@{k}": self.hits / self.test_items,
            f"P@{k}": self.hits / (k * self.users),
            "MR": self.rank_sum / self.test_items,
        }


def accuracy_metrics(ranked: Mapping[int, RankedList], test_edges: np.ndarray,
                     train: FeedbackGraph | None = None, cutoff: int = ACCURACY_CUTOFF) -> dict[str, float]:
    """AUC, HR@k (test-item recall), P@k and mean rank; users without test items are skipped."""
    acc = AccuracyAccumulator(cutoff)
    for u, items in sorted(group_by_user(test_edges).items()):
        if u not in ranked:
            raise KeyError(f"no ranking for test user {u}")
        if train is not None and np.isin(ranked[u].items, train.items_of(u)).any():
            raise ValueError(f"ranking of user {u} contains training items")
        acc.add(ranked[u], items)
    return acc.result()


def gini_diversity(counts: np.ndarray) -> float:
    """``1 - Gini`` of recommendation counts over the whole catalogue (zeros included)."""
    c = np.sort(np.asarray(counts, dtype=np.float64))
    n = len(c)
    total = c.sum()
    if n < 2 or total == 0:
        return 1.0
    j = np.arange(1, n + 1)
    gini = float(np.sum((2 * j - n - 1) * c / total) / (n - 1))
    return 1.0 - gini


def _overlap_matrix(lists: list[np.ndarray], num_items: int) -> sp.csr_matrix:
    rows = np.repeat(np.arange(len(lists)), [len(x) for x in lists])
    cols = np.concatenate(lists) if lists else np.array([], dtype=np.int64)
    return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(lists), num_items))


def personalization(lists: list[np.ndarray], num_items: int, cutoff: int = LONGTAIL_CUTOFF,
                    exact_limit: int = 2000, sample_pairs: int = 100_000, seed: int = 0) -> float:
    """``1 - mean |L_u & L_v| / cutoff`` over user pairs; sampled pairs above ``exact_limit`` users."""
    n = len(lists)
    if n < 2:
        return float("nan")
    B = _overlap_matrix(lists, num_items)
    if n <= exact_limit:
        ov = (B @ B.T).toarray()
        total = (ov.sum() - np.trace(ov)) / 2
        return 1.0 - total / (n * (n - 1) / 2) / cutoff
    rng = derive_rng(seed, "personalization")
    us = rng.integers(0, n, size=sample_pairs)
    vs = rng.integers(0, n - 1, size=sample_pairs)
    vs = vs + (vs >= us)
    overlaps = np.asarray(B[us].multiply(B[vs]).sum(axis=1)).ravel()
    return 1.0 - float(overlaps.mean()) / cutoff


def longtail_metrics(ranked: Mapping[int, RankedList], train: FeedbackGraph,
                     cutoff: int = LONGTAIL_CUTOFF, seed: int = 0) -> dict[str, float]:
    """GiniD, AvgDeg, Pers and Surp at ``cutoff``.

    Degrees are training degrees; an item with no training edges counts as
    degree 1 for surprisal.
    """
    lists = [ranked[u].items[:cutoff] for u in sorted(ranked)]
    slots = np.concatenate(lists) if lists else np.array([], dtype=np.int64)
    deg = train.item_degrees.astype(np.float64)
    counts = np.bincount(slots, minlength=train.num_items)
    m = train.num_users
    return {
        f"GiniD@{cutoff}": gini_diversity(counts),
        f"AvgDeg@{cutoff}": float(deg[slots].mean()) if len(slots) else float("nan"),
        f"Pers@{cutoff}": personalization(lists, train.num_items, cutoff, seed=seed),
        f"Surp@{cutoff}": float(np.mean(-np.log2(np.maximum(deg[slots], 1.0) / m))) if len(slots) else float("nan"),
    }


def _positions_of(items: np.ndarray, item_positions) -> np.ndarray:
    if isinstance(item_positions, Mapping):
        try:
            return np.array([item_positions[j] for j in items.tolist()], dtype=np.float64)
        except KeyError as exc:
            raise KeyError(f"item {exc.args[0]} has no position") from None
    pos = np.asarray(item_positions, dtype=np.float64)[items]
    bad = ~np.isfinite(pos)
    if bad.any():
        raise KeyError(f"item {int(items[np.argmax(bad)])} has no position")
    return pos


def rec_range(ranked: Mapping[int, RankedList], item_positions, k: int = IDEOLOGY_CUTOFF) -> float:
    """Mean over users of ``max - min`` position in the top ``k``."""
    if not ranked:
        return float("nan")
    spans = []
    for u in sorted(ranked):
        pos = _positions_of(ranked[u].items[:k], item_positions)
        spans.append(float(pos.max() - pos.min()) if len(pos) >= 2 else 0.0)
    return float(np.mean(spans))


BATTERY_KEYS = ("Rec-pos", "Train-pos", "User-shift", "Train-shift", "Rec-range",
                "UW-Recs", "UW-Shift", "TW-Recs", "TW-Shift", "UW-Range")


def ideological_battery_per_user(ranked: Mapping[int, RankedList], train: FeedbackGraph,
                                 user_positions, item_positions,
                                 k: int = IDEOLOGY_CUTOFF) -> dict[int, dict[str, float]]:
    theta = np.asarray(user_positions, dtype=np.float64)
    out = {}
    for u in sorted(ranked):
        rec = _positions_of(ranked[u].items[:k], item_positions)
        trn = _positions_of(train.items_of(u), item_positions)
        if len(rec) == 0 or len(trn) == 0:
            continue
        rec_pos, train_pos, th = rec.mean(), trn.mean(), theta[u]
        rng_ = rec.max() - rec.min()
        out[u] = {
            "Rec-pos": rec_pos,
            "Train-pos": train_pos,
            "User-shift": rec_pos - th,
            "Train-shift": rec_pos - train_pos,
            "Rec-range": rng_,
            "UW-Recs": th * rec_pos,
            "UW-Shift": th * (rec_pos - th),
            "TW-Recs": train_pos * rec_pos,
            "TW-Shift": train_pos * (rec_pos - train_pos),
            "UW-Range": abs(th) * rng_,
        }
    return out


def ideological_battery(ranked, train, user_positions, item_positions, k: int = IDEOLOGY_CUTOFF) -> dict[str, float]:
    """Means over users of the per-user position measures and their weighted summaries."""
    per_user = ideological_battery_per_user(ranked, train, user_positions, item_positions, k)
    if not per_user:
        return {key: float("nan") for key in BATTERY_KEYS}
    return {key: float(np.mean([v[key] for v in per_user.values()])) for key in BATTERY_KEYS}


def histogram_export(values, classes, bins: int = 20, value_range: tuple[float, float] | None = None):
    """Per-class bin counts as rows ``(class, bin_lo, bin_hi, count)``.

    ``classes`` holds one of Left/Center/Right (or a position to be
    classified) per value.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    v = np.asarray(values, dtype=np.float64)
    labels = [c if isinstance(c, str) else classify(c) for c in classes]
    if len(labels) != len(v):
        raise ValueError("one class label per value is required")
    if value_range is None:
        lo, hi = (float(v.min()), float(v.max())) if len(v) else (0.0, 1.0)
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = value_range
    edges = np.linspace(lo, hi, bins + 1)
    rows = []
    lab = np.array(labels, dtype=object)
    for cls in (LEFT, CENTER, RIGHT):
        counts, _ = np.histogram(v[lab == cls], bins=edges)
        rows.extend((cls, float(edges[b]), float(edges[b + 1]), int(counts[b])) for b in range(bins))
    return rows


def write_histogram_tsv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("class\tbin_lo\tbin_hi\tcount\n")
        for cls, lo, hi, c in rows:
            fh.write(f"{cls}\t{lo:.10g}\t{hi:.10g}\t{c}\n")


@dataclass
class EvalReport:
    """Per-split metric values plus their means over splits."""

    algorithm: str
    hyperparameters: dict
    seeds: dict
    per_split: list = field(default_factory=list)
    fingerprints: list = field(default_factory=list)
    cutoffs: dict = field(default_factory=lambda: {
        "AUC": None, "HR": ACCURACY_CUTOFF, "P": ACCURACY_CUTOFF, "MR": None,
        "GiniD": LONGTAIL_CUTOFF, "AvgDeg": LONGTAIL_CUTOFF, "Pers": LONGTAIL_CUTOFF,
        "Surp": LONGTAIL_CUTOFF, "RecRange": IDEOLOGY_CUTOFF, "battery": IDEOLOGY_CUTOFF,
    })

    @property
    def mean(self) -> dict[str, float]:
        if not self.per_split:
            return {}
        keys = list(self.per_split[0])
        return {k: float(np.mean([s[k] for s in self.per_split])) for k in keys}

    def values(self, metric: str) -> list[float]:
        return [s[metric] for s in self.per_split]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = self.mean
        d["repetitions"] = len(self.per_split)
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        keys = list(self.per_split[0]) if self.per_split else []
        head = ["split"] + keys
        rows = [[str(i)] + [f"{s[k]:.6g}" for k in keys] for i, s in enumerate(self.per_split)]
        rows.append(["mean"] + [f"{self.mean[k]:.6g}" for k in keys])
        widths = [max(len(r[c]) for r in [head] + rows) for c in range(len(head))]
        return "".join("\t".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n"
                       for r in [head] + rows)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(d["algorithm"], d["hyperparameters"], d["seeds"], d["per_split"],
                   d.get("fingerprints", []), d.get("cutoffs", {}))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not np.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x
