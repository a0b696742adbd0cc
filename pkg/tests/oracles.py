"""Slow, loop-based recomputations of every evaluation metric, used as test oracles."""

import itertools
import math

import numpy as np
import scipy.sparse as sp

from rwerec.graph import FeedbackGraph
from rwerec.ideology import BLOCKS, EndorsementData, IdealPointModel, gradients, log_likelihood
from rwerec.recommenders import RankedList


def random_eval_instance(rng, max_users=5, max_items=10):
    """Small train graph, held-out edges and full tied-score rankings for every test user."""
    m = int(rng.integers(2, max_users + 1))
    n = int(rng.integers(4, max_items + 1))
    train = np.zeros((m, n), dtype=bool)
    test = []
    for u in range(m):
        perm = rng.permutation(n)
        n_train = int(rng.integers(1, n - 2))
        n_test = int(rng.integers(0, 3))
        train[u, perm[:n_train]] = True
        test += [(u, int(j)) for j in perm[n_train:n_train + n_test]]
    if not test:
        test.append((0, int(np.flatnonzero(~train[0])[0])))
    graph = FeedbackGraph(sp.csr_matrix(train.astype(float)))
    ranked = {}
    for u in range(m):
        cand = np.flatnonzero(~train[u])
        scores = rng.integers(0, 4, size=len(cand)).astype(float)
        order = sorted(range(len(cand)), key=lambda k: (-scores[k], cand[k]))
        ranked[u] = RankedList(u, cand[order], scores[order])
    return graph, np.array(test, dtype=np.int64), ranked


def accuracy(ranked, test_edges, cutoff=10):
    tests = {}
    for u, j in test_edges.tolist():
        tests.setdefault(u, set()).add(j)
    aucs, hits, ranks, total = [], 0, [], 0
    for u, pos in tests.items():
        items = ranked[u].items.tolist()
        score = dict(zip(items, ranked[u].scores.tolist()))
        neg = [j for j in items if j not in pos]
        if neg:
            good = 0.0
            for p in pos:
                for q in neg:
                    good += 1.0 if score[p] > score[q] else 0.5 if score[p] == score[q] else 0.0
            aucs.append(good / (len(pos) * len(neg)))
        for p in pos:
            r = items.index(p) + 1
            ranks.append(r)
            hits += r <= cutoff
            total += 1
    return {"AUC": sum(aucs) / len(aucs), f"HR@{cutoff}": hits / total,
            f"P@{cutoff}": hits / (cutoff * len(tests)), "MR": sum(ranks) / len(ranks)}


def gini_diversity(counts):
    x = [float(c) for c in counts]
    n, s = len(x), sum(x)
    mad = sum(abs(a - b) for a in x for b in x)
    return 1.0 - mad / (2 * (n - 1) * s)


def longtail(ranked, train, cutoff=20):
    lists = [ranked[u].items[:cutoff].tolist() for u in sorted(ranked)]
    deg = train.adjacency.toarray().sum(axis=0)
    m = train.num_users
    counts = [0] * train.num_items
    for lst in lists:
        for j in lst:
            counts[j] += 1
    slots = [j for lst in lists for j in lst]
    pairs = list(itertools.combinations(lists, 2))
    pers = 1.0 - sum(len(set(a) & set(b)) for a, b in pairs) / len(pairs) / cutoff
    return {
        f"GiniD@{cutoff}": gini_diversity(counts),
        f"AvgDeg@{cutoff}": sum(deg[j] for j in slots) / len(slots),
        f"Pers@{cutoff}": pers,
        f"Surp@{cutoff}": sum(-math.log2(max(deg[j], 1) / m) for j in slots) / len(slots),
    }


def rec_range(ranked, item_pos, k=10):
    spans = []
    for u in sorted(ranked):
        p = [item_pos[j] for j in ranked[u].items[:k].tolist()]
        spans.append(max(p) - min(p) if len(p) >= 2 else 0.0)
    return sum(spans) / len(spans)


def battery(ranked, train, user_pos, item_pos, k=10):
    rows = []
    A = train.adjacency.toarray()
    for u in sorted(ranked):
        rec = [item_pos[j] for j in ranked[u].items[:k].tolist()]
        trn = [item_pos[j] for j in np.flatnonzero(A[u]).tolist()]
        rp, tp, th = sum(rec) / len(rec), sum(trn) / len(trn), user_pos[u]
        rr = max(rec) - min(rec)
        rows.append({"Rec-pos": rp, "Train-pos": tp, "User-shift": rp - th, "Train-shift": rp - tp,
                     "Rec-range": rr, "UW-Recs": th * rp, "UW-Shift": th * (rp - th),
                     "TW-Recs": tp * rp, "TW-Shift": tp * (rp - tp), "UW-Range": abs(th) * rr})
    return {key: sum(r[key] for r in rows) / len(rows) for key in rows[0]}


def random_ideal_point_instance(rng, m=6, n_e=4, n_i=3, density=0.4):
    R = (rng.random((m, n_e)) < density) * rng.uniform(0.5, 2.0, (m, n_e))
    S = (rng.random((m, n_i)) < density) * rng.uniform(0.5, 2.0, (m, n_i))
    data = EndorsementData(sp.csr_matrix(R), sp.csr_matrix(S))
    model = IdealPointModel(
        rng.normal(size=m), rng.normal(size=n_e), rng.normal(size=n_i),
        rng.normal(size=m), rng.normal(size=n_e), rng.normal(size=n_i),
        lam=float(rng.uniform(0, 2)), mu=float(rng.uniform(0.1, 3)),
    )
    return data, model


def finite_difference_errors(points=100, seed=0, h=1e-5):
    """Worst relative error between analytic and central-difference gradients per random point."""
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(points):
        data, model = random_ideal_point_instance(rng)
        analytic = gradients(model, data)
        a_vec, fd_vec = [], []
        for b in BLOCKS:
            param = getattr(model, b)
            for k in range(param.size):
                saved = param[k]
                param[k] = saved + h
                up = log_likelihood(model, data)
                param[k] = saved - h
                down = log_likelihood(model, data)
                param[k] = saved
                fd_vec.append((up - down) / (2 * h))
                a_vec.append(analytic[b][k])
        a_vec, fd_vec = np.array(a_vec), np.array(fd_vec)
        errors.append(np.linalg.norm(a_vec - fd_vec) / max(np.linalg.norm(a_vec), np.linalg.norm(fd_vec), 1e-12))
    return np.array(errors)
