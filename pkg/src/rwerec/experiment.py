"""Grid-search experiments over repeated train/test splits, and run comparison."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import erasure as er
from .config import ExperimentConfig, gridpoint_name
from .data import DataError, iter_dataset, write_edges_tsv
from .graph import FeedbackGraph, build_graph
from .ideology import EndorsementData, fit, read_positions_tsv
from .metrics import (AccuracyAccumulator, EvalReport, ideological_battery, longtail_metrics,
                      rec_range)
from .recommenders import RWE, P3, ItemKNN, Recommender, RP3Beta, recommend_topk, write_ranked_tsv
from .split import fingerprint, group_by_user, split
from .stats import ks_two_sample, stars, welch_t_one_tailed

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class SplitMismatchError(ValueError):
    pass


def load_graph(cfg: ExperimentConfig) -> FeedbackGraph:
    records = ((r.user_id, r.item_id) for r in iter_dataset(cfg.dataset, cfg.format))
    return build_graph(records, cfg.min_user_degree, cfg.min_item_degree)


def _lookup(table: dict, ids, kind: str) -> np.ndarray:
    missing = [i for i in ids if str(i) not in table]
    if missing:
        raise DataError(f"{len(missing)} {kind} ids have no position (first: {missing[0]!r})")
    return np.array([table[str(i)] for i in ids], dtype=np.float64)


def resolve_positions(cfg: ExperimentConfig, graph: FeedbackGraph):
    """User and item positions aligned with ``graph``, or ``(None, None)``."""
    if cfg.positions:
        table = read_positions_tsv(cfg.positions)
    elif cfg.elite_edges or cfg.content_edges:
        elite = [(r.user_id, r.item_id, r.weight) for r in iter_dataset(cfg.elite_edges, "tsv-edges")] \
            if cfg.elite_edges else []
        content = [(r.user_id, r.item_id, r.weight) for r in iter_dataset(cfg.content_edges, "tsv-edges")] \
            if cfg.content_edges else []
        data = EndorsementData.from_records(elite, content)
        model = fit(data, cfg.fit_config())
        table = {
            "user": dict(zip(map(str, data.user_ids), model.theta.tolist())),
            "elite": dict(zip(map(str, data.elite_ids), model.phi.tolist())),
            "content": dict(zip(map(str, data.content_ids), model.psi.tolist())),
        }
    else:
        return None, None
    return _lookup(table["user"], graph.user_ids, "user"), _lookup(table[cfg.item_kind], graph.item_ids, "item")


def make_recommender(cfg: ExperimentConfig, point: dict, train: FeedbackGraph,
                     user_pos=None, item_pos=None) -> Recommender:
    algo = cfg.algorithm
    if algo == "p3":
        return P3(train, cfg.walk_length)
    if algo == "rp3b":
        return RP3Beta(train, point["beta"], cfg.walk_length)
    if algo == "itemknn":
        return ItemKNN(train, point["neighbors"])
    if algo == "rwe-d":
        q = er.apply_nu(er.erasure_longtail(train, point["beta"]), point["nu"])
        return RWE(train, q, cfg.walk_length, cfg.iterations)
    if algo == "rwe-b":
        if user_pos is None:
            raise DataError("rwe-b requires positions")
        q = er.erasure_bridge(user_pos, item_pos, point["epsilon"], point["nu"])
        return RWE(train, q, cfg.walk_length, cfg.iterations)
    raise ValueError(f"unknown algorithm {algo!r}")


def evaluate_split(rec: Recommender, test_edges: np.ndarray, list_length: int = 20,
                   block_size: int = 256, user_pos=None, item_pos=None, seed: int = 0):
    """Score every user, stream full rankings into the accuracy metrics, keep top lists.

    Returns ``(metrics, top_lists)``.
    """
    train = rec.train
    tests = group_by_user(test_edges)
    acc = AccuracyAccumulator()
    tops = {}
    users = np.array([u for u in range(train.num_users) if len(train.items_of(u))], dtype=np.int64)
    for lo in range(0, len(users), block_size):
        block = users[lo:lo + block_size]
        scores = rec.score_block(block)
        for u, row in zip(block.tolist(), scores):
            seen = train.items_of(u)
            if u in tests:
                full = recommend_topk(row, seen, train.num_items, user=u)
                acc.add(full, tests[u])
                tops[u] = full.top(list_length)
            else:
                tops[u] = recommend_topk(row, seen, list_length, user=u)
    metrics = acc.result()
    metrics.update(longtail_metrics(tops, train, seed=seed))
    if item_pos is not None:
        metrics["RecRange@10"] = rec_range(tops, item_pos, 10)
        metrics.update(ideological_battery(tops, train, user_pos, item_pos, 10))
    return metrics, tops


def _task(args):
    cfg, point, rep, train, test_edges, user_pos, item_pos, outdir = args
    rec = make_recommender(cfg, point, train, user_pos, item_pos)
    metrics, tops = evaluate_split(rec, test_edges, cfg.list_length, cfg.block_size, user_pos, item_pos, cfg.seed)
    d = Path(outdir) / cfg.algorithm / gridpoint_name(point) / f"split{rep}"
    d.mkdir(parents=True, exist_ok=True)
    write_ranked_tsv(d / "ranked.tsv", tops, train.user_ids, train.item_ids)
    (d / "metrics.json").write_text(json.dumps(_clean(metrics), indent=2, sort_keys=True) + "\n")
    return metrics


def _clean(d):
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, complete: bool = True, note: str = "") -> Path:
    """List every file under ``root`` with its SHA-256; ``INCOMPLETE`` marks aborted runs."""
    root = Path(root)
    lines = []
    if not complete:
        lines.append(f"# INCOMPLETE: {note}")
    for p in sorted(x for x in root.rglob("*") if x.is_file() and x.name != "MANIFEST"):
        lines.append(f"{_sha256(p)}  {p.relative_to(root).as_posix()}")
    path = root / "MANIFEST"
    path.write_text("\n".join(lines) + "\n")
    return path


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_experiment(cfg: ExperimentConfig):
    """Evaluate every grid point on every split and keep the one with the best mean AUC.

    Writes, under ``<outdir>/<algorithm>/``: per-split ranked lists and
    metrics, ``report.json`` / ``report.tsv`` for the winner,
    ``grid_summary.tsv``, ``grid_auc.png`` and a ``MANIFEST``.
    Returns ``(best_report, all_reports)``.
    """
    cfg.validate()
    root = Path(cfg.outdir) / cfg.algorithm
    root.mkdir(parents=True, exist_ok=True)
    try:
        graph = _stage("ingest", load_graph, cfg)
        splits = _stage("split", split, graph, cfg.split_spec())
        fps = [fingerprint(t) for _, t in splits]
        user_pos, item_pos = _stage("positions", resolve_positions, cfg, graph)
        points = cfg.grid()
        tasks = [(cfg, p, rep, tr, te, user_pos, item_pos, cfg.outdir)
                 for p in points for rep, (tr, te) in enumerate(splits)]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = _stage("evaluate", lambda: list(pool.map(_task, tasks)))
        else:
            results = _stage("evaluate", lambda: [_task(t) for t in tasks])

        reports = []
        n = len(splits)
        for i, p in enumerate(points):
            reports.append(EvalReport(
                algorithm=cfg.algorithm,
                hyperparameters={**p, "walk_length": cfg.walk_length, "iterations": cfg.iterations,
                                 "gridpoint": gridpoint_name(p)},
                seeds={"seed": cfg.seed, "split_reps": list(range(n))},
                per_split=results[i * n:(i + 1) * n],
                fingerprints=fps,
            ))
        best = max(range(len(reports)), key=lambda i: (reports[i].mean["AUC"], -i))
        _stage("report", _write_reports, root, reports, best)
    except Exception as exc:
        write_manifest(root, complete=False, note=str(exc))
        raise
    write_manifest(root)
    return reports[best], reports


def _write_reports(root: Path, reports: list[EvalReport], best: int):
    from .plotting import plot_grid

    (root / "report.json").write_text(reports[best].to_json())
    (root / "report.tsv").write_text(reports[best].to_tsv())
    keys = list(reports[0].mean)
    with open(root / "grid_summary.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gridpoint\tselected\t" + "\t".join(keys) + "\n")
        for i, r in enumerate(reports):
            vals = "\t".join(f"{r.mean[k]:.6g}" for k in keys)
            fh.write(f"{r.hyperparameters['gridpoint']}\t{int(i == best)}\t{vals}\n")
    plot_grid([r.hyperparameters["gridpoint"] for r in reports],
              [r.mean["AUC"] for r in reports], best, root / "grid_auc.png")


def compare_runs(report_a: EvalReport, report_b: EvalReport, metrics=("RecRange@10",),
                 positions_a=None, positions_b=None) -> list[dict]:
    """Welch one-tailed tests (a > b) per metric over splits, plus an optional KS row.

    ``positions_a`` / ``positions_b`` are pooled samples of recommended-item
    positions; when both are given a KS row is appended.
    """
    if report_a.fingerprints != report_b.fingerprints:
        raise SplitMismatchError("runs were evaluated on different splits")
    rows = []
    for m in metrics:
        a, b = report_a.values(m), report_b.values(m)
        try:
            w = welch_t_one_tailed(a, b)
            t, df, p = w.t, w.df, w.p_value
        except ValueError:
            t = df = p = float("nan")
        rows.append({"test": "welch", "metric": m, "mean_a": float(np.mean(a)), "mean_b": float(np.mean(b)),
                     "statistic": t, "df": df, "p_value": p, "stars": stars(p)})
    if positions_a is not None and positions_b is not None:
        ks = ks_two_sample(positions_a, positions_b)
        rows.append({"test": "ks", "metric": "positions@10", "mean_a": float(np.mean(positions_a)),
                     "mean_b": float(np.mean(positions_b)), "statistic": ks.statistic, "df": float("nan"),
                     "p_value": ks.p_value, "stars": stars(ks.p_value)})
    return rows


def write_comparison_tsv(path, rows: list[dict]) -> None:
    cols = ["test", "metric", "mean_a", "mean_b", "statistic", "df", "p_value", "stars"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in rows:
            fh.write("\t".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")


def write_splits(outdir, graph: FeedbackGraph, splits) -> list[str]:
    """``split<r>/train.tsv`` and ``test.tsv`` per repetition plus ``fingerprints.tsv``."""
    outdir = Path(outdir)
    fps = []
    for rep, (train, test) in enumerate(splits):
        d = outdir / f"split{rep}"
        d.mkdir(parents=True, exist_ok=True)
        write_edges_tsv(d / "train.tsv", train)
        write_edges_tsv(d / "test.tsv", graph, test)
        fps.append(fingerprint(test))
    (outdir / "fingerprints.tsv").write_text("".join(f"split{r}\t{f}\n" for r, f in enumerate(fps)))
    return fps
