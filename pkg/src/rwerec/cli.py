"""Command line entry point: ``rwerec <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ALGORITHMS, ConfigError, ExperimentConfig, load_config
from .data import FORMATS, DataError, iter_dataset, write_edges_tsv
from .experiment import (SplitMismatchError, StageError, compare_runs, make_recommender,
                         run_experiment, write_comparison_tsv, write_splits)
from .graph import EmptyGraphError, build_graph
from .ideology import (DegenerateDataError, EndorsementData, FitConfig, align_sign, classify, fit,
                       read_positions_tsv, write_model_tsv)
from .metrics import (AccuracyAccumulator, EvalReport, histogram_export, ideological_battery,
                      longtail_metrics, rec_range, write_histogram_tsv)
from .recommenders import read_ranked_tsv, write_ranked_tsv
from .split import SplitSpec, group_by_user, split

EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("rwerec")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _load_edges(path, fmt="tsv-edges", min_user=1, min_item=1):
    return build_graph(((r.user_id, r.item_id) for r in iter_dataset(path, fmt)), min_user, min_item)


def _positions_for(graph, path, item_kind):
    table = read_positions_tsv(path)

    def look(kind, ids):
        missing = [i for i in ids if str(i) not in table[kind]]
        if missing:
            raise DataError(f"{kind} {missing[0]!r} has no position in {path}")
        return np.array([table[kind][str(i)] for i in ids])

    return look("user", graph.user_ids), look(item_kind, graph.item_ids)


def cmd_ingest(args):
    g = _load_edges(args.input, args.format, args.min_user_degree, args.min_item_degree)
    write_edges_tsv(args.output, g)
    print(f"users\t{g.num_users}\nitems\t{g.num_items}\nedges\t{g.num_edges}")


def cmd_split(args):
    g = _load_edges(args.input, args.format)
    spec = SplitSpec(args.test_fraction, args.min_interactions, args.repetitions, args.seed)
    fps = write_splits(args.outdir, g, split(g, spec))
    for r, f in enumerate(fps):
        print(f"split{r}\t{f}")


def cmd_fit_ideology(args):
    elite = [(r.user_id, r.item_id, r.weight) for r in iter_dataset(args.elite_edges, "tsv-edges")]
    content = [(r.user_id, r.item_id, r.weight) for r in iter_dataset(args.content_edges, "tsv-edges")] \
        if args.content_edges else []
    data = EndorsementData.from_records(elite, content, args.weighting)
    cfg = FitConfig(lam=args.lam, mu=args.mu, learning_rate=args.learning_rate,
                    max_epochs=args.max_epochs, tolerance=args.tolerance, seed=args.seed)
    model = fit(data, cfg)
    if args.anchor:
        kind, _, eid = args.anchor.partition(":")
        ids = {"user": data.user_ids, "elite": data.elite_ids, "content": data.content_ids}.get(kind)
        if ids is None or eid not in ids:
            raise DataError(f"anchor {args.anchor!r} not found")
        model = align_sign(model, (kind, ids.index(eid)), args.anchor_sign)
    write_model_tsv(args.output, model, data)
    status = "converged" if model.converged else "iteration cap reached"
    print(f"epochs\t{model.epochs}\nstatus\t{status}\nlog_likelihood\t{model.history[-1]:.10g}")


def cmd_recommend(args):
    if args.catalog:
        full = _load_edges(args.catalog)
        uidx, iidx = full._user_index, full._item_index
        try:
            edges = [(uidx[r.user_id], iidx[r.item_id]) for r in iter_dataset(args.train, "tsv-edges")]
        except KeyError as exc:
            raise DataError(f"training id {exc.args[0]!r} is not in the catalog") from None
        g = full.with_edges(np.array(edges, dtype=np.int64).reshape(-1, 2))
    else:
        g = _load_edges(args.train)
    cfg = ExperimentConfig(dataset=args.train, algorithm=args.algorithm, walk_length=args.walk_length,
                           iterations=args.iterations, epsilon=args.epsilon, item_kind=args.item_kind)
    point = {"beta": args.beta, "nu": args.nu, "neighbors": args.neighbors, "epsilon": args.epsilon}
    user_pos = item_pos = None
    if args.algorithm == "rwe-b":
        if not args.positions:
            raise UsageError("rwe-b needs --positions")
        user_pos, item_pos = _positions_for(g, args.positions, args.item_kind)
    rec = make_recommender(cfg, point, g, user_pos, item_pos)
    k = g.num_items if args.full else args.k
    write_ranked_tsv(args.output, rec.recommend(k=k), g.user_ids, g.item_ids)


def cmd_evaluate(args):
    train_recs = [(r.user_id, r.item_id) for r in iter_dataset(args.train, "tsv-edges")]
    test_recs = [(r.user_id, r.item_id) for r in iter_dataset(args.test, "tsv-edges")]
    full = build_graph(train_recs + test_recs)
    uidx, iidx = full._user_index, full._item_index
    train = full.with_edges(np.array([(uidx[u], iidx[i]) for u, i in train_recs]))
    test = np.array([(uidx[u], iidx[i]) for u, i in test_recs], dtype=np.int64).reshape(-1, 2)
    ranked = read_ranked_tsv(args.ranked, uidx, iidx)
    acc = AccuracyAccumulator()
    for u, items in sorted(group_by_user(test).items()):
        if u not in ranked:
            raise DataError(f"no ranking for user {full.user_ids[u]!r}")
        acc.add(ranked[u], items)
    metrics = acc.result()
    metrics.update(longtail_metrics(ranked, train, seed=args.seed))
    if args.positions:
        user_pos, item_pos = _positions_for(train, args.positions, args.item_kind)
        metrics["RecRange@10"] = rec_range(ranked, item_pos, 10)
        metrics.update(ideological_battery(ranked, train, user_pos, item_pos, 10))
    report = EvalReport(args.name, {}, {"seed": args.seed}, [metrics])
    if args.output:
        Path(args.output).write_text(report.to_json())
        Path(args.output).with_suffix(".tsv").write_text(report.to_tsv())
    sys.stdout.write(report.to_tsv())


def cmd_grid(args):
    overrides = {
        "dataset": args.dataset, "format": args.format, "algorithm": args.algorithm,
        "betas": args.betas, "nus": args.nus, "epsilon": args.epsilon, "neighbors": args.neighbors,
        "walk_length": args.walk_length, "iterations": args.iterations, "seed": args.seed,
        "repetitions": args.repetitions, "test_fraction": args.test_fraction,
        "min_interactions": args.min_interactions, "positions": args.positions,
        "item_kind": args.item_kind, "outdir": args.outdir, "jobs": args.jobs,
    }
    cfg = load_config(args.config, overrides)
    best, _ = run_experiment(cfg)
    sys.stdout.write(f"# selected {best.hyperparameters['gridpoint']}\n")
    sys.stdout.write(best.to_tsv())


def _pooled_positions(run_dir: Path, report: EvalReport, positions: str, item_kind: str):
    table = read_positions_tsv(positions)[item_kind]
    vals = []
    for rep in range(len(report.per_split)):
        path = run_dir / report.hyperparameters["gridpoint"] / f"split{rep}" / "ranked.tsv"
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                _, rank, item, _ = line.rstrip("\n").split("\t")
                if int(rank) <= 10:
                    if item not in table:
                        raise DataError(f"item {item!r} has no position")
                    vals.append(table[item])
    return np.array(vals)


def cmd_compare(args):
    dirs = [Path(args.run_a), Path(args.run_b)]
    reports = [EvalReport.from_json((d / "report.json").read_text()) for d in dirs]
    pa = pb = None
    if args.positions:
        pa, pb = (_pooled_positions(d, r, args.positions, args.item_kind) for d, r in zip(dirs, reports))
    rows = compare_runs(reports[0], reports[1], args.metric or ["RecRange@10"], pa, pb)
    out = args.output or "-"
    if out == "-":
        write_comparison_tsv("/dev/stdout", rows)
    else:
        write_comparison_tsv(out, rows)
        Path(out).with_suffix(".json").write_text(json.dumps(rows, indent=2, default=str) + "\n")


def cmd_export_hist(args):
    from .plotting import plot_position_hist

    table = read_positions_tsv(args.positions)
    values, classes = [], []
    per_user: dict = {}
    with open(args.ranked, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise DataError(f"{args.ranked}:{lineno}: expected 4 tab-separated fields")
            uid, rank, item, _ = parts
            if int(rank) > args.k:
                continue
            if uid not in table["user"]:
                raise DataError(f"user {uid!r} has no position")
            if item not in table[args.item_kind]:
                raise DataError(f"item {item!r} has no position")
            per_user.setdefault(uid, []).append(table[args.item_kind][item])
    for uid, pos in per_user.items():
        cls = classify(table["user"][uid])
        if args.per_user_mean:
            values.append(float(np.mean(pos)))
            classes.append(cls)
        else:
            values.extend(pos)
            classes.extend([cls] * len(pos))
    rng = tuple(args.range) if args.range else None
    rows = histogram_export(values, classes, args.bins, rng)
    write_histogram_tsv(args.output, rows)
    fig = args.figure or str(Path(args.output).with_suffix(".png"))
    plot_position_hist(rows, fig, title=Path(args.ranked).name)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rwerec", description="Random walks with erasure: recommend, evaluate, compare.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("ingest", help="parse a dataset, filter degrees, write tsv-edges")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=FORMATS, default="tsv-edges")
    s.add_argument("--min-user-degree", type=int, default=1)
    s.add_argument("--min-item-degree", type=int, default=1)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="write repeated per-user train/test splits")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=FORMATS, default="tsv-edges")
    s.add_argument("--outdir", required=True)
    s.add_argument("--test-fraction", type=float, default=0.3)
    s.add_argument("--min-interactions", type=int, default=4)
    s.add_argument("--repetitions", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("fit-ideology", help="estimate ideal points from endorsement edges")
    s.add_argument("--elite-edges", required=True, help="user<TAB>elite[<TAB>count]")
    s.add_argument("--content-edges", help="user<TAB>content[<TAB>count]")
    s.add_argument("--output", required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=0.1)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--learning-rate", type=float, default=0.05)
    s.add_argument("--max-epochs", type=int, default=500)
    s.add_argument("--tolerance", type=float, default=1e-6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--weighting", choices=("binary", "log"), default="binary")
    s.add_argument("--anchor", help="kind:id whose position sign is fixed, e.g. elite:SenSanders")
    s.add_argument("--anchor-sign", type=int, choices=(-1, 1), default=-1)
    s.set_defaults(func=cmd_fit_ideology)

    s = sub.add_parser("recommend", help="write top-k ranked lists for every user")
    s.add_argument("--train", required=True)
    s.add_argument("--catalog", help="edges file fixing the user/item index space (e.g. the unsplit dataset), "
                                     "so items seen only in test are still ranked")
    s.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--nu", type=float, default=1.0)
    s.add_argument("--epsilon", type=float, default=0.9)
    s.add_argument("--neighbors", type=int, default=100)
    s.add_argument("--walk-length", type=int, default=3)
    s.add_argument("--iterations", type=int, default=10)
    s.add_argument("--positions")
    s.add_argument("--item-kind", choices=("content", "elite"), default="content")
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--full", action="store_true", help="rank every non-training item (needed for AUC/MR)")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_recommend)

    s = sub.add_parser("evaluate", help="metrics for a ranked-list TSV against train/test edges")
    s.add_argument("--ranked", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--positions")
    s.add_argument("--item-kind", choices=("content", "elite"), default="content")
    s.add_argument("--name", default="external")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("grid", help="grid search over splits, select by mean AUC")
    s.add_argument("--config", help="flat key = value TOML file")
    s.add_argument("--dataset")
    s.add_argument("--format", choices=FORMATS)
    s.add_argument("--algorithm", choices=ALGORITHMS)
    s.add_argument("--betas", type=_floats)
    s.add_argument("--nus", type=_floats)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--neighbors", type=_ints)
    s.add_argument("--walk-length", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--repetitions", type=int)
    s.add_argument("--test-fraction", type=float)
    s.add_argument("--min-interactions", type=int)
    s.add_argument("--positions")
    s.add_argument("--item-kind", choices=("content", "elite"))
    s.add_argument("--outdir")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("compare", help="Welch and KS tests between two grid runs")
    s.add_argument("--run-a", required=True, help="<outdir>/<algorithm> of the first run")
    s.add_argument("--run-b", required=True)
    s.add_argument("--metric", action="append")
    s.add_argument("--positions")
    s.add_argument("--item-kind", choices=("content", "elite"), default="content")
    s.add_argument("--output")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("export-hist", help="per-class histogram of recommended-item positions")
    s.add_argument("--ranked", required=True)
    s.add_argument("--positions", required=True)
    s.add_argument("--item-kind", choices=("content", "elite"), default="content")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--per-user-mean", action="store_true")
    s.add_argument("--output", required=True)
    s.add_argument("--figure", help="PNG path (default: next to --output)")
    s.set_defaults(func=cmd_export_hist)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"rwerec {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        code = EXIT_USAGE if isinstance(exc.cause, ConfigError) else EXIT_DATA
        print(f"rwerec {args.command}: {exc}", file=sys.stderr)
        return code
    except (DataError, EmptyGraphError, DegenerateDataError, SplitMismatchError,
            FileNotFoundError, KeyError, ValueError) as exc:
        print(f"rwerec {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
