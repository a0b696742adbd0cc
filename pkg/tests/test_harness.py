import json
from pathlib import Path

import numpy as np
import pytest

from rwerec.cli import main
from rwerec.config import ConfigError, ExperimentConfig, gridpoint_name, load_config
from rwerec.data import DataError, parse_dataset
from rwerec.experiment import SplitMismatchError, compare_runs, run_experiment
from rwerec.metrics import EvalReport

from conftest import polarized_interactions


def _write(path, lines):
    Path(path).write_text("".join(line + "\n" for line in lines))
    return str(path)


def popularity_dataset(seed=0, users=80, popular=6, niche=60):
    """Every user likes most popular items plus a few random niche ones, so held-out
    edges are dominated by popular items and degree penalties hurt accuracy."""
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(users):
        for j in range(popular):
            if rng.random() < 0.8:
                lines.append(f"u{u}\tp{j}")
        for j in rng.choice(niche, 2, replace=False):
            lines.append(f"u{u}\tn{j}")
    return lines


def polarized_files(tmp_path, seed=0):
    inter, upos, ipos = polarized_interactions(seed)
    edges = _write(tmp_path / "polar.tsv", [f"{u}\t{i}" for u, i in inter])
    rows = [f"user\t{u}\t{p!r}\t0" for u, p in upos.items()] + [f"content\t{i}\t{p!r}\t0" for i, p in ipos.items()]
    return edges, _write(tmp_path / "positions.tsv", rows)


class TestParse:
    def test_movielens(self, tmp_path):
        recs = parse_dataset(_write(tmp_path / "r.dat", ["1::1193::5::978300760"]), "movielens-dat")
        assert (recs[0].user_id, recs[0].item_id) == ("1", "1193")

    def test_tsv_with_count(self, tmp_path):
        rec, = parse_dataset(_write(tmp_path / "e.tsv", ["u7\tcontentX\t3"]), "tsv-edges")
        assert (rec.user_id, rec.item_id, rec.weight) == ("u7", "contentX", 3)

    def test_empty(self, tmp_path):
        assert parse_dataset(_write(tmp_path / "e.tsv", []), "tsv-edges") == []

    def test_malformed_line_number(self, tmp_path):
        path = _write(tmp_path / "e.tsv", ["a\tb", "oops"])
        with pytest.raises(DataError, match=":2:"):
            parse_dataset(path, "tsv-edges")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DataError, match="unknown dataset format"):
            parse_dataset(_write(tmp_path / "e.tsv", []), "csv")


class TestConfig:
    def test_flat_toml_and_overrides(self, tmp_path):
        p = _write(tmp_path / "c.toml", ['dataset = "x.tsv"', 'algorithm = "rwe-d"', "betas = [0.0, 0.7]",
                                        "nus = 0.7", "seed = 4"])
        cfg = load_config(p, {"seed": 9, "outdir": None})
        assert cfg.betas == [0.0, 0.7] and cfg.nus == [0.7] and cfg.seed == 9
        assert [gridpoint_name(g) for g in cfg.grid()] == ["beta=0_nu=0.7", "beta=0.7_nu=0.7"]

    def test_nested_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="nested"):
            load_config(_write(tmp_path / "c.toml", ["[grid]", "betas = [1.0]"]))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(_write(tmp_path / "c.toml", ["bogus = 1"]))

    def test_rwe_b_needs_positions(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(dataset="x", algorithm="rwe-b").validate()

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(dataset="x", algorithm="rp3b", betas=[]).validate()


class TestRunExperiment:
    def test_single_point(self, tmp_path):
        data = _write(tmp_path / "d.tsv", popularity_dataset())
        best, reports = run_experiment(ExperimentConfig(dataset=data, algorithm="p3", outdir=str(tmp_path / "o")))
        assert len(reports) == 1 and len(best.per_split) == 3
        root = tmp_path / "o" / "p3"
        for name in ("report.json", "report.tsv", "grid_summary.tsv", "grid_auc.png", "MANIFEST"):
            assert (root / name).exists()
        assert (root / "default" / "split2" / "ranked.tsv").exists()
        assert not (root / "MANIFEST").read_text().startswith("# INCOMPLETE")

    def test_argmax_selection(self, tmp_path):
        data = _write(tmp_path / "d.tsv", popularity_dataset())
        cfg = ExperimentConfig(dataset=data, algorithm="rp3b", betas=[2.0, 0.0], outdir=str(tmp_path / "o"))
        best, reports = run_experiment(cfg)
        aucs = {r.hyperparameters["beta"]: r.mean["AUC"] for r in reports}
        assert aucs[0.0] > aucs[2.0]
        assert best.hyperparameters["beta"] == 0.0
        summary = (tmp_path / "o" / "rp3b" / "grid_summary.tsv").read_text().splitlines()
        assert summary[2].startswith("beta=0\t1")

    def test_same_seed_same_json(self, tmp_path):
        data = _write(tmp_path / "d.tsv", popularity_dataset())
        outs = []
        for run in ("a", "b"):
            run_experiment(ExperimentConfig(dataset=data, algorithm="rwe-d", betas=[0.7], nus=[0.7],
                                            outdir=str(tmp_path / run)))
            outs.append((tmp_path / run / "rwe-d"))
        for name in ("report.json", "MANIFEST"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_fingerprints_shared_across_algorithms(self, tmp_path):
        data = _write(tmp_path / "d.tsv", popularity_dataset())
        a, _ = run_experiment(ExperimentConfig(dataset=data, algorithm="p3", outdir=str(tmp_path / "o")))
        b, _ = run_experiment(ExperimentConfig(dataset=data, algorithm="itemknn", neighbors=[5],
                                               outdir=str(tmp_path / "o")))
        assert a.fingerprints == b.fingerprints

    def test_failure_leaves_incomplete_manifest(self, tmp_path):
        bad = _write(tmp_path / "d.tsv", ["u\ti", "broken"])
        with pytest.raises(Exception, match=r"\[ingest\]"):
            run_experiment(ExperimentConfig(dataset=bad, outdir=str(tmp_path / "o")))
        assert (tmp_path / "o" / "p3" / "MANIFEST").read_text().startswith("# INCOMPLETE")


def _report(values, fps=("x",)):
    return EvalReport("a", {}, {}, [{"RecRange@10": v} for v in values], list(fps))


class TestCompare:
    def test_identical_runs(self):
        rows = compare_runs(_report([1.0, 1.2, 1.1]), _report([1.0, 1.2, 1.1]), positions_a=[0.1, 0.5],
                            positions_b=[0.1, 0.5])
        assert rows[0]["stars"] == "" and rows[0]["p_value"] == pytest.approx(0.5)
        assert rows[1]["statistic"] == 0 and rows[1]["stars"] == ""

    def test_separated_runs(self):
        rows = compare_runs(_report([3.0, 3.01, 3.02]), _report([1.0, 1.01, 1.02]))
        assert rows[0]["stars"] == "***"

    def test_welch_df_three_splits(self):
        rows = compare_runs(_report([3.0, 3.1, 3.2]), _report([1.0, 1.1, 1.2]))
        assert rows[0]["df"] == pytest.approx(4.0)

    def test_fingerprint_mismatch(self):
        with pytest.raises(SplitMismatchError):
            compare_runs(_report([1.0, 2.0], ["x"]), _report([1.0, 2.0], ["y"]))


class TestCli:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["grid", "--help"])
        assert e.value.code == 0

    def test_usage_errors(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as e:
            main(["recommend"])
        assert e.value.code == 1
        with pytest.raises(SystemExit) as e:
            main(["nope"])
        assert e.value.code == 1
        data = _write(tmp_path / "d.tsv", popularity_dataset())
        assert main(["grid", "--dataset", data, "--algorithm", "rwe-b", "--outdir", str(tmp_path / "o")]) == 1

    def test_data_errors(self, tmp_path, capsys):
        bad = _write(tmp_path / "d.tsv", ["only-one-field"])
        assert main(["ingest", "--input", bad, "--output", str(tmp_path / "x.tsv")]) == 2
        assert "d.tsv:1" in capsys.readouterr().err
        assert main(["ingest", "--input", str(tmp_path / "missing.tsv"), "--output", str(tmp_path / "x")]) == 2
        assert main(["grid", "--dataset", bad, "--outdir", str(tmp_path / "o")]) == 2

    def test_ingest_split_recommend_evaluate(self, tmp_path, capsys):
        dat = _write(tmp_path / "r.dat", [f"{u}::{j}::4::0" for u, j in
                                          (line.split("\t") for line in popularity_dataset())])
        edges = str(tmp_path / "edges.tsv")
        assert main(["ingest", "--input", dat, "--format", "movielens-dat", "--output", edges]) == 0
        assert main(["split", "--input", edges, "--outdir", str(tmp_path / "s"), "--repetitions", "1"]) == 0
        train, test = tmp_path / "s" / "split0" / "train.tsv", tmp_path / "s" / "split0" / "test.tsv"
        assert (tmp_path / "s" / "fingerprints.tsv").exists()
        ranked = str(tmp_path / "ranked.tsv")
        assert main(["recommend", "--train", str(train), "--catalog", edges, "--algorithm", "rp3b",
                     "--beta", "0.3", "--full", "--output", ranked]) == 0
        capsys.readouterr()
        out = str(tmp_path / "eval.json")
        assert main(["evaluate", "--ranked", ranked, "--train", str(train), "--test", str(test),
                     "--output", out]) == 0
        assert "AUC" in capsys.readouterr().out
        rep = json.loads(Path(out).read_text())
        assert 0.5 < rep["mean"]["AUC"] <= 1

    def test_fit_ideology(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        lines = [f"u{u}\te{e}\t{int(rng.integers(1, 4))}" for u in range(30) for e in range(6)
                 if rng.random() < 0.4 or e == u % 6]
        elite = _write(tmp_path / "elite.tsv", lines)
        out = str(tmp_path / "model.tsv")
        assert main(["fit-ideology", "--elite-edges", elite, "--output", out, "--max-epochs", "30",
                     "--anchor", "elite:e0", "--anchor-sign", "1"]) == 0
        rows = [r.split("\t") for r in Path(out).read_text().splitlines()]
        e0 = [r for r in rows if r[0] == "elite" and r[1] == "e0"][0]
        assert float(e0[2]) >= 0
        assert main(["fit-ideology", "--elite-edges", elite, "--output", out, "--anchor", "elite:zzz"]) == 2

    def test_grid_compare_export(self, tmp_path, capsys):
        edges, positions = polarized_files(tmp_path)
        out = str(tmp_path / "runs")
        common = ["--dataset", edges, "--positions", positions, "--outdir", out]
        assert main(["grid", "--algorithm", "p3", *common]) == 0
        assert main(["grid", "--algorithm", "rwe-b", "--nus", "1.0", *common]) == 0
        capsys.readouterr()
        cmp_out = str(tmp_path / "cmp.tsv")
        assert main(["compare", "--run-a", f"{out}/rwe-b", "--run-b", f"{out}/p3", "--positions", positions,
                     "--output", cmp_out]) == 0
        rows = Path(cmp_out).read_text().splitlines()
        assert rows[0].startswith("test\tmetric") and rows[1].startswith("welch\tRecRange@10")
        assert rows[2].startswith("ks\t")
        ranked = f"{out}/rwe-b/epsilon=0.9_nu=1/split0/ranked.tsv"
        hist = str(tmp_path / "hist.tsv")
        assert main(["export-hist", "--ranked", ranked, "--positions", positions, "--output", hist,
                     "--range", "-2", "2"]) == 0
        assert Path(hist).read_text().startswith("class\tbin_lo")
        assert (tmp_path / "hist.png").read_bytes()[:4] == b"\x89PNG"
