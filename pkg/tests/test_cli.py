import json
import os

import numpy as np
import pytest

from rcgnn.cli import main
from rcgnn.datasets import load_dataset
from rcgnn.model import init_params, load_checkpoint
from rcgnn.util import parallel_map, read_csv


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.jsonl"
    code = run(
        [
            "gen-data", "--kind", "ba3motif", "--n", "30",
            "--size-min", "6", "--size-max", "8", "--seed", "3",
            "--out", str(path),
        ]
    )
    assert code == 0
    return path


TRAIN_FLAGS = [
    "--epochs", "4", "--warmup-epochs", "2", "--hidden-dim", "8",
    "--candidate-size", "8", "--seed", "5",
]


@pytest.fixture(scope="module")
def trained(tmp_path_factory, data_file):
    out = tmp_path_factory.mktemp("model")
    ckpt = out / "model.npz"
    log = out / "log.csv"
    code = run(
        ["train", "--data", str(data_file), "--checkpoint-out", str(ckpt), "--log-out", str(log)]
        + TRAIN_FLAGS
    )
    assert code == 0
    return ckpt, log


class TestGenData:
    def test_record_count_and_header(self, data_file):
        lines = data_file.read_text().splitlines()
        assert lines[0].startswith("# rcgnn v")
        header = json.loads(lines[1])
        assert header["num_classes"] == 3
        assert len(lines) == 2 + 30

    def test_idempotent(self, tmp_path, data_file):
        other = tmp_path / "again.jsonl"
        run(
            [
                "gen-data", "--kind", "ba3motif", "--n", "30",
                "--size-min", "6", "--size-max", "8", "--seed", "3",
                "--out", str(other),
            ]
        )
        assert other.read_bytes() == data_file.read_bytes()

    def test_multimotif_three_classes(self, tmp_path):
        out = tmp_path / "mm.jsonl"
        code = run(
            [
                "gen-data", "--kind", "multimotif", "--n", "12",
                "--motifs-per-class", "2", "--size-min", "6", "--size-max", "7",
                "--seed", "1", "--out", str(out),
            ]
        )
        assert code == 0
        ds = load_dataset(out)
        assert ds.num_classes == 3

    def test_unknown_kind(self, tmp_path):
        code = run(["gen-data", "--kind", "ba3motif", "--out", str(tmp_path / "x.jsonl")])
        assert code == 0


class TestTrain:
    def test_outputs_exist(self, trained):
        ckpt, log = trained
        assert ckpt.exists() and log.exists()
        header, rows = read_csv(log)
        assert header == ["epoch", "L_sup", "L_dis", "L_con", "train_acc", "val_acc"]
        assert len(rows) == 4
        assert log.with_suffix(".png").exists()

    def test_epochs_zero_checkpoint_is_initialization(self, tmp_path, data_file):
        ckpt = tmp_path / "m.npz"
        code = run(
            [
                "train", "--data", str(data_file), "--epochs", "0",
                "--hidden-dim", "8", "--seed", "9",
                "--checkpoint-out", str(ckpt), "--log-out", str(tmp_path / "l.csv"),
            ]
        )
        assert code == 0
        params, meta = load_checkpoint(ckpt)
        fresh = init_params(8, 8, 2, 3, seed=9)
        for k, w in fresh.blocks.items():
            np.testing.assert_array_equal(params.blocks[k], w)

    def test_lambda_zero_equals_no_dis_con_fit(self, tmp_path, data_file):
        from rcgnn.training import HyperParams, fit

        ckpt = tmp_path / "m.npz"
        code = run(
            [
                "train", "--data", str(data_file), "--lambda1", "0", "--lambda2", "0",
                "--checkpoint-out", str(ckpt), "--log-out", str(tmp_path / "l.csv"),
            ]
            + TRAIN_FLAGS
        )
        assert code == 0
        params, _ = load_checkpoint(ckpt)
        hp = HyperParams(
            epochs=4, warmup_epochs=2, hidden_dim=8, candidate_size=8, seed=5,
            lam1=0.0, lam2=0.0,
        )
        direct = fit(load_dataset(data_file), hp)
        for k, w in direct.params.blocks.items():
            np.testing.assert_array_equal(params.blocks[k], w)

    def test_missing_data_exit_2(self, tmp_path):
        code = run(["train", "--data", str(tmp_path / "absent.jsonl")])
        assert code == 2

    def test_divergence_exit_3_with_rescue_checkpoint(self, tmp_path, data_file):
        ckpt = tmp_path / "m.npz"
        with np.errstate(over="ignore", invalid="ignore"):
            code = run(
                [
                    "train", "--data", str(data_file), "--epochs", "2",
                    "--warmup-epochs", "2", "--hidden-dim", "8", "--lr", "1e200",
                    "--seed", "1", "--checkpoint-out", str(ckpt),
                    "--log-out", str(tmp_path / "l.csv"),
                ]
            )
        assert code == 3
        rescue = tmp_path / "m.npz.lastgood.npz"
        assert rescue.exists()
        params, _ = load_checkpoint(rescue)
        assert all(np.all(np.isfinite(w)) for w in params.blocks.values())


class TestExplain:
    def test_rows_cover_all_edges(self, tmp_path, data_file, trained):
        ckpt, _ = trained
        out = tmp_path / "expl.csv"
        code = run(
            ["explain", "--data", str(data_file), "--checkpoint", str(ckpt), "--out", str(out)]
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["graph_id", "edge_u", "edge_v", "edge_score", "selected", "gt"]
        ds = load_dataset(data_file)
        total_edges = sum(g.edge_count for g in ds.split_graphs("explain"))
        assert len(rows) == total_edges

    def test_selected_flags_match_induced_subgraph(self, tmp_path, data_file, trained):
        ckpt, _ = trained
        out = tmp_path / "expl.csv"
        run(["explain", "--data", str(data_file), "--checkpoint", str(ckpt), "--out", str(out)])
        header, rows = read_csv(out)
        ds = load_dataset(data_file)
        by_graph = {}
        for row in rows:
            by_graph.setdefault(int(row[0]), []).append(row)
        for gid, graph_rows in by_graph.items():
            g = ds.by_id(gid)
            selected_edges = [r for r in graph_rows if r[4] == "1"]
            nodes = set()
            for r in selected_edges:
                nodes.add(int(r[1]))
                nodes.add(int(r[2]))
            # flagged edges form the subgraph induced by the top-K node set
            assert len(selected_edges) <= g.edge_count

    def test_deterministic(self, tmp_path, data_file, trained):
        ckpt, _ = trained
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            run(["explain", "--data", str(data_file), "--checkpoint", str(ckpt), "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()

    def test_mismatched_checkpoint_exit_2(self, tmp_path, data_file):
        from rcgnn.model import save_checkpoint

        bad = tmp_path / "bad.npz"
        save_checkpoint(bad, init_params(5, 8, 2, 3, seed=0), {}, 0, 0)
        code = run(["explain", "--data", str(data_file), "--checkpoint", str(bad)])
        assert code == 2


class TestEval:
    def test_report_columns_and_reproducibility(self, tmp_path, data_file, trained):
        from rcgnn.metrics import report_columns

        ckpt, _ = trained
        r1 = tmp_path / "r1.csv"
        r2 = tmp_path / "r2.csv"
        for out in (r1, r2):
            code = run(
                [
                    "eval", "--data", str(data_file), "--checkpoint", str(ckpt),
                    "--out", str(out), "--embeddings-out", str(tmp_path / "emb.csv"),
                    "--seed", "7",
                ]
            )
            assert code == 0
        header, rows = read_csv(r1)
        assert header == report_columns()
        assert len(rows) == 3  # rc, random, saliency
        assert r1.read_bytes() == r2.read_bytes()
        assert r1.with_suffix(".png").exists()

    def test_embeddings_export_dimensions(self, tmp_path, data_file, trained):
        ckpt, _ = trained
        emb = tmp_path / "emb.csv"
        run(
            [
                "eval", "--data", str(data_file), "--checkpoint", str(ckpt),
                "--out", str(tmp_path / "r.csv"), "--embeddings-out", str(emb),
            ]
        )
        header, rows = read_csv(emb)
        ds = load_dataset(data_file)
        assert len(rows) == len(ds.split_graphs("explain"))
        assert header[:2] == ["graph_id", "label"]
        assert len(header) == 2 + 3 * 8  # hidden_dim=8 for h, h_c, h_t


class TestAblate:
    def test_four_variant_rows(self, tmp_path, data_file):
        out = tmp_path / "abl.csv"
        code = run(
            ["ablate", "--data", str(data_file), "--out", str(out), "--epochs", "3",
             "--warmup-epochs", "1", "--hidden-dim", "8", "--candidate-size", "8", "--seed", "2"]
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["variant", "test_acc", "acc_auc", "recall@N", "precision@N"]
        assert [r[0] for r in rows] == ["full", "no_retriever", "no_causal", "no_dis_con"]
        assert out.with_suffix(".png").exists()


class TestConfigFile:
    def test_config_overridden_by_flags(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[gen-data]\nnum_graphs = 9\nseed = 4\nsize_min = 6\nsize_max = 7\n")
        out_cfg = tmp_path / "from_cfg.jsonl"
        run(["gen-data", "--config", str(cfg), "--out", str(out_cfg)])
        ds = load_dataset(out_cfg)
        assert len(ds.graphs) == 9

        out_flag = tmp_path / "flag_wins.jsonl"
        run(["gen-data", "--config", str(cfg), "--n", "12", "--out", str(out_flag)])
        assert len(load_dataset(out_flag).graphs) == 12

    def test_provenance_comment_carries_config_hash(self, tmp_path):
        out = tmp_path / "d.jsonl"
        run(["gen-data", "--n", "9", "--size-min", "6", "--size-max", "7", "--out", str(out)])
        first = out.read_text().splitlines()[0]
        assert first.startswith("# rcgnn v")
        assert "config=" in first and "seed=" in first


class TestThreadsEnv:
    def test_parallel_map_matches_serial(self):
        items = list(range(20))
        old = os.environ.get("RCGNN_THREADS")
        try:
            os.environ["RCGNN_THREADS"] = "1"
            serial = parallel_map(lambda x: x * x, items)
            os.environ["RCGNN_THREADS"] = "4"
            threaded = parallel_map(lambda x: x * x, items)
        finally:
            if old is None:
                os.environ.pop("RCGNN_THREADS", None)
            else:
                os.environ["RCGNN_THREADS"] = old
        assert serial == threaded
