from collections import Counter

import numpy as np
import pytest

from rcgnn.datasets import (
    DatasetParseError,
    attach_motif,
    generate_ba3motif,
    generate_ba_graph,
    generate_multimotif,
    load_dataset,
    save_dataset,
)
from rcgnn.graphs import MOTIFS, is_connected


def graphs_equal(a, b):
    return (
        a.node_count == b.node_count
        and a.edges == b.edges
        and np.array_equal(a.node_features, b.node_features)
        and a.label == b.label
        and a.graph_id == b.graph_id
        and (
            (a.gt_edge_mask is None and b.gt_edge_mask is None)
            or np.array_equal(a.gt_edge_mask, b.gt_edge_mask)
        )
    )


class TestBAGenerator:
    def test_m1_is_tree(self):
        g = generate_ba_graph(3, 1, seed=0)
        assert g.node_count == 3
        assert g.edge_count == 2

    def test_benchmark_scale_node_count(self):
        # 22 nodes is the benchmark's average size; m=1 forces n-1 edges
        g = generate_ba_graph(22, 1, seed=7)
        assert g.node_count == 22
        assert g.edge_count == 21

    def test_determinism(self):
        a = generate_ba_graph(10, 2, seed=3)
        b = generate_ba_graph(10, 2, seed=3)
        assert graphs_equal(a, b)

    def test_connected(self):
        for seed in range(10):
            g = generate_ba_graph(15, 2, seed=seed)
            assert is_connected(g.node_count, g.edges)

    def test_rejects_too_small_n(self):
        with pytest.raises(ValueError, match="n >= m\\+1"):
            generate_ba_graph(2, 2, seed=0)
        with pytest.raises(ValueError, match="m must be >= 1"):
            generate_ba_graph(5, 0, seed=0)

    def test_gt_mask_all_false(self):
        g = generate_ba_graph(8, 1, seed=1)
        assert not g.gt_edge_mask.any()


class TestAttachMotif:
    @pytest.mark.parametrize(
        "kind,gt_edges", [("house", 6), ("cycle", 5), ("grid", 12)]
    )
    def test_counts(self, kind, gt_edges):
        base = generate_ba_graph(10, 1, seed=4)
        g = attach_motif(base, MOTIFS[kind], seed=9)
        assert g.node_count == 10 + MOTIFS[kind].node_count
        assert g.edge_count == base.edge_count + len(MOTIFS[kind].edges) + 1
        assert int(g.gt_edge_mask.sum()) == gt_edges

    def test_bridge_not_in_gt(self):
        base = generate_ba_graph(6, 1, seed=2)
        g = attach_motif(base, MOTIFS["cycle"], seed=5)
        # gt-positive edges live entirely inside the planted copy
        for (u, v), flag in zip(g.edges, g.gt_edge_mask):
            if flag:
                assert u >= 6 and v >= 6

    def test_gt_edges_form_the_motif(self):
        base = generate_ba_graph(7, 1, seed=0)
        g = attach_motif(base, MOTIFS["house"], seed=1)
        motif_edges = {
            (min(u, v) + 7, max(u, v) + 7) for u, v in MOTIFS["house"].edges
        }
        assert g.gt_edges() == motif_edges

    def test_label_is_kind_class(self):
        base = generate_ba_graph(5, 1, seed=0)
        assert attach_motif(base, MOTIFS["house"], seed=0).label == 0
        assert attach_motif(base, MOTIFS["cycle"], seed=0).label == 1
        assert attach_motif(base, MOTIFS["grid"], seed=0).label == 2

    def test_result_connected(self):
        base = generate_ba_graph(9, 1, seed=3)
        g = attach_motif(base, MOTIFS["grid"], seed=7)
        assert is_connected(g.node_count, g.edges)


class TestBA3Motif:
    def test_balance_300(self):
        ds = generate_ba3motif(300, seed=7)
        hist = Counter(g.label for g in ds.graphs)
        assert hist == {0: 100, 1: 100, 2: 100}

    def test_three_classes(self):
        ds = generate_ba3motif(30, seed=0)
        assert ds.num_classes == 3

    def test_determinism(self):
        a = generate_ba3motif(30, seed=5)
        b = generate_ba3motif(30, seed=5)
        assert all(graphs_equal(x, y) for x, y in zip(a.graphs, b.graphs))
        assert a.splits == b.splits

    def test_splits_partition_and_explain_subset(self):
        ds = generate_ba3motif(60, seed=1)
        train, val, test = (set(ds.splits[k]) for k in ("train", "val", "test"))
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == {g.graph_id for g in ds.graphs}
        assert set(ds.splits["explain"]) == test

    def test_split_proportions(self):
        ds = generate_ba3motif(100, seed=2)
        assert len(ds.splits["train"]) == 70
        assert len(ds.splits["val"]) == 10
        assert len(ds.splits["test"]) == 20

    def test_constant_features_dim8(self):
        ds = generate_ba3motif(9, seed=3)
        for g in ds.graphs:
            assert g.node_features.shape == (g.node_count, 8)
            assert np.all(g.node_features == 1.0)


class TestMultiMotif:
    def test_each_class_has_multiple_gt_edge_counts(self):
        ds = generate_multimotif(120, motifs_per_class=2, seed=4)
        for cls in range(3):
            counts = {int(g.gt_edge_mask.sum()) for g in ds.graphs if g.label == cls}
            assert len(counts) >= 2, f"class {cls} has uniform gt edge counts"

    def test_first_class_pool_is_cycle_and_house(self):
        ds = generate_multimotif(120, motifs_per_class=2, seed=4)
        counts = {int(g.gt_edge_mask.sum()) for g in ds.graphs if g.label == 0}
        assert counts == {5, 6}

    def test_determinism(self):
        a = generate_multimotif(30, seed=8)
        b = generate_multimotif(30, seed=8)
        assert all(graphs_equal(x, y) for x, y in zip(a.graphs, b.graphs))

    def test_rejects_bad_pool_size(self):
        with pytest.raises(ValueError, match="motifs_per_class"):
            generate_multimotif(30, motifs_per_class=1, seed=0)


class TestRoundTrip:
    def test_save_load_equality(self, tmp_path):
        ds = generate_ba3motif(50, seed=9)
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.num_classes == ds.num_classes
        assert back.splits == ds.splits
        assert len(back.graphs) == len(ds.graphs)
        assert all(graphs_equal(a, b) for a, b in zip(ds.graphs, back.graphs))

    def test_round_trip_multimotif_many(self, tmp_path):
        ds = generate_multimotif(50, seed=10)
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert all(graphs_equal(a, b) for a, b in zip(ds.graphs, back.graphs))

    def test_comment_line_skipped(self, tmp_path):
        ds = generate_ba3motif(9, seed=0)
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path, header_comment="provenance goes here")
        first = path.read_text().splitlines()[0]
        assert first.startswith("# ")
        back = load_dataset(path)
        assert len(back.graphs) == 9

    def test_bad_edge_index_is_parse_error(self, tmp_path):
        ds = generate_ba3motif(9, seed=0)
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace('"n":', '"n_bogus":', 1)
        bad = tmp_path / "bad.jsonl"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetParseError, match="line 2"):
            load_dataset(bad)

    def test_edge_out_of_range_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        header = '{"num_classes":1,"d":2,"splits":{"train":[0],"val":[],"test":[],"explain":[]}}'
        rec = '{"id":0,"n":2,"edges":[[0,7]],"x":[[1,1],[1,1]],"y":0}'
        path.write_text(header + "\n" + rec + "\n")
        with pytest.raises(DatasetParseError, match="line 2"):
            load_dataset(path)

    def test_empty_file_no_records(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetParseError, match="no records"):
            load_dataset(path)

    def test_header_only_no_records(self, tmp_path):
        path = tmp_path / "h.jsonl"
        path.write_text('{"num_classes":1,"d":2,"splits":{"train":[],"val":[],"test":[],"explain":[]}}\n')
        with pytest.raises(DatasetParseError, match="no records"):
            load_dataset(path)
