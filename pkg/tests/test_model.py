import numpy as np
import pytest

from rcgnn.graphs import Graph
from rcgnn.model import (
    NodeEmbeddings,
    ShapeError,
    classify,
    encode,
    encode_branches,
    init_params,
    load_checkpoint,
    predict,
    readout,
    save_checkpoint,
)


def path_graph(n, d=4):
    return Graph(n, [(i, i + 1) for i in range(n - 1)], np.ones((n, d)))


def random_graph(n, p, seed, d=4):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    feats = rng.normal(size=(n, d))
    return Graph(n, edges, feats)


def relabel(g, perm):
    """perm[i] = new index of old node i."""
    inv = np.argsort(perm)
    return Graph(
        g.node_count,
        [(perm[u], perm[v]) for u, v in g.edges],
        g.node_features[inv],
        label=g.label,
    )


class TestEncode:
    def test_isolated_node_zero_weights(self):
        g = Graph(1, [], np.ones((1, 4)))
        params = init_params(4, 8, 2, 3, seed=0)
        for name in params.blocks:
            params.blocks[name] = np.zeros_like(params.blocks[name])
        ne = encode(params, g)
        assert np.all(ne.values == 0.0)
        assert ne.layer == 2

    def test_permutation_equivariance(self):
        g = random_graph(7, 0.4, seed=1)
        params = init_params(4, 8, 2, 3, seed=2)
        perm = np.random.default_rng(3).permutation(7)
        g2 = relabel(g, perm)
        e1 = encode(params, g).values
        e2 = encode(params, g2).values
        np.testing.assert_allclose(e2[perm], e1, atol=1e-9)

    def test_disjoint_copies_match_single(self):
        g = random_graph(5, 0.5, seed=4)
        params = init_params(4, 8, 2, 3, seed=5)
        double = Graph(
            10,
            g.edges + [(u + 5, v + 5) for u, v in g.edges],
            np.vstack([g.node_features, g.node_features]),
        )
        single = encode(params, g).values
        both = encode(params, double).values
        np.testing.assert_allclose(both[:5], single, atol=1e-9)
        np.testing.assert_allclose(both[5:], single, atol=1e-9)

    def test_feature_dim_mismatch(self):
        params = init_params(4, 8, 2, 3, seed=0)
        with pytest.raises(ShapeError):
            encode(params, Graph(2, [(0, 1)], np.ones((2, 3))))


class TestReadout:
    def test_zero_embeddings(self):
        ne = NodeEmbeddings(np.zeros((4, 3)), layer=2)
        np.testing.assert_array_equal(readout(ne), np.zeros(3))

    def test_singleton_subset_is_row(self):
        vals = np.arange(12).reshape(4, 3).astype(float)
        ne = NodeEmbeddings(vals, layer=1)
        np.testing.assert_array_equal(readout(ne, {2}), vals[2])

    def test_additivity_over_bipartition(self):
        rng = np.random.default_rng(6)
        ne = NodeEmbeddings(rng.normal(size=(9, 5)), layer=2)
        subset = {0, 3, 4, 7}
        rest = set(range(9)) - subset
        np.testing.assert_allclose(
            readout(ne), readout(ne, subset) + readout(ne, rest), atol=1e-9
        )

    def test_empty_subset_rejected(self):
        ne = NodeEmbeddings(np.ones((3, 2)), layer=1)
        with pytest.raises(ValueError, match="empty"):
            readout(ne, set())

    def test_graph_embedding_permutation_invariant(self):
        g = random_graph(8, 0.35, seed=7)
        params = init_params(4, 8, 2, 3, seed=8)
        perm = np.random.default_rng(9).permutation(8)
        h1 = readout(encode(params, g))
        h2 = readout(encode(params, relabel(g, perm)))
        np.testing.assert_allclose(h1, h2, atol=1e-9)


class TestClassify:
    def test_zero_head_uniform(self):
        probs = classify((np.zeros((4, 3)), np.zeros(3)), np.ones(4))
        np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(10)
        W = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        ge = rng.normal(size=4)
        p1 = classify((W, b), ge)
        p2 = classify((W, b + 5.0), ge)
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_log2_logits(self):
        W = np.array([[np.log(2.0), 0.0]])
        probs = classify((W, np.zeros(2)), np.ones(1))
        np.testing.assert_allclose(probs, [2 / 3, 1 / 3], atol=1e-12)

    def test_probs_valid(self):
        rng = np.random.default_rng(11)
        probs = classify((rng.normal(size=(5, 4)), rng.normal(size=4)), rng.normal(size=5))
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(probs >= 0) and np.all(probs <= 1)


class TestBranches:
    def test_identity_mode_additivity(self):
        g = random_graph(8, 0.4, seed=12)
        params = init_params(4, 8, 2, 3, seed=13)
        nodes_c = [0, 2, 5]
        bo = encode_branches(params, g, nodes_c, identity=True)
        full = readout(encode(params, g))
        np.testing.assert_allclose(bo.h_c + bo.h_t, full, atol=1e-9)

    def test_full_selection_gives_zero_trivial(self):
        g = path_graph(5)
        params = init_params(4, 8, 2, 3, seed=14)
        bo = encode_branches(params, g, list(range(5)))
        np.testing.assert_array_equal(bo.h_t, np.zeros(8))

    def test_zero_trivial_head_uniform_probs(self):
        g = path_graph(5)
        params = init_params(4, 8, 2, 3, seed=15)
        # heads start at zero, so the trivial prediction is uniform
        bo = encode_branches(params, g, list(range(5)))
        np.testing.assert_allclose(bo.probs_t, np.full(3, 1 / 3), atol=1e-12)

    def test_swapping_subgraphs_with_tied_weights(self):
        g = random_graph(7, 0.5, seed=16)
        params = init_params(4, 8, 2, 3, seed=17)
        params.blocks["trivial.W"] = params.blocks["causal.W"].copy()
        params.blocks["trivial.b"] = params.blocks["causal.b"].copy()
        nodes = [0, 1, 4]
        comp = sorted(set(range(7)) - set(nodes))
        a = encode_branches(params, g, nodes)
        b = encode_branches(params, g, comp)
        np.testing.assert_allclose(a.h_c, b.h_t, atol=1e-9)
        np.testing.assert_allclose(a.h_t, b.h_c, atol=1e-9)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(4, 8, 2, 3, seed=18)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, {"lr": 0.001}, epoch=7, seed=42)
        back, meta = load_checkpoint(path)
        assert meta["epoch"] == 7
        assert meta["rng"]["seed"] == 42
        assert meta["hyper"]["lr"] == 0.001
        for name, w in params.blocks.items():
            np.testing.assert_array_equal(back.blocks[name], w)

    def test_rejects_shape_mismatch(self, tmp_path):
        params = init_params(4, 8, 2, 3, seed=19)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, {}, epoch=1, seed=0)
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        arrays["block:enc0.W"] = np.zeros((3, 3))
        np.savez(path, **arrays)
        with pytest.raises(ShapeError, match="enc0.W"):
            load_checkpoint(path)

    def test_predict_stable_after_reload(self, tmp_path):
        g = path_graph(6)
        params = init_params(4, 8, 2, 3, seed=20)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, {}, epoch=0, seed=0)
        back, _ = load_checkpoint(path)
        np.testing.assert_allclose(predict(params, g), predict(back, g), atol=0)
