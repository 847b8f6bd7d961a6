"""Message-passing encoder, dual-branch heads, and checkpoint I/O.

The encoder is a stack of GIN-style layers: each round adds the sum of
neighbor embeddings to (1+eps) times the node's own embedding, then applies
a linear map and ReLU. The causal and trivial branches consume the shared
encoder's output restricted to their node sets, run one further layer on
the induced edges, and sum-read out. Both linear heads score the
concatenation [h_causal; h_trivial].
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import Graph
from .util import substream


class ShapeError(ValueError):
    """Weight/feature shapes disagree with the model configuration."""


@dataclass
class ModelParams:
    feature_dim: int
    hidden_dim: int
    num_layers: int
    num_classes: int
    blocks: dict[str, np.ndarray]
    gin_eps: float = 0.0

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.feature_dim,
            self.hidden_dim,
            self.num_layers,
            self.num_classes,
            {k: v.copy() for k, v in self.blocks.items()},
            self.gin_eps,
        )

    def check_finite(self) -> None:
        for name, w in self.blocks.items():
            if not np.all(np.isfinite(w)):
                raise ValueError(f"non-finite entries in weight block {name}")


@dataclass
class NodeEmbeddings:
    values: np.ndarray  # (node_count, hidden_dim)
    layer: int


@dataclass
class BranchOutputs:
    h_c: np.ndarray
    h_t: np.ndarray
    probs_c: np.ndarray
    probs_t: np.ndarray
    ce_c: float
    ce_t: float


def expected_shapes(feature_dim: int, hidden_dim: int, num_layers: int, num_classes: int) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    in_dim = feature_dim
    for l in range(num_layers):
        shapes[f"enc{l}.W"] = (in_dim, hidden_dim)
        shapes[f"enc{l}.b"] = (hidden_dim,)
        in_dim = hidden_dim
    for branch in ("causal", "trivial"):
        shapes[f"{branch}.W"] = (hidden_dim, hidden_dim)
        shapes[f"{branch}.b"] = (hidden_dim,)
    for head in ("head_c", "head_t"):
        shapes[f"{head}.W"] = (2 * hidden_dim, num_classes)
        shapes[f"{head}.b"] = (num_classes,)
    shapes["scorer.W"] = (hidden_dim, 1)
    shapes["scorer.b"] = (1,)
    return shapes


def init_params(
    feature_dim: int,
    hidden_dim: int = 32,
    num_layers: int = 2,
    num_classes: int = 3,
    seed: int = 0,
    bias_scale: float = 8.0,
) -> ModelParams:
    """He-scaled encoder/branch weights, wide uniform biases, zero heads.

    The bias range is deliberately wide. With constant node features every
    layer-1 pre-activation is the same direction scaled by a per-node degree
    sum, so with near-zero biases ReLU preserves the collinearity and the
    encoder collapses to a rank-1 map of total degree. Biases on the order
    of the degree-sum magnitudes put ReLU kinks inside the data range and
    restore expressivity.
    """
    rng = substream(seed, "params")
    blocks: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(feature_dim, hidden_dim, num_layers, num_classes).items():
        if name.startswith(("head_", "scorer.")):
            blocks[name] = np.zeros(shape)
        elif name.endswith(".b"):
            blocks[name] = rng.uniform(-bias_scale, bias_scale, size=shape)
        else:
            fan_in = shape[0]
            blocks[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return ModelParams(feature_dim, hidden_dim, num_layers, num_classes, blocks)


def lift(params: ModelParams) -> dict[str, ad.Var]:
    """Fresh leaf Vars for one differentiable pass over the parameters."""
    return {k: ad.leaf(v) for k, v in params.blocks.items()}


def encode_vars(
    params: ModelParams,
    pv: dict[str, ad.Var],
    g: Graph,
    edge_weights: ad.Var | None = None,
) -> ad.Var:
    if g.node_features.shape[1] != params.feature_dim:
        raise ShapeError(
            f"feature dim {g.node_features.shape[1]} != model feature_dim {params.feature_dim}"
        )
    h = ad.leaf(g.node_features)
    edges = g.edge_array()
    for l in range(params.num_layers):
        agg = ad.aggregate(h, edges, edge_weights)
        z = ad.add(ad.scale(h, 1.0 + params.gin_eps), agg)
        h = ad.relu(ad.add(ad.matmul(z, pv[f"enc{l}.W"]), pv[f"enc{l}.b"]))
    return h


def encode(params: ModelParams, g: Graph) -> NodeEmbeddings:
    """Node embeddings after all shared message-passing rounds."""
    h = encode_vars(params, lift(params), g)
    return NodeEmbeddings(values=h.value, layer=params.num_layers)


def readout(ne: NodeEmbeddings, node_subset=None) -> np.ndarray:
    """Sum the chosen embedding rows (all rows when subset is None)."""
    if node_subset is None:
        return ne.values.sum(axis=0)
    idx = sorted(set(int(i) for i in node_subset))
    if not idx:
        raise ValueError("readout: empty node subset")
    if idx[0] < 0 or idx[-1] >= ne.values.shape[0]:
        raise ValueError(f"readout: subset out of range [0,{ne.values.shape[0]})")
    return ne.values[idx].sum(axis=0)


def classify(head: tuple[np.ndarray, np.ndarray], ge: np.ndarray) -> np.ndarray:
    """Affine map then softmax."""
    W, b = head
    return ad.softmax_np(ge @ W + b)


def induced_edges(g: Graph, nodes: list[int]) -> np.ndarray:
    """Edges of g with both endpoints in `nodes`, reindexed to the subset."""
    index = {v: i for i, v in enumerate(nodes)}
    out = [
        (index[u], index[v])
        for u, v in g.edges
        if u in index and v in index
    ]
    if not out:
        return np.zeros((0, 2), dtype=int)
    return np.asarray(out, dtype=int)


def branch_embed_vars(
    params: ModelParams,
    pv: dict[str, ad.Var],
    shared: ad.Var,
    g: Graph,
    nodes: list[int],
    which: str,
    identity: bool = False,
    edge_weights_sub: ad.Var | None = None,
) -> ad.Var:
    """One branch: restrict to `nodes`, one message round, sum readout."""
    if not nodes:
        return ad.leaf(np.zeros(params.hidden_dim))
    rows = ad.gather_rows(shared, nodes)
    if identity:
        return ad.sum_rows(rows)
    sub_edges = induced_edges(g, nodes)
    agg = ad.aggregate(rows, sub_edges, edge_weights_sub)
    z = ad.add(ad.scale(rows, 1.0 + params.gin_eps), agg)
    h = ad.relu(ad.add(ad.matmul(z, pv[f"{which}.W"]), pv[f"{which}.b"]))
    return ad.sum_rows(h)


def head_logits(pv: dict[str, ad.Var], which: str, h_c: ad.Var, h_t: ad.Var) -> ad.Var:
    joint = ad.concat(h_c, h_t)
    return ad.add(ad.matmul(joint, pv[f"{which}.W"]), pv[f"{which}.b"])


def encode_branches(
    params: ModelParams,
    g: Graph,
    selection,
    label: int | None = None,
    identity: bool = False,
) -> BranchOutputs:
    """Value-level dual-branch forward for a causal node set and its complement.

    `selection` is either an Explanation (its selected_nodes define the
    causal subgraph) or an iterable of node indices.
    """
    from .losses import cross_entropy

    selected_nodes = getattr(selection, "selected_nodes", selection)
    nodes_c = sorted(set(int(v) for v in selected_nodes))
    nodes_t = sorted(set(range(g.node_count)) - set(nodes_c))
    pv = lift(params)
    shared = encode_vars(params, pv, g)
    h_c = branch_embed_vars(params, pv, shared, g, nodes_c, "causal", identity)
    h_t = branch_embed_vars(params, pv, shared, g, nodes_t, "trivial", identity)
    probs_c = ad.softmax_np(head_logits(pv, "head_c", h_c, h_t).value)
    probs_t = ad.softmax_np(head_logits(pv, "head_t", h_c, h_t).value)
    y = g.label if label is None else label
    return BranchOutputs(
        h_c=h_c.value,
        h_t=h_t.value,
        probs_c=probs_c,
        probs_t=probs_t,
        ce_c=cross_entropy(probs_c, y),
        ce_t=cross_entropy(probs_t, y),
    )


def predict(params: ModelParams, g: Graph) -> np.ndarray:
    """Model prediction on a whole graph: causal branch over all nodes,
    trivial half zeroed. This is the path used to audit explanations and to
    filter candidate graphs."""
    pv = lift(params)
    shared = encode_vars(params, pv, g)
    nodes = list(range(g.node_count))
    h_c = branch_embed_vars(params, pv, shared, g, nodes, "causal")
    h_t = ad.leaf(np.zeros(params.hidden_dim))
    return ad.softmax_np(head_logits(pv, "head_c", h_c, h_t).value)


def predict_masked(params: ModelParams, g: Graph) -> np.ndarray:
    """Prediction through the learned soft node scorer (retrieval-free variant)."""
    pv = lift(params)
    out = masked_forward(params, pv, g)
    return ad.softmax_np(out["logits_c"].value)


def predict_masked_hard(params: ModelParams, g: Graph, ratio: float = 0.3) -> np.ndarray:
    """Deployed prediction of the retrieval-free variant: classify through the
    causal module on the scorer's top-k node subgraph, mirroring how the
    retrieval model classifies through its retrieved subgraph."""
    from .retrieval import top_k_nodes

    pv = lift(params)
    out = masked_forward(params, pv, g)
    scores = out["node_weights"].value.reshape(-1)
    k = max(1, int(np.floor(ratio * g.node_count + 0.5)))
    nodes_c = top_k_nodes(scores, k)
    nodes_t = sorted(set(range(g.node_count)) - set(nodes_c))
    shared = encode_vars(params, pv, g)
    h_c = branch_embed_vars(params, pv, shared, g, nodes_c, "causal")
    h_t = branch_embed_vars(params, pv, shared, g, nodes_t, "trivial")
    return ad.softmax_np(head_logits(pv, "head_c", h_c, h_t).value)


def masked_forward(params: ModelParams, pv: dict[str, ad.Var], g: Graph) -> dict:
    """Soft split of the graph by a linear node scorer.

    Node weights m = sigmoid(scorer(shared)); the causal branch reads out
    m-weighted rows, the trivial branch (1-m)-weighted rows, both after one
    message round on the full edge set.
    """
    shared = encode_vars(params, pv, g)
    m = ad.sigmoid(ad.add(ad.matmul(shared, pv["scorer.W"]), pv["scorer.b"]))
    edges = g.edge_array()

    def branch(which: str, weights: ad.Var) -> ad.Var:
        agg = ad.aggregate(shared, edges)
        z = ad.add(ad.scale(shared, 1.0 + params.gin_eps), agg)
        h = ad.relu(ad.add(ad.matmul(z, pv[f"{which}.W"]), pv[f"{which}.b"]))
        return ad.sum_rows(ad.mul(h, weights))

    h_c = branch("causal", m)
    h_t = branch("trivial", ad.scale(m, -1.0, 1.0))
    return {
        "h_c": h_c,
        "h_t": h_t,
        "node_weights": m,
        "logits_c": head_logits(pv, "head_c", h_c, h_t),
        "logits_t": head_logits(pv, "head_t", h_c, h_t),
    }


def save_checkpoint(path, params: ModelParams, hyper: dict, epoch: int, seed: int) -> None:
    """Self-describing container: weight blocks + config + RNG provenance.

    Randomness is counter-based (root seed plus tags), so the seed and the
    epoch counter are the complete RNG state.
    """
    meta = {
        "feature_dim": params.feature_dim,
        "hidden_dim": params.hidden_dim,
        "num_layers": params.num_layers,
        "num_classes": params.num_classes,
        "gin_eps": params.gin_eps,
        "hyper": hyper,
        "epoch": int(epoch),
        "rng": {"seed": int(seed), "scheme": "counter"},
    }
    arrays = {f"block:{k}": v for k, v in params.blocks.items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        blocks = {k[len("block:"):]: data[k].astype(float) for k in data.files if k.startswith("block:")}
    shapes = expected_shapes(
        meta["feature_dim"], meta["hidden_dim"], meta["num_layers"], meta["num_classes"]
    )
    if set(shapes) != set(blocks):
        missing = set(shapes) ^ set(blocks)
        raise ShapeError(f"checkpoint blocks do not match model: {sorted(missing)}")
    for name, shape in shapes.items():
        if blocks[name].shape != shape:
            raise ShapeError(
                f"checkpoint block {name} has shape {blocks[name].shape}, expected {shape}"
            )
    params = ModelParams(
        meta["feature_dim"],
        meta["hidden_dim"],
        meta["num_layers"],
        meta["num_classes"],
        blocks,
        meta.get("gin_eps", 0.0),
    )
    return params, meta
