"""Baseline explainers and explainer factories.

Every explainer maps a graph to an Explanation: per-node and per-edge
scores plus the selected causal node set at a fixed selection ratio.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .graphs import Graph
from .model import ModelParams, branch_embed_vars, encode_vars, head_logits, lift, masked_forward, predict
from .retrieval import (
    CandidateSet,
    Explanation,
    edge_scores_from_nodes,
    retrieve_explanation,
    top_k_nodes,
)
from .util import substream


def _k_for(g: Graph, ratio: float) -> int:
    return max(1, int(np.floor(ratio * g.node_count + 0.5)))


def _explanation_from_scores(g: Graph, node_scores: np.ndarray, ratio: float) -> Explanation:
    k = _k_for(g, ratio)
    return Explanation(
        graph_id=g.graph_id,
        node_scores=node_scores,
        edge_scores=edge_scores_from_nodes(g, node_scores),
        selected_nodes=top_k_nodes(node_scores, k),
        ratio=k / g.node_count,
    )


def random_explainer(g: Graph, seed: int, ratio: float = 0.3) -> Explanation:
    """Null baseline: uniform node scores from a per-graph seeded stream."""
    rng = substream(seed, "random-explainer", g.graph_id)
    return _explanation_from_scores(g, rng.random(g.node_count), ratio)


def saliency_explainer(params: ModelParams, g: Graph, ratio: float = 0.3) -> Explanation:
    """Gradient of the predicted-class logit w.r.t. per-edge presence weights.

    Every edge's message contribution is scaled by a weight initialized to 1;
    the absolute gradient of the winning logit w.r.t. that weight is the edge
    score, and a node scores the max over its incident edges.
    """
    pv = lift(params)
    n_edges = g.edge_count
    w = ad.leaf(np.ones(n_edges))
    shared = encode_vars(params, pv, g, edge_weights=w)
    nodes = list(range(g.node_count))
    h_c = branch_embed_vars(params, pv, shared, g, nodes, "causal", edge_weights_sub=w)
    h_t = ad.leaf(np.zeros(params.hidden_dim))
    logits = head_logits(pv, "head_c", h_c, h_t)
    target = int(np.argmax(logits.value))
    ad.backward(ad.pick(logits, target))
    edge_scores = np.abs(w.grad) if w.grad is not None else np.zeros(n_edges)
    node_scores = np.zeros(g.node_count)
    for e_idx, (u, v) in enumerate(g.edges):
        node_scores[u] = max(node_scores[u], edge_scores[e_idx])
        node_scores[v] = max(node_scores[v], edge_scores[e_idx])
    k = _k_for(g, ratio)
    return Explanation(
        graph_id=g.graph_id,
        node_scores=node_scores,
        edge_scores=edge_scores,
        selected_nodes=top_k_nodes(node_scores, k),
        ratio=k / g.node_count,
    )


def make_retrieval_explainer(
    params: ModelParams,
    cand_sets: dict[int, CandidateSet],
    ratio: float = 0.3,
    threshold: float = 0.4,
):
    """Retrieval explainer bound to a frozen model and candidate pools.

    The pool is chosen by the model's predicted class; when that pool is
    missing (the model never got the class right on train), the whole graph
    is returned with uniform scores so downstream metrics stay total.
    """

    def explain(g: Graph) -> Explanation:
        y_hat = int(np.argmax(predict(params, g)))
        cs = cand_sets.get(y_hat)
        if cs is None or not cs.entries:
            return _explanation_from_scores(g, np.ones(g.node_count), ratio)
        return retrieve_explanation(g, params, cs, ratio, threshold)

    return explain


def make_scorer_explainer(params: ModelParams, ratio: float = 0.3):
    """Learned-masker explainer: node scores from the linear node scorer."""

    def explain(g: Graph) -> Explanation:
        out = masked_forward(params, lift(params), g)
        scores = out["node_weights"].value.reshape(-1)
        return _explanation_from_scores(g, scores, ratio)

    return explain


def cached(explainer):
    """Memoize an explainer by graph_id (explanations are deterministic)."""
    memo: dict[int, Explanation] = {}

    def explain(g: Graph) -> Explanation:
        if g.graph_id not in memo:
            memo[g.graph_id] = explainer(g)
        return memo[g.graph_id]

    return explain
