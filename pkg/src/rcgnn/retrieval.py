"""Non-parametric subgraph retrieval against per-class candidate pools.

A query graph is explained by matching its node embeddings one-to-one
against each cached candidate of the same class, accumulating pairwise
similarities of the matched nodes, and selecting the top-scoring node set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .graphs import Graph
from .model import ModelParams, encode, predict
from .util import write_csv

EXACT_NODE_LIMIT = 50  # assignment solved exactly up to this many nodes per side
BRUTE_NODE_LIMIT = 8


class EmptyCandidateSetError(RuntimeError):
    """No correctly-predicted training graph exists for the class."""


@dataclass
class CandidateEntry:
    graph_id: int
    embeddings: np.ndarray  # (n, hidden)
    probs: np.ndarray


@dataclass
class CandidateSet:
    class_id: int
    entries: list[CandidateEntry]
    model_version: int

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Explanation:
    graph_id: int
    node_scores: np.ndarray
    edge_scores: np.ndarray
    selected_nodes: list[int]
    ratio: float


def top_k_nodes(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest scores; ties break toward the lower index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:k])


def edge_scores_from_nodes(g: Graph, node_scores: np.ndarray) -> np.ndarray:
    if not g.edges:
        return np.zeros(0)
    e = g.edge_array()
    return (node_scores[e[:, 0]] + node_scores[e[:, 1]]) / 2.0


def node_pair_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Similarity 1 / (1 + euclidean distance); 1 at coincidence, bounded in (0,1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"embedding dims differ: {a.shape} vs {b.shape}")
    return float(1.0 / (1.0 + np.linalg.norm(a - b)))


def similarity_matrix(emb_a: np.ndarray, emb_b: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + cdist(emb_a, emb_b))


def _exact_k_assignment(sims: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Best one-to-one matching of exactly k pairs, via a padded assignment.

    Rows/columns matched to the zero-profit padding are left unmatched; the
    forbidden dummy-dummy corner forces exactly k real pairs.
    """
    n1, n2 = sims.shape
    size = n1 + n2 - k
    profit = np.zeros((size, size))
    profit[:n1, :n2] = sims
    profit[n1:, n2:] = -1e9
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if r < n1 and c < n2)


def _greedy_k_assignment(sims: np.ndarray, k: int) -> list[tuple[int, int]]:
    n1, n2 = sims.shape
    order = np.argsort(-sims, axis=None, kind="stable")
    used_r: set[int] = set()
    used_c: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for flat in order:
        r, c = divmod(int(flat), n2)
        if r in used_r or c in used_c:
            continue
        pairs.append((r, c))
        used_r.add(r)
        used_c.add(c)
        if len(pairs) == k:
            break
    return sorted(pairs)


def _match_from_sims(sims: np.ndarray, k: int) -> tuple[list[tuple[int, int]], float]:
    n1, n2 = sims.shape
    if k < 1:
        raise ValueError(f"match_subgraphs: k must be >= 1, got {k}")
    if k > min(n1, n2):
        raise ValueError(f"match_subgraphs: k={k} exceeds min node count {min(n1, n2)}")
    if n1 <= EXACT_NODE_LIMIT and n2 <= EXACT_NODE_LIMIT:
        pairs = _exact_k_assignment(sims, k)
    else:
        pairs = _greedy_k_assignment(sims, k)
    score = float(sum(sims[r, c] for r, c in pairs) / k)
    return pairs, score


def match_subgraphs(
    emb_g: np.ndarray, emb_h: np.ndarray, k: int
) -> tuple[list[tuple[int, int]], float]:
    """Match k nodes of one graph to k nodes of another, maximizing total
    pairwise similarity. Exact up to EXACT_NODE_LIMIT nodes per side, greedy
    beyond. Returns the pairs and the mean pair similarity in (0, 1]."""
    return _match_from_sims(similarity_matrix(emb_g, emb_h), k)


def brute_force_match(
    emb_g: np.ndarray, emb_h: np.ndarray, k: int
) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive oracle over all k-subsets and bijections (tiny graphs only)."""
    n1, n2 = emb_g.shape[0], emb_h.shape[0]
    if n1 > BRUTE_NODE_LIMIT or n2 > BRUTE_NODE_LIMIT:
        raise ValueError(f"brute_force_match: graphs must have <= {BRUTE_NODE_LIMIT} nodes")
    if k < 1 or k > min(n1, n2):
        raise ValueError(f"brute_force_match: bad k={k}")
    sims = similarity_matrix(emb_g, emb_h)
    best_pairs: list[tuple[int, int]] | None = None
    best_total = -np.inf
    for rows in itertools.combinations(range(n1), k):
        for cols in itertools.permutations(range(n2), k):
            total = sum(sims[r, c] for r, c in zip(rows, cols))
            if total > best_total + 1e-15:
                best_total = total
                best_pairs = sorted(zip(rows, cols))
    assert best_pairs is not None
    return best_pairs, float(best_total / k)


def build_candidate_set(
    ds,
    params: ModelParams,
    class_id: int,
    max_size: int = 64,
    model_version: int = 0,
) -> CandidateSet:
    """Cache embeddings of correctly-predicted training graphs of one class.

    Selection is deterministic: lowest graph ids first, truncated at
    max_size. Raises EmptyCandidateSetError when the model gets no training
    graph of the class right; callers fall back to full-graph explanations.
    """
    entries: list[CandidateEntry] = []
    for g in sorted(ds.split_graphs("train"), key=lambda g: g.graph_id):
        if g.label != class_id:
            continue
        probs = predict(params, g)
        if int(np.argmax(probs)) != class_id:
            continue
        entries.append(CandidateEntry(g.graph_id, encode(params, g).values, probs))
        if len(entries) >= max_size:
            break
    if not entries:
        raise EmptyCandidateSetError(f"no correctly-predicted training graphs for class {class_id}")
    return CandidateSet(class_id=class_id, entries=entries, model_version=model_version)


def retrieve_explanation(
    g: Graph,
    params: ModelParams,
    cand: CandidateSet,
    ratio: float = 0.3,
    threshold: float = 0.4,
) -> Explanation:
    """Score nodes of g by accumulated match similarity across the candidate
    pool, then select the top ratio*n nodes as the causal subgraph.

    Candidates whose normalized match score falls below `threshold` are
    ignored; if none qualify, the single best-scoring candidate is used so
    an explanation always exists.
    """
    if not cand.entries:
        raise EmptyCandidateSetError(f"empty candidate set for class {cand.class_id}")
    if not (0.0 < ratio <= 1.0):
        raise ValueError(f"ratio must be in (0,1], got {ratio}")
    emb_g = encode(params, g).values
    n = g.node_count
    k = max(1, int(np.floor(ratio * n + 0.5)))
    matches = []
    for entry in cand.entries:
        k_pair = min(k, entry.embeddings.shape[0])
        sims = similarity_matrix(emb_g, entry.embeddings)
        pairs, score = _match_from_sims(sims, k_pair)
        matches.append((score, pairs, sims))
    qualified = [m for m in matches if m[0] >= threshold]
    if not qualified:
        best = max(range(len(matches)), key=lambda i: matches[i][0])
        qualified = [matches[best]]
    node_scores = np.zeros(n)
    for _, pairs, sims in qualified:
        for r, c in pairs:
            node_scores[r] += sims[r, c]
    node_scores /= len(qualified)
    selected = top_k_nodes(node_scores, k)
    return Explanation(
        graph_id=g.graph_id,
        node_scores=node_scores,
        edge_scores=edge_scores_from_nodes(g, node_scores),
        selected_nodes=selected,
        ratio=k / n,
    )


def export_explanations(path, graphs: list[Graph], explanations: list[Explanation], header_comment: str | None = None) -> None:
    """Per-edge CSV: graph_id, edge endpoints, edge score, selected and gt flags.

    An edge counts as selected when both endpoints are in the explanation's
    node set (it belongs to the induced causal subgraph)."""
    rows = []
    for g, expl in zip(graphs, explanations):
        chosen = set(expl.selected_nodes)
        for e_idx, (u, v) in enumerate(g.edges):
            rows.append(
                (
                    g.graph_id,
                    u,
                    v,
                    expl.edge_scores[e_idx],
                    1 if (u in chosen and v in chosen) else 0,
                    1 if (g.gt_edge_mask is not None and g.gt_edge_mask[e_idx]) else 0,
                )
            )
    write_csv(
        path,
        ["graph_id", "edge_u", "edge_v", "edge_score", "selected", "gt"],
        rows,
        header_comment=header_comment,
    )
