"""Attributed undirected graphs and the planted-motif catalog."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class GraphInvariantError(ValueError):
    """A Graph violates its structural invariants."""


def normalize_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


@dataclass
class Graph:
    """Undirected attributed graph with label and optional ground-truth edge mask.

    Edges are stored as normalized (min, max) index pairs in a fixed order;
    gt_edge_mask, when present, marks the edges that belong to the planted
    ground-truth motif (one flag per edge, same order).
    """

    node_count: int
    edges: list[tuple[int, int]]
    node_features: np.ndarray
    label: int = 0
    gt_edge_mask: np.ndarray | None = None
    graph_id: int = 0

    def __post_init__(self):
        self.edges = [normalize_edge(int(u), int(v)) for u, v in self.edges]
        self.node_features = np.asarray(self.node_features, dtype=float)
        if self.gt_edge_mask is not None:
            self.gt_edge_mask = np.asarray(self.gt_edge_mask, dtype=bool)
        self.validate()

    def validate(self) -> None:
        n = self.node_count
        if n < 1:
            raise GraphInvariantError(f"graph {self.graph_id}: node_count must be >= 1")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphInvariantError(f"graph {self.graph_id}: self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphInvariantError(
                    f"graph {self.graph_id}: edge ({u},{v}) out of range [0,{n})"
                )
            if (u, v) in seen:
                raise GraphInvariantError(f"graph {self.graph_id}: duplicate edge ({u},{v})")
            seen.add((u, v))
        if self.node_features.ndim != 2 or self.node_features.shape[0] != n:
            raise GraphInvariantError(
                f"graph {self.graph_id}: node_features must have {n} rows"
            )
        if self.gt_edge_mask is not None and len(self.gt_edge_mask) != len(self.edges):
            raise GraphInvariantError(
                f"graph {self.graph_id}: gt_edge_mask length {len(self.gt_edge_mask)} "
                f"!= edge count {len(self.edges)}"
            )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_array(self) -> np.ndarray:
        """Edges as an (E, 2) int array; shape (0, 2) when edgeless."""
        if not self.edges:
            return np.zeros((0, 2), dtype=int)
        return np.asarray(self.edges, dtype=int)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def gt_edges(self) -> set[tuple[int, int]]:
        if self.gt_edge_mask is None:
            return set()
        return {e for e, flag in zip(self.edges, self.gt_edge_mask) if flag}


def is_connected(node_count: int, edges: Iterable[tuple[int, int]]) -> bool:
    if node_count <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(node_count)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == node_count


@dataclass(frozen=True)
class MotifSpec:
    """Canonical motif: a fixed connected edge list on nodes 0..node_count-1."""

    kind: str
    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not is_connected(self.node_count, self.edges):
            raise GraphInvariantError(f"motif {self.kind} is not connected")


# Canonical motif shapes. The three class-defining kinds are house
# (4-cycle 0-1-2-3 with apex 4 joined to 2 and 3), the 5-ring, and the
# 3x3 lattice. The remaining shapes are variants used to build per-class
# pools in the multi-motif generator.
MOTIFS: dict[str, MotifSpec] = {
    "house": MotifSpec("house", 5, ((0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (3, 4))),
    "cycle": MotifSpec("cycle", 5, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0))),
    "grid": MotifSpec(
        "grid",
        9,
        (
            (0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8),
            (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8),
        ),
    ),
    "cycle6": MotifSpec("cycle6", 6, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0))),
    "ladder": MotifSpec("ladder", 6, ((0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5))),
    "ladder8": MotifSpec(
        "ladder8",
        8,
        ((0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (0, 4), (1, 5), (2, 6), (3, 7)),
    ),
    "clique4": MotifSpec("clique4", 4, ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))),
    "diamond": MotifSpec("diamond", 4, ((0, 1), (1, 2), (2, 3), (3, 0), (0, 2))),
    "bowtie": MotifSpec("bowtie", 5, ((0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4))),
}

# Class index of the three canonical kinds (house/cycle/grid datasets).
MOTIF_CLASS: dict[str, int] = {"house": 0, "cycle": 1, "grid": 2}


def induced_subgraph(g: Graph, nodes: Iterable[int]) -> tuple[Graph, list[int]]:
    """Subgraph induced on `nodes` with compacted indices.

    Returns the new graph and the mapping from new index -> original index
    (sorted ascending, so the relabeling is deterministic). The empty node
    set is rejected: an explanation subgraph must be non-empty.
    """
    keep = sorted(set(int(v) for v in nodes))
    if not keep:
        raise ValueError("induced_subgraph: node set must be non-empty")
    for v in keep:
        if not (0 <= v < g.node_count):
            raise ValueError(f"induced_subgraph: node {v} out of range [0,{g.node_count})")
    index = {v: i for i, v in enumerate(keep)}
    in_set = set(keep)
    new_edges = []
    new_mask = [] if g.gt_edge_mask is not None else None
    for e_idx, (u, v) in enumerate(g.edges):
        if u in in_set and v in in_set:
            new_edges.append((index[u], index[v]))
            if new_mask is not None:
                new_mask.append(bool(g.gt_edge_mask[e_idx]))
    sub = Graph(
        node_count=len(keep),
        edges=new_edges,
        node_features=g.node_features[keep].copy(),
        label=g.label,
        gt_edge_mask=np.asarray(new_mask, dtype=bool) if new_mask is not None else None,
        graph_id=g.graph_id,
    )
    return sub, keep
