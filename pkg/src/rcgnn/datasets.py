"""Synthetic motif-classification datasets and line-delimited dataset files."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graphs import MOTIF_CLASS, MOTIFS, Graph, GraphInvariantError, MotifSpec, normalize_edge
from .util import substream

SPLIT_NAMES = ("train", "val", "test", "explain")

# Per-class motif pools for the multi-motif generator. Each class groups
# structurally related shapes with pairwise distinct gt edge counts, so a
# class carries several valid explanation types at once.
MULTIMOTIF_POOLS: tuple[tuple[str, ...], ...] = (
    ("cycle", "house", "cycle6"),
    ("grid", "ladder", "ladder8"),
    ("clique4", "diamond", "bowtie"),
)


class DatasetParseError(ValueError):
    """Raised when a dataset file cannot be parsed; message names the line."""


@dataclass
class Dataset:
    graphs: list[Graph]
    num_classes: int
    splits: dict[str, list[int]]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = {g.graph_id for g in self.graphs}
        if len(ids) != len(self.graphs):
            raise GraphInvariantError("duplicate graph_id in dataset")
        dims = {g.node_features.shape[1] for g in self.graphs}
        if len(dims) > 1:
            raise GraphInvariantError(f"inconsistent feature dimensions across graphs: {sorted(dims)}")
        for g in self.graphs:
            if not (0 <= g.label < self.num_classes):
                raise GraphInvariantError(
                    f"graph {g.graph_id}: label {g.label} >= num_classes {self.num_classes}"
                )
        core = [self.splits.get(k, []) for k in ("train", "val", "test")]
        combined: list[int] = sum(core, [])
        if len(set(combined)) != len(combined):
            raise GraphInvariantError("train/val/test splits overlap")
        if set(combined) != ids:
            raise GraphInvariantError("train/val/test splits do not cover all graph ids")
        if not set(self.splits.get("explain", [])) <= set(self.splits.get("test", [])):
            raise GraphInvariantError("explain split must be a subset of test")

    def by_id(self, graph_id: int) -> Graph:
        if not hasattr(self, "_index"):
            self._index = {g.graph_id: g for g in self.graphs}
        return self._index[graph_id]

    def split_graphs(self, name: str) -> list[Graph]:
        return [self.by_id(i) for i in self.splits[name]]


def generate_ba_graph(n: int, m: int, seed: int, feature_dim: int = 8) -> Graph:
    """Seeded preferential-attachment graph on n nodes, m edges per new node.

    Starts from a star on m+1 nodes so the result is always connected;
    requires n >= m+1. Node features are constant-one vectors and the
    gt mask is all false (no planted structure).
    """
    if m < 1:
        raise ValueError(f"generate_ba_graph: m must be >= 1, got {m}")
    if n < m + 1:
        raise ValueError(f"generate_ba_graph: need n >= m+1 to seed attachment, got n={n}, m={m}")
    rng = substream(seed, "ba")
    edges = [(0, i) for i in range(1, m + 1)]
    # one entry per edge endpoint: sampling from this list is degree-proportional
    repeated = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[rng.integers(len(repeated))])
        for t in sorted(targets):
            edges.append((t, source))
            repeated.append(t)
        repeated.extend([source] * m)
    return Graph(
        node_count=n,
        edges=edges,
        node_features=np.ones((n, feature_dim)),
        label=0,
        gt_edge_mask=np.zeros(len(edges), dtype=bool),
        graph_id=0,
    )


def attach_motif(base: Graph, motif: MotifSpec, seed: int, label: int | None = None) -> Graph:
    """Plant a disjoint copy of `motif` on `base`, joined by one bridge edge.

    The gt mask is true exactly on the motif's internal edges; the bridge
    is excluded. The label defaults to the motif kind's canonical class.
    """
    if base.node_count < 1:
        raise ValueError("attach_motif: base graph must have at least one node")
    rng = substream(seed, "attach")
    offset = base.node_count
    edges = list(base.edges)
    mask = [False] * len(edges)
    for u, v in motif.edges:
        edges.append((u + offset, v + offset))
        mask.append(True)
    bridge_base = int(rng.integers(base.node_count))
    bridge_motif = int(rng.integers(motif.node_count)) + offset
    edges.append(normalize_edge(bridge_base, bridge_motif))
    mask.append(False)
    d = base.node_features.shape[1]
    features = np.vstack([base.node_features, np.ones((motif.node_count, d))])
    if label is None:
        label = MOTIF_CLASS.get(motif.kind, 0)
    return Graph(
        node_count=base.node_count + motif.node_count,
        edges=edges,
        node_features=features,
        label=label,
        gt_edge_mask=np.asarray(mask, dtype=bool),
        graph_id=base.graph_id,
    )


def _make_splits(num_graphs: int, seed: int) -> dict[str, list[int]]:
    order = substream(seed, "split").permutation(num_graphs).tolist()
    n_train = int(round(0.7 * num_graphs))
    n_val = int(round(0.1 * num_graphs))
    train = sorted(order[:n_train])
    val = sorted(order[n_train : n_train + n_val])
    test = sorted(order[n_train + n_val :])
    return {"train": train, "val": val, "test": test, "explain": list(test)}


def generate_ba3motif(
    num_graphs: int,
    size_range: tuple[int, int] = (13, 17),
    seed: int = 0,
    feature_dim: int = 8,
    m: int = 1,
) -> Dataset:
    """Balanced three-class dataset: BA base plus one of house/cycle/grid."""
    if num_graphs < 3:
        raise ValueError("generate_ba3motif: need at least 3 graphs")
    kinds = ("house", "cycle", "grid")
    lo, hi = size_range
    graphs = []
    for i in range(num_graphs):
        kind = kinds[i % 3]
        n_base = int(substream(seed, "size", i).integers(lo, hi + 1))
        base = generate_ba_graph(n_base, m, seed=int(substream(seed, "base", i).integers(2**31)), feature_dim=feature_dim)
        g = attach_motif(base, MOTIFS[kind], seed=int(substream(seed, "motif", i).integers(2**31)))
        g.graph_id = i
        graphs.append(g)
    return Dataset(graphs=graphs, num_classes=3, splits=_make_splits(num_graphs, seed))


def generate_multimotif(
    num_graphs: int,
    motifs_per_class: int = 2,
    size_range: tuple[int, int] = (13, 17),
    seed: int = 0,
    feature_dim: int = 8,
    m: int = 1,
) -> Dataset:
    """Three classes, each backed by a pool of distinct motifs.

    Any one motif from the class pool is planted per graph, so a single
    class admits several structurally different ground-truth explanations.
    """
    if num_graphs < 3:
        raise ValueError("generate_multimotif: need at least 3 graphs")
    max_pool = min(len(p) for p in MULTIMOTIF_POOLS)
    if not (2 <= motifs_per_class <= max_pool):
        raise ValueError(
            f"generate_multimotif: motifs_per_class must be in [2,{max_pool}], got {motifs_per_class}"
        )
    lo, hi = size_range
    graphs = []
    for i in range(num_graphs):
        cls = i % 3
        pool = MULTIMOTIF_POOLS[cls][:motifs_per_class]
        kind = pool[(i // 3) % motifs_per_class]
        n_base = int(substream(seed, "size", i).integers(lo, hi + 1))
        base = generate_ba_graph(n_base, m, seed=int(substream(seed, "base", i).integers(2**31)), feature_dim=feature_dim)
        g = attach_motif(base, MOTIFS[kind], seed=int(substream(seed, "motif", i).integers(2**31)), label=cls)
        g.graph_id = i
        graphs.append(g)
    return Dataset(graphs=graphs, num_classes=3, splits=_make_splits(num_graphs, seed))


def save_dataset(ds: Dataset, path, header_comment: str | None = None) -> None:
    """Write one JSON record per line; first record is the dataset header."""
    header = {
        "num_classes": ds.num_classes,
        "d": int(ds.graphs[0].node_features.shape[1]) if ds.graphs else 0,
        "splits": {k: list(map(int, ds.splits.get(k, []))) for k in SPLIT_NAMES},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header_comment:
            fh.write("# " + header_comment + "\n")
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for g in ds.graphs:
            rec = {
                "id": int(g.graph_id),
                "n": int(g.node_count),
                "edges": [[int(u), int(v)] for u, v in g.edges],
                "x": g.node_features.tolist(),
                "y": int(g.label),
            }
            if g.gt_edge_mask is not None:
                rec["gt"] = [
                    [int(u), int(v)]
                    for (u, v), flag in zip(g.edges, g.gt_edge_mask)
                    if flag
                ]
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_dataset(path) -> Dataset:
    """Parse a dataset file written by save_dataset; lossless round-trip."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DatasetParseError(f"{path}: no records")
    line_no, text = lines[0]
    try:
        header = json.loads(text)
        num_classes = int(header["num_classes"])
        splits = {k: [int(i) for i in header["splits"].get(k, [])] for k in SPLIT_NAMES}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"{path}: line {line_no}: bad header: {exc}") from exc
    if len(lines) < 2:
        raise DatasetParseError(f"{path}: no records")
    graphs = []
    for line_no, text in lines[1:]:
        try:
            rec = json.loads(text)
            edges = [normalize_edge(int(u), int(v)) for u, v in rec["edges"]]
            gt_mask = None
            if "gt" in rec:
                gt_set = {normalize_edge(int(u), int(v)) for u, v in rec["gt"]}
                unknown = gt_set - set(edges)
                if unknown:
                    raise ValueError(f"gt edges {sorted(unknown)} not in edge list")
                gt_mask = np.asarray([e in gt_set for e in edges], dtype=bool)
            g = Graph(
                node_count=int(rec["n"]),
                edges=edges,
                node_features=np.asarray(rec["x"], dtype=float),
                label=int(rec["y"]),
                gt_edge_mask=gt_mask,
                graph_id=int(rec["id"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, GraphInvariantError) as exc:
            raise DatasetParseError(f"{path}: line {line_no}: {exc}") from exc
        graphs.append(g)
    try:
        return Dataset(graphs=graphs, num_classes=num_classes, splits=splits)
    except GraphInvariantError as exc:
        raise DatasetParseError(f"{path}: {exc}") from exc
