"""Retrieval-based causal graph classification with built-in explanations.

A small, self-contained framework for interpretable graph classification:
a message-passing encoder, non-parametric subgraph retrieval against a
per-class candidate pool, a causal/trivial dual-branch learner, baseline
explainers, and an explanation-quality metric suite. Everything runs on
numpy; no GPU or deep-learning framework required.
"""

__version__ = "0.1.0"

from .graphs import Graph, MotifSpec, MOTIFS, induced_subgraph
from .datasets import (
    Dataset,
    generate_ba_graph,
    attach_motif,
    generate_ba3motif,
    generate_multimotif,
    save_dataset,
    load_dataset,
)
from .model import ModelParams, init_params, encode, readout, classify, predict
from .training import HyperParams, fit, ablate

__all__ = [
    "__version__",
    "Graph",
    "MotifSpec",
    "MOTIFS",
    "induced_subgraph",
    "Dataset",
    "generate_ba_graph",
    "attach_motif",
    "generate_ba3motif",
    "generate_multimotif",
    "save_dataset",
    "load_dataset",
    "ModelParams",
    "init_params",
    "encode",
    "readout",
    "classify",
    "predict",
    "HyperParams",
    "fit",
    "ablate",
]
