"""Loss primitives for the causal/trivial dual-branch objective.

Pure-value functions implement the formula contracts used by tests and
metrics; the training loop composes the same formulas on the autodiff tape
(see training.py). The disentanglement weight W is always treated as a
per-sample constant: no gradient flows through it.
"""

from __future__ import annotations

import numpy as np

from .autodiff import PROB_FLOOR
from .util import substream


def cross_entropy(p: np.ndarray, y: int) -> float:
    """-log p[y], floored so the result stays finite."""
    if not (0 <= y < len(p)):
        raise ValueError(f"label {y} out of range for {len(p)} classes")
    return float(-np.log(max(float(p[y]), PROB_FLOOR)))


def gce_loss(p: np.ndarray, y: int, q: float) -> float:
    """Generalized cross-entropy (1 - p[y]^q) / q; reduces to 1-p[y] at q=1."""
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must be in (0,1], got {q}")
    py = max(float(p[y]), 0.0)
    return float((1.0 - py**q) / q)


def disentangle_weight(ce_c: float, ce_t: float) -> float:
    """Per-sample weight ce_c / (ce_t + ce_c); 0.5 when both vanish."""
    if ce_c < 0 or ce_t < 0:
        raise ValueError("cross-entropy terms must be non-negative")
    total = ce_c + ce_t
    if total == 0.0:
        return 0.5
    return float(ce_c / total)


def dis_loss(
    probs_c: np.ndarray,
    probs_t: np.ndarray,
    y: int,
    q: float,
    gce_on_trivial: bool = False,
) -> float:
    """W(h) * CE(causal) plus an amplification term.

    The amplification GCE is applied to the causal prediction by default;
    gce_on_trivial switches it to the trivial prediction.
    """
    ce_c = cross_entropy(probs_c, y)
    ce_t = cross_entropy(probs_t, y)
    w = disentangle_weight(ce_c, ce_t)
    target = probs_t if gce_on_trivial else probs_c
    return w * ce_c + gce_loss(target, y, q)


def total_loss(sup: float, dis: float, con: float, lam1: float, lam2: float) -> float:
    return float(sup + lam1 * dis + lam2 * con)


def permute_trivial(batch_size: int, seed: int) -> np.ndarray:
    """Seeded derangement of batch indices (no fixed points).

    Used to swap trivial embeddings and labels across a mini-batch; batches
    of one admit no intervention and are rejected.
    """
    if batch_size < 2:
        raise ValueError("permute_trivial: need a batch of at least 2")
    rng = substream(seed, "derange")
    while True:
        perm = rng.permutation(batch_size)
        if not np.any(perm == np.arange(batch_size)):
            return perm


def contrastive_loss(
    h_c: np.ndarray,
    h_t: np.ndarray,
    labels,
    perm: np.ndarray,
    head_c: tuple[np.ndarray, np.ndarray],
    head_t: tuple[np.ndarray, np.ndarray],
    weights,
    q: float,
) -> float:
    """Counterfactual contrastive loss over an intervened batch.

    Each graph keeps its causal embedding but receives the permuted trivial
    embedding; the causal head is held to the original label (weighted by
    the per-sample W), the trivial head chases the swapped label under GCE.
    """
    from .autodiff import softmax_np

    n = h_c.shape[0]
    total = 0.0
    for i in range(n):
        joint = np.concatenate([h_c[i], h_t[perm[i]]])
        pc = softmax_np(joint @ head_c[0] + head_c[1])
        pt = softmax_np(joint @ head_t[0] + head_t[1])
        total += weights[i] * cross_entropy(pc, labels[i]) + gce_loss(pt, labels[perm[i]], q)
    return total / n


def infonce_loss(h_c: np.ndarray, h_t: np.ndarray, tau: float) -> float:
    """Contrastive alternative over dot-product scores at temperature tau.

    Same-graph (causal, trivial) embeddings form the positive pair; other
    trivial embeddings in the batch are the negatives. Minimizing this
    decorrelates the two halves of each graph.
    """
    from . import autodiff as ad

    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    hc = ad.leaf(np.asarray(h_c, dtype=float))
    ht = ad.leaf(np.asarray(h_t, dtype=float))
    return float(ad.nce_scores(hc, ht, tau).value)
