"""Minimal reverse-mode automatic differentiation on numpy arrays.

Just enough machinery for small message-passing models: a Var wraps a
float64 array, ops build a tape, and backward() walks it once. Gradients
accumulate on every Var, including leaves, so model weights and edge
weights can both be differentiated.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12  # floor inside log terms so losses stay finite


class Var:
    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def accum(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


def leaf(value) -> Var:
    return Var(value)


def backward(root: Var) -> None:
    """Accumulate gradients of the scalar `root` into every reachable Var."""
    if root.value.shape != ():
        raise ValueError(f"backward expects a scalar root, got shape {root.value.shape}")
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.accum(np.ones(()))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Var, b: Var) -> Var:
    def bw(g):
        a.accum(_unbroadcast(g, a.value.shape))
        b.accum(_unbroadcast(g, b.value.shape))

    return Var(a.value + b.value, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    def bw(g):
        a.accum(_unbroadcast(g * b.value, a.value.shape))
        b.accum(_unbroadcast(g * a.value, b.value.shape))

    return Var(a.value * b.value, (a, b), bw)


def scale(a: Var, alpha: float, beta: float = 0.0) -> Var:
    """Elementwise alpha*a + beta."""

    def bw(g):
        a.accum(alpha * g)

    return Var(alpha * a.value + beta, (a,), bw)


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value

    def bw(g):
        if av.ndim == 1:
            a.accum(bv @ g)
            b.accum(np.outer(av, g))
        else:
            a.accum(g @ bv.T)
            b.accum(av.T @ g)

    return Var(av @ bv, (a, b), bw)


def relu(a: Var) -> Var:
    mask = a.value > 0

    def bw(g):
        a.accum(g * mask)

    return Var(a.value * mask, (a,), bw)


def sigmoid(a: Var) -> Var:
    s = 1.0 / (1.0 + np.exp(-a.value))

    def bw(g):
        a.accum(g * s * (1.0 - s))

    return Var(s, (a,), bw)


def gather_rows(a: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=int)

    def bw(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, g)
        a.accum(ga)

    return Var(a.value[idx], (a,), bw)


def sum_rows(a: Var) -> Var:
    """Column sums of a matrix: the sum readout."""

    def bw(g):
        a.accum(np.broadcast_to(g, a.value.shape).copy())

    return Var(a.value.sum(axis=0), (a,), bw)


def concat(a: Var, b: Var) -> Var:
    na = a.value.shape[0]

    def bw(g):
        a.accum(g[:na])
        b.accum(g[na:])

    return Var(np.concatenate([a.value, b.value]), (a, b), bw)


def vstack(rows: list[Var]) -> Var:
    def bw(g):
        for i, r in enumerate(rows):
            r.accum(g[i])

    return Var(np.stack([r.value for r in rows]), tuple(rows), bw)


def aggregate(h: Var, edges: np.ndarray, weights: Var | None = None) -> Var:
    """Sum of neighbor rows along undirected edges, optionally edge-weighted.

    out[i] = sum over edges (u,v): w_e * h[u] if i == v, plus w_e * h[v] if i == u.
    Gradients flow to both the node rows and the edge weights.
    """
    out = np.zeros_like(h.value)
    if edges.shape[0] == 0:
        parents = (h,) if weights is None else (h, weights)
        return Var(out, parents, lambda g: None)
    u, v = edges[:, 0], edges[:, 1]
    w = np.ones(edges.shape[0]) if weights is None else weights.value
    np.add.at(out, v, h.value[u] * w[:, None])
    np.add.at(out, u, h.value[v] * w[:, None])

    def bw(g):
        gh = np.zeros_like(h.value)
        np.add.at(gh, u, g[v] * w[:, None])
        np.add.at(gh, v, g[u] * w[:, None])
        h.accum(gh)
        if weights is not None:
            gw = np.einsum("eh,eh->e", h.value[u], g[v]) + np.einsum(
                "eh,eh->e", h.value[v], g[u]
            )
            weights.accum(gw)

    parents = (h,) if weights is None else (h, weights)
    return Var(out, parents, bw)


def pick(a: Var, index: int) -> Var:
    def bw(g):
        ga = np.zeros_like(a.value)
        ga[index] = g
        a.accum(ga)

    return Var(a.value[index], (a,), bw)


def softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def ce_from_logits(z: Var, y: int) -> Var:
    """Cross-entropy -log softmax(z)[y], numerically stable."""
    zv = z.value
    m = zv.max()
    lse = m + np.log(np.exp(zv - m).sum())
    p = np.exp(zv - lse)

    def bw(g):
        gz = p.copy()
        gz[y] -= 1.0
        z.accum(g * gz)

    return Var(lse - zv[y], (z,), bw)


def gce_from_logits(z: Var, y: int, q: float) -> Var:
    """Generalized cross-entropy (1 - p_y^q)/q on softmax probabilities."""
    p = softmax_np(z.value)
    py = p[y]

    def bw(g):
        gz = (py**q) * p
        gz[y] -= py**q
        z.accum(g * gz)

    return Var((1.0 - py**q) / q, (z,), bw)


def affine(terms: list[tuple[float, Var]], const: float = 0.0) -> Var:
    """Scalar combination sum(c_i * v_i) + const."""
    vals = sum(c * v.value for c, v in terms) + const

    def bw(g):
        for c, v in terms:
            v.accum(g * c)

    return Var(vals, tuple(v for _, v in terms), bw)


def mean(terms: list[Var]) -> Var:
    return affine([(1.0 / len(terms), v) for v in terms])


def nce_scores(hc: Var, ht: Var, tau: float) -> Var:
    """Contrastive objective over dot-product scores scaled by 1/tau.

    Positive pair for row i is (hc[i], ht[i]); the other rows of ht act as
    in-batch negatives: loss = mean_i [ s_ii - logsumexp_{j != i} s_ij ]
    with s = hc @ ht.T / tau.
    """
    n = hc.value.shape[0]
    if n < 2:
        raise ValueError("nce_scores: need a batch of at least 2")
    s = hc.value @ ht.value.T / tau
    off = s.copy()
    np.fill_diagonal(off, -np.inf)
    m = off.max(axis=1)
    lse = m + np.log(np.exp(off - m[:, None]).sum(axis=1))
    loss = (np.diag(s) - lse).mean()

    def bw(g):
        gs = np.exp(off - lse[:, None])  # softmax over negatives, zero diagonal
        gs *= -1.0 / n
        gs[np.arange(n), np.arange(n)] += 1.0 / n
        gs *= g / tau
        hc.accum(gs @ ht.value)
        ht.accum(gs.T @ hc.value)

    return Var(loss, (hc, ht), bw)
