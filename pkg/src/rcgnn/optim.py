"""Gradient-descent updates and finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams


class DivergedError(RuntimeError):
    """Gradients went non-finite; training cannot continue."""


def _check_grads(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergedError(f"non-finite gradient in block {name}")


def _check_params(params: ModelParams) -> None:
    try:
        params.check_finite()
    except ValueError as exc:
        raise DivergedError(str(exc)) from exc


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> ModelParams:
    _check_grads(grads)
    out = params.copy()
    for name, g in grads.items():
        out.blocks[name] -= lr * g
    _check_params(out)
    return out


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(w) for k, w in params.blocks.items()},
            v={k: np.zeros_like(w) for k, w in params.blocks.items()},
        )


def adam_step(
    state: AdamState, params: ModelParams, grads: dict[str, np.ndarray], lr: float
) -> tuple[AdamState, ModelParams]:
    """One bias-corrected Adam update; returns fresh state and params."""
    _check_grads(grads)
    out = params.copy()
    new = AdamState(
        m={k: v.copy() for k, v in state.m.items()},
        v={k: v.copy() for k, v in state.v.items()},
        t=state.t + 1,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
    b1, b2 = new.beta1, new.beta2
    for name, g in grads.items():
        new.m[name] = b1 * new.m[name] + (1 - b1) * g
        new.v[name] = b2 * new.v[name] + (1 - b2) * g * g
        m_hat = new.m[name] / (1 - b1**new.t)
        v_hat = new.v[name] / (1 - b2**new.t)
        out.blocks[name] -= lr * m_hat / (np.sqrt(v_hat) + new.eps)
    _check_params(out)
    return new, out


def grad_check(
    loss_fn,
    grad_fn,
    params: ModelParams,
    eps: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of grad_fn against central finite differences.

    Samples up to max_coords coordinates across all weight blocks; the
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    analytic = grad_fn(params)
    coords = [
        (name, idx)
        for name, w in params.blocks.items()
        for idx in np.ndindex(w.shape)
    ]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(chosen)]
    worst = 0.0
    work = params.copy()
    for name, idx in coords:
        orig = work.blocks[name][idx]
        work.blocks[name][idx] = orig + eps
        up = loss_fn(work)
        work.blocks[name][idx] = orig - eps
        down = loss_fn(work)
        work.blocks[name][idx] = orig
        numeric = (up - down) / (2 * eps)
        a = float(analytic[name][idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
