"""AdamW with decoupled weight decay, operating on named tensor dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    """First/second moments per parameter plus the shared step counter."""

    lr: float = 6e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState) -> dict[str, np.ndarray]:
    """One update; returns new tensors and mutates state in place.

    p' = p - lr * mhat / (sqrt(vhat) + eps) - lr * weight_decay * p
    """
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    out = {}
    for name, p in tensors.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        out[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps) \
            - state.lr * state.weight_decay * p
    return out
