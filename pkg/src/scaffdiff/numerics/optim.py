from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def global_norm(grads):
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def adam_step(params, grads, state, hp=AdamConfig()):
    """Apply one Adam update to ``params`` in place and return ``(params, state)``.

    ``grads`` must carry exactly the keys of ``params``.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise KeyError(f"missing gradient for {missing[0]!r}")
    if hp.clip_norm is not None:
        norm = global_norm(grads)
        if norm > hp.clip_norm:
            grads = {k: g * (hp.clip_norm / norm) for k, g in grads.items()}
    step = state.step + 1
    m, v = {}, {}
    bc1 = 1.0 - hp.beta1**step
    bc2 = 1.0 - hp.beta2**step
    for name, p in list(params.items()):
        g = grads[name]
        m[name] = hp.beta1 * state.m.get(name, 0.0) + (1 - hp.beta1) * g
        v[name] = hp.beta2 * state.v.get(name, 0.0) + (1 - hp.beta2) * g * g
        update = hp.lr * (m[name] / bc1) / (np.sqrt(v[name] / bc2) + hp.eps)
        params.assign(name, p.data - update)
    return params, AdamState(step, m, v)
