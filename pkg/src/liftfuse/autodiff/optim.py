"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import UsageError


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are not modified.

    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    b1, b2 = betas
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        g = grads.get(name) if hasattr(grads, "get") else None
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise UsageError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise UsageError(f"optimizer state shape mismatch for {name}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(t, m_new, v_new)
