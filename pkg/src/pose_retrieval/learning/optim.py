"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_step(weights, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Update ``weights`` in place and return the state.

    The moment buffers are kept in float64 so float32 networks do not lose the
    small second-moment values. Weights that decay below the smallest normal
    float are set to zero: subnormal operands make every later matmul slow.
    """
    if not state.m:
        state.m = [np.zeros(w.shape) for w in weights]
        state.v = [np.zeros(w.shape) for w in weights]
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for w, g, m, v in zip(weights, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype)
        w[np.abs(w) < np.finfo(w.dtype).tiny] = 0
    return state
