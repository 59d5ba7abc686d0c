"""Adam with decoupled weight decay, operating on ParamTensor collections.

Complex parameters are updated through a float64 view, i.e. as independent
real/imaginary pairs; moment tensors live in that view layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .layers import ParamTensor


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    @classmethod
    def init(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4):
        state = cls(step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        for p in params:
            rv = p.real_view()
            state.m[p.name] = np.zeros_like(rv)
            state.v[p.name] = np.zeros_like(rv)
        return state


def adam_step(params, state: AdamState) -> None:
    """One in-place update over all params; grads must already be populated."""
    if state.step >= 2**62:
        raise ConfigError("adam step counter overflow")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p in params:
        val = p.real_view()
        g = p.grad_view()
        m = state.m[p.name]
        v = state.v[p.name]
        if m.shape != val.shape:
            raise ConfigError(f"adam moment shape mismatch for {p.name}")
        if state.weight_decay != 0.0:
            # decoupled decay, applied before the moment update
            val *= 1.0 - state.lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        val -= (state.lr / bc1) * m / denom


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()
