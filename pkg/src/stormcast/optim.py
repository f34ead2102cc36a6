"""Adaptive moment estimation (Adam) over named parameter blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .network import NetworkParams


@dataclass
class AdamState:
    """First/second moment estimates and step counter, one entry per block."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float = 0.01) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        for name, block in params.blocks():
            state.m[name] = np.zeros_like(block)
            state.v[name] = np.zeros_like(block)
        return state


def adam_step(
    state: AdamState, params: NetworkParams, grads: dict[str, np.ndarray]
) -> tuple[NetworkParams, AdamState]:
    """One Adam update, in place on the parameter arrays.

    theta -= lr * m_hat / (sqrt(v_hat) + eps) with the usual bias correction.
    Zero gradients leave parameters unchanged (the step counter still advances).
    """
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for name, block in params.blocks():
        if name not in grads:
            raise ShapeError(f"missing gradient for block {name!r}")
        g = grads[name]
        if g.shape != block.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, expected {block.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        m_hat = m / correction1
        v_hat = v / correction2
        block -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
