"""Finite-difference verification of the hand-derived backward pass.

Central differences are taken over every entry of every parameter block, so
this is only tractable for tiny networks (a few thousand parameters). Per
block, the reported error is

    max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|, 1e-12)

i.e. the largest elementwise discrepancy relative to the block's gradient
magnitude. A block passes only when its error is strictly below the
tolerance (so tolerance 0 flags every block).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import NetworkParams, backward, mse_loss, stacked_forward


@dataclass(frozen=True)
class GradCheckReport:
    tolerance: float
    errors: dict[str, float]  # block name -> relative error

    @property
    def failed_blocks(self) -> tuple[str, ...]:
        return tuple(name for name, err in sorted(self.errors.items()) if err >= self.tolerance)

    @property
    def passed(self) -> bool:
        return not self.failed_blocks

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def gradient_check(
    net: NetworkParams,
    window: np.ndarray,
    target: np.ndarray,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    masks: Sequence[np.ndarray | None] | None = None,
    analytic_grads: dict[str, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare BPTT gradients against central finite differences.

    Runs in eval mode unless ``masks`` pins a set of dropout masks, in which
    case the same masks are replayed for every perturbed evaluation (so the
    dropout path itself is differentiated). ``analytic_grads`` overrides the
    computed gradients; tests use it for fault injection.
    """
    train = masks is not None

    def loss_at() -> float:
        pred, _ = stacked_forward(net, window, train=train, masks=masks)
        loss, _ = mse_loss(pred, target)
        return loss

    if analytic_grads is None:
        pred, cache = stacked_forward(net, window, train=train, masks=masks)
        _, dpred = mse_loss(pred, target)
        analytic_grads = backward(net, cache, dpred)

    errors: dict[str, float] = {}
    for name, block in net.blocks():
        analytic = analytic_grads[name]
        numeric = np.zeros_like(block)
        flat = block.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            up = loss_at()
            flat[idx] = original - step
            down = loss_at()
            flat[idx] = original
            numeric_flat[idx] = (up - down) / (2.0 * step)
        scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
        errors[name] = float(np.max(np.abs(analytic - numeric))) / scale
    return GradCheckReport(tolerance=tolerance, errors=errors)
