"""Finite-difference gradient checking for the layer vocabulary.

Central differences on a random subset of coordinates (a sparse random
projection of the full Jacobian check), compared against the analytic
gradients the closures produce. Complex tensors are perturbed through
their float64 view so real and imaginary parts are checked independently.
"""

from __future__ import annotations

import numpy as np


def grad_check(loss_and_grads, tensors, h: float = 1e-5, rng=None, samples_per_tensor: int = 8,
               floor: float = 1e-6):
    """Max relative deviation between analytic and central-difference gradients.

    loss_and_grads() -> (scalar loss, [gradient arrays aligned with tensors]);
    it must recompute from the current tensor values each call. `tensors` are
    the arrays to perturb in place.

    `floor` bounds the denominator: central differences carry ~eps*|loss|/h
    of roundoff, so coordinates whose gradient sits below the floor are
    compared absolutely against it. A wiring bug still shows up as an O(1)
    relative deviation on ordinary-magnitude coordinates.
    """
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grads()
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        tview = tensor.view(np.float64) if np.iscomplexobj(tensor) else tensor
        gview = np.ascontiguousarray(grad).view(np.float64) if np.iscomplexobj(grad) else grad
        flat_t = tview.reshape(-1)
        flat_g = gview.reshape(-1)
        n = flat_t.size
        count = min(samples_per_tensor, n)
        coords = rng.choice(n, size=count, replace=False)
        for idx in coords:
            orig = flat_t[idx]
            flat_t[idx] = orig + h
            lp, _ = loss_and_grads()
            flat_t[idx] = orig - h
            lm, _ = loss_and_grads()
            flat_t[idx] = orig
            fd = (lp - lm) / (2.0 * h)
            an = flat_g[idx]
            rel = abs(fd - an) / max(abs(fd), abs(an), floor)
            worst = max(worst, rel)
    return worst
