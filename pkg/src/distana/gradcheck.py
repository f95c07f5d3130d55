"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autograd import Tape, Tensor, backward


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Return max |analytic - numeric| / max(floor, |numeric|) over all scalars.

    ``f`` takes no arguments and must rebuild its graph from ``params`` on each
    call.  Parameters are perturbed in place and restored.
    """
    for p in params:
        p.grad = None
    with Tape():
        loss = f()
        backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with Tape() as tape:
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = ga.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = float(f().data)
                flat[k] = orig - step
                down = float(f().data)
                flat[k] = orig
                tape.clear()
                numeric = (up - down) / (2.0 * step)
                err = abs(gflat[k] - numeric) / max(floor, abs(numeric))
                worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
