"""Shared machinery for the differentiable sequence networks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    fan_in: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class StepState:
    """Recurrent state of a network plus its most recent frame prediction."""

    inner: Any
    prediction: Tensor


class Network:
    """A bias-free next-frame predictor over ``H x W`` fields.

    Subclasses define ``param_specs``, ``initial_inner`` and ``_step``.  The
    parameter order of ``param_specs`` is the checkpoint order.
    """

    model_id: str = ""
    #: number of most recent input frames a prediction depends on
    context: int = 1

    def param_specs(self) -> list[ParamSpec]:
        raise NotImplementedError

    def config_ints(self) -> list[int]:
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(s.size for s in self.param_specs())

    def init_params(self, rng: np.random.Generator) -> list[np.ndarray]:
        """Uniform in +-1/sqrt(fan_in) for every weight array."""
        out = []
        for spec in self.param_specs():
            bound = 1.0 / np.sqrt(spec.fan_in)
            out.append(rng.uniform(-bound, bound, size=spec.shape))
        return out

    def initial_inner(self, height: int, width: int) -> Any:
        raise NotImplementedError

    def initial_state(self, height: int, width: int) -> StepState:
        return StepState(self.initial_inner(height, width), Tensor(np.zeros((height, width))))

    def _step(self, params: Sequence[Tensor], inner: Any, frame: Tensor) -> tuple[Tensor, Any]:
        raise NotImplementedError

    def step(self, params: Sequence[Tensor], state: StepState, frame) -> StepState:
        """Consume one input frame, return the new state holding the prediction."""
        frame = frame if isinstance(frame, Tensor) else Tensor(frame)
        pred, inner = self._step(params, state.inner, frame)
        return StepState(inner, pred)

    def teacher_forced_loss(self, params: Sequence[Tensor], seq: np.ndarray) -> Tensor:
        """Mean MSE of next-frame predictions when fed the frames of ``seq``.

        Predictions that depend on fewer than ``context`` real frames are
        excluded from the loss.
        """
        T, H, W = seq.shape
        first = self.context - 1
        if T - 1 <= first:
            raise ValueError(f"{self.model_id}: sequence of length {T} too short for context {self.context}")
        state = self.initial_state(H, W)
        preds = []
        for t in range(T - 1):
            state = self.step(params, state, seq[t])
            if t >= first:
                preds.append(state.prediction)
        stacked = ag.concat([ag.reshape(p, (1, H, W)) for p in preds], axis=0)
        return ag.mse(stacked, Tensor(seq[first + 1:]))


def as_tensors(arrays: Sequence[np.ndarray], requires_grad: bool) -> list[Tensor]:
    """Wrap parameter arrays without copying; the arrays stay shared."""
    out = []
    for a in arrays:
        t = Tensor.__new__(Tensor)
        t.data = a
        t.requires_grad = requires_grad
        t.grad = None
        out.append(t)
    return out
