"""Two-layer bias-free ConvLSTM with 3x3 zero-padded kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .base import Network, ParamSpec

GATES = ("input", "forget", "cell", "output")


@dataclass(frozen=True)
class ConvLSTMConfig:
    hidden: tuple[int, ...] = (2, 1)
    in_channels: int = 1
    kernel: int = 3

    def __post_init__(self):
        if not self.hidden or min(self.hidden) < 1 or self.kernel % 2 == 0:
            raise ValueError(f"invalid ConvLSTM config {self}")


def convlstm_param_count(config: ConvLSTMConfig) -> int:
    total, cin = 0, config.in_channels
    for hid in config.hidden:
        total += 4 * config.kernel**2 * (cin + hid) * hid
        cin = hid
    return total


def convlstm_cell(weights: Sequence[Tensor], x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One layer: four gate convolutions over ``[x, h]`` (channels first)."""
    z = ag.concat([x, h], axis=0)
    w_i, w_f, w_c, w_o = weights
    i = ag.sigmoid(ag.conv2d(z, w_i))
    f = ag.sigmoid(ag.conv2d(z, w_f))
    g = ag.tanh(ag.conv2d(z, w_c))
    o = ag.sigmoid(ag.conv2d(z, w_o))
    c_new = ag.add(ag.mul(f, c), ag.mul(i, g))
    return ag.mul(o, ag.tanh(c_new)), c_new


class ConvLSTMNetwork(Network):
    """Stacked ConvLSTM; the last layer's single hidden map is the prediction."""

    def __init__(self, hidden: Sequence[int] = (2, 1)):
        self.config = ConvLSTMConfig(hidden=tuple(hidden))
        if self.config.hidden[-1] != 1:
            raise ValueError("last ConvLSTM layer must have one channel (the prediction)")
        self.model_id = f"convlstm{self.config.hidden[0]}"

    def param_specs(self) -> list[ParamSpec]:
        k, cin, specs = self.config.kernel, self.config.in_channels, []
        for n, hid in enumerate(self.config.hidden):
            fan_in = (cin + hid) * k * k
            specs += [ParamSpec(f"layer{n}_{g}", (hid, cin + hid, k, k), fan_in) for g in GATES]
            cin = hid
        return specs

    def config_ints(self) -> list[int]:
        return [self.config.in_channels, self.config.kernel, *self.config.hidden]

    def initial_inner(self, height: int, width: int):
        return [(Tensor(np.zeros((h, height, width))), Tensor(np.zeros((h, height, width))))
                for h in self.config.hidden]

    def _step(self, params, inner, frame):
        H, W = frame.shape
        x = ag.reshape(frame, (1, H, W))
        new = []
        for n, (h, c) in enumerate(inner):
            h, c = convlstm_cell(params[4 * n:4 * n + 4], x, h, c)
            new.append((h, c))
            x = h
        return ag.reshape(x, (H, W)), new
