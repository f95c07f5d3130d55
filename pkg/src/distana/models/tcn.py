"""Temporal convolution network: three causal dilated layers, 3x3 spatial extent.

Layer ``n`` mixes the frames ``t, t - d_n, t - 2 d_n`` (dilations 1, 2, 4) with
bias-free 3x3 zero-padded spatial kernels.  Hidden layers use tanh, the output
layer is linear.  The prediction at ``t`` depends on inputs ``t-14 .. t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .base import Network, ParamSpec


@dataclass(frozen=True)
class TCNConfig:
    hidden: int = 2
    in_channels: int = 1
    out_channels: int = 1
    dilations: tuple[int, ...] = (1, 2, 4)
    temporal_kernel: int = 3
    spatial_kernel: int = 3

    @property
    def channels(self) -> list[int]:
        n = len(self.dilations)
        return [self.in_channels] + [self.hidden] * (n - 1) + [self.out_channels]

    @property
    def receptive_field(self) -> int:
        """Number of input frames the last output depends on."""
        return 1 + (self.temporal_kernel - 1) * sum(self.dilations)


def tcn_param_count(config: TCNConfig) -> int:
    ch = config.channels
    per = config.temporal_kernel * config.spatial_kernel**2
    return sum(per * a * b for a, b in zip(ch[:-1], ch[1:]))


def _shift(x: Tensor, lag: int) -> Tensor:
    # x: (T, C, H, W) -> x delayed by ``lag`` frames with zeros in front
    if lag == 0:
        return x
    T = x.shape[0]
    if lag >= T:
        return Tensor(np.zeros(x.shape))
    pad = Tensor(np.zeros((lag,) + x.shape[1:]))
    return ag.concat([pad, ag.take(x, slice(0, T - lag))], axis=0)


def tcn_layers(config: TCNConfig, weights: Sequence[Tensor], frames: Tensor) -> Tensor:
    """Run the causal stack over ``(T, H, W)`` frames; returns ``(T, H, W)``.

    Outputs at ``t < receptive_field - 1`` see zero padding instead of data.
    """
    T, H, W = frames.shape
    x = ag.reshape(frames, (T, 1, H, W))
    last = len(config.dilations) - 1
    for n, (d, w) in enumerate(zip(config.dilations, weights)):
        taps = [_shift(x, j * d) for j in range(config.temporal_kernel)]
        x = ag.conv2d(ag.concat(taps, axis=1), w)
        if n != last:
            x = ag.tanh(x)
    return ag.reshape(x, (T, H, W))


def tcn_forward(config: TCNConfig, weights: Sequence[Tensor], window) -> Tensor:
    """Prediction field from the last frame of a ``T_w x H x W`` window."""
    window = ag._as_tensor(window)
    if window.data.ndim != 3:
        raise ag.ShapeError(f"tcn_forward: window must be (T, H, W), got {window.shape}")
    if window.shape[0] < config.receptive_field:
        raise ValueError(
            f"tcn_forward: window of {window.shape[0]} frames shorter than receptive field {config.receptive_field}"
        )
    # only the trailing receptive field influences the last output
    tail = ag.take(window, slice(window.shape[0] - config.receptive_field, None))
    return ag.take(tcn_layers(config, weights, tail), -1)


class TCNNetwork(Network):
    def __init__(self, hidden: int = 2):
        self.config = TCNConfig(hidden=hidden)
        self.model_id = f"tcn1{hidden}1"
        self.context = self.config.receptive_field

    def param_specs(self) -> list[ParamSpec]:
        cfg, ch = self.config, self.config.channels
        k, s = cfg.temporal_kernel, cfg.spatial_kernel
        # weight (C_out, k * C_in, s, s); channel block j holds lag j * dilation
        return [ParamSpec(f"layer{n}", (b, k * a, s, s), k * a * s * s)
                for n, (a, b) in enumerate(zip(ch[:-1], ch[1:]))]

    def config_ints(self) -> list[int]:
        c = self.config
        return [c.in_channels, c.hidden, c.out_channels, c.temporal_kernel, c.spatial_kernel, *c.dilations]

    def initial_inner(self, height: int, width: int):
        # zero history: the causal padding of a fresh stream
        return tuple(Tensor(np.zeros((height, width))) for _ in range(self.context))

    def _step(self, params, inner, frame):
        H, W = frame.shape
        history = inner[1:] + (frame,)
        window = ag.concat([ag.reshape(f, (1, H, W)) for f in history], axis=0)
        return tcn_forward(self.config, params, window), history

    def teacher_forced_loss(self, params, seq: np.ndarray) -> Tensor:
        # whole-sequence causal pass; only windows fully inside the data count
        T = seq.shape[0]
        first = self.context - 1
        if T - 1 <= first:
            raise ValueError(f"{self.model_id}: sequence of length {T} too short for context {self.context}")
        out = tcn_layers(self.config, params, Tensor(seq[:-1]))
        return ag.mse(ag.take(out, slice(first, None)), Tensor(seq[first + 1:]))
