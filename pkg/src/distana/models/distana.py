"""DISTANA: one shared prediction kernel (PK) per grid cell with lateral exchange.

Each PK runs ``tanh(W_pre [d, l]) -> bias-free LSTM -> tanh(W_post h)`` and
splits the 9-vector output into one dynamic prediction and eight lateral
values.  Lateral values emitted at step t reach the neighbours at step t+1.

Compass directions are indexed N, NE, E, SE, S, SW, W, NW (0..7).  Cell i
receives in slot D the component ``opposite(D)`` that its neighbour in
direction D emitted toward it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .base import Network, ParamSpec

DIRECTIONS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def opposite(direction: int) -> int:
    return (direction + 4) % 8


@dataclass(frozen=True)
class PKConfig:
    lstm_cells: int = 4
    pre_units: int = 4
    dynamic_in: int = 1
    lateral_in: int = 8
    dynamic_out: int = 1
    lateral_out: int = 8

    def __post_init__(self):
        if self.lstm_cells < 1 or self.pre_units < 1:
            raise ValueError(f"PK needs at least one LSTM cell and pre unit, got {self}")
        if self.lateral_in != 8 or self.lateral_out != 8 or self.dynamic_in != 1 or self.dynamic_out != 1:
            raise ValueError("grid PKs exchange one dynamic and eight lateral values")


def param_count(config: PKConfig) -> int:
    m, p = config.lstm_cells, config.pre_units
    d_l_in = config.dynamic_in + config.lateral_in
    d_l_out = config.dynamic_out + config.lateral_out
    return d_l_in * p + 4 * (p + m) * m + m * d_l_out


class GridTopology:
    """8-neighbourhood of an ``H x W`` grid, cells numbered row-major."""

    def __init__(self, height: int, width: int):
        if height < 1 or width < 1:
            raise ValueError(f"grid must be at least 1x1, got {height}x{width}")
        self.height, self.width = height, width
        n = height * width
        nbr = np.full((n, 8), -1, dtype=np.intp)
        for r in range(height):
            for c in range(width):
                for d, (dr, dc) in enumerate(OFFSETS):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < height and 0 <= cc < width:
                        nbr[r * width + c, d] = rr * width + cc
        self.neighbors = nbr
        # flat index into a (k, 8) lateral-output array, -1 where absent
        opp = np.array([opposite(d) for d in range(8)])
        self.lateral_index = np.where(nbr >= 0, nbr * 8 + opp[None, :], -1)

    @property
    def n_cells(self) -> int:
        return self.height * self.width


def gather_lateral(lateral_out: np.ndarray, topo: GridTopology) -> np.ndarray:
    """Route ``(k, 8)`` lateral outputs into ``(k, 8)`` lateral inputs."""
    flat = np.asarray(lateral_out, dtype=np.float64).reshape(-1)
    idx = topo.lateral_index
    return np.where(idx >= 0, flat[np.where(idx >= 0, idx, 0)], 0.0)


class PKWeights(NamedTuple):
    pre: Tensor  # (pre_units, 9)
    w_i: Tensor  # (m, pre_units + m), input gate
    w_f: Tensor  # forget gate
    w_c: Tensor  # cell candidate
    w_o: Tensor  # output gate
    post: Tensor  # (9, m)


class PKGridState(NamedTuple):
    h: Tensor  # (k, m)
    c: Tensor  # (k, m)
    lateral: Tensor  # (k, 8), outputs of the last step


def pk_step(weights: Sequence[Tensor], d_in, l_in, h, c):
    """One prediction-kernel step for a batch of cells.

    Inputs are ``(k, 1)``, ``(k, 8)``, ``(k, m)``, ``(k, m)`` (1-D vectors are
    treated as a single cell).  Returns ``(d_out, l_out, h, c)`` with the same
    leading batch layout.
    """
    w = PKWeights(*weights)
    single = np.ndim(_data(d_in)) == 1
    if single:
        d_in, l_in, h, c = (ag.reshape(t, (1, -1)) for t in map(ag._as_tensor, (d_in, l_in, h, c)))
    x = ag.concat([d_in, l_in], axis=1)
    pre = ag.tanh(ag.matmul(x, ag.transpose(w.pre)))
    z = ag.concat([pre, h], axis=1)
    i = ag.sigmoid(ag.matmul(z, ag.transpose(w.w_i)))
    f = ag.sigmoid(ag.matmul(z, ag.transpose(w.w_f)))
    g = ag.tanh(ag.matmul(z, ag.transpose(w.w_c)))
    o = ag.sigmoid(ag.matmul(z, ag.transpose(w.w_o)))
    c_new = ag.add(ag.mul(f, c), ag.mul(i, g))
    h_new = ag.mul(o, ag.tanh(c_new))
    post = ag.tanh(ag.matmul(h_new, ag.transpose(w.post)))
    d_out, l_out = ag.take(post, (slice(None), slice(0, 1))), ag.take(post, (slice(None), slice(1, None)))
    if single:
        d_out, l_out, h_new, c_new = (ag.reshape(t, (-1,)) for t in (d_out, l_out, h_new, c_new))
    return d_out, l_out, h_new, c_new


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def grid_step(weights: Sequence[Tensor], topo: GridTopology, state: PKGridState, field) -> tuple[Tensor, PKGridState]:
    """Advance every PK by one step; returns the ``H x W`` prediction field."""
    field = ag._as_tensor(field)
    if field.shape != (topo.height, topo.width):
        raise ag.ShapeError(f"grid_step: field shape {field.shape} != grid {(topo.height, topo.width)}")
    d_in = ag.reshape(field, (topo.n_cells, 1))
    l_in = ag.reshape(ag.gather(state.lateral, topo.lateral_index), (topo.n_cells, 8))
    d_out, l_out, h, c = pk_step(weights, d_in, l_in, state.h, state.c)
    return ag.reshape(d_out, (topo.height, topo.width)), PKGridState(h, c, l_out)


class DistanaNetwork(Network):
    """Differentiable DISTANA grid with a shared PK."""

    def __init__(self, lstm_cells: int = 4, pre_units: int = 4):
        self.config = PKConfig(lstm_cells=lstm_cells, pre_units=pre_units)
        self.model_id = f"distana{lstm_cells}"
        self._topo: GridTopology | None = None

    def param_specs(self) -> list[ParamSpec]:
        m, p = self.config.lstm_cells, self.config.pre_units
        dl_in = self.config.dynamic_in + self.config.lateral_in
        dl_out = self.config.dynamic_out + self.config.lateral_out
        gates = [ParamSpec(f"lstm_{g}", (m, p + m), p + m) for g in ("input", "forget", "cell", "output")]
        return [ParamSpec("pre", (p, dl_in), dl_in), *gates, ParamSpec("post", (dl_out, m), m)]

    def config_ints(self) -> list[int]:
        c = self.config
        return [c.lstm_cells, c.pre_units, c.dynamic_in, c.lateral_in, c.dynamic_out, c.lateral_out]

    def topology(self, height: int, width: int) -> GridTopology:
        if self._topo is None or (self._topo.height, self._topo.width) != (height, width):
            self._topo = GridTopology(height, width)
        return self._topo

    def initial_inner(self, height: int, width: int) -> PKGridState:
        k, m = height * width, self.config.lstm_cells
        return PKGridState(Tensor(np.zeros((k, m))), Tensor(np.zeros((k, m))), Tensor(np.zeros((k, 8))))

    def _step(self, params, inner, frame):
        topo = self.topology(*frame.shape)
        return grid_step(params, topo, inner, frame)
