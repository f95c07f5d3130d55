"""Trained-model container and its binary ``CKPT`` serialization.

Layout (all little-endian)::

    b"CKPT" | u16 version | u16 id length | id (utf-8) |
    u32 n_config | n_config x u32 | n_params x f64

``n_params`` follows from the model id and config integers.  Parameters are
stored in the network's ``param_specs`` order, each array row-major.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .models import Network, as_tensors, build_network, network_from_config

MAGIC = b"CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    network: Network
    params: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        return self.network.model_id

    @classmethod
    def fresh(cls, model_id: str, seed: int = 0) -> "Checkpoint":
        net = build_network(model_id)
        return cls(net, net.init_params(np.random.default_rng(seed)))

    @classmethod
    def zeros(cls, model_id: str) -> "Checkpoint":
        """A quiescent model: every weight zero."""
        net = build_network(model_id)
        return cls(net, [np.zeros(s.shape) for s in net.param_specs()])

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.params])

    def tensors(self, requires_grad: bool = False) -> list[Tensor]:
        return as_tensors(self.params, requires_grad)

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.network, [p.copy() for p in self.params], dict(self.meta))

    def to_bytes(self) -> bytes:
        mid = self.model_id.encode("utf-8")
        ints = self.network.config_ints()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<HH", VERSION, len(mid)))
        buf.write(mid)
        buf.write(struct.pack(f"<I{len(ints)}I", len(ints), *ints))
        buf.write(self.flat().astype("<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        try:
            if raw[:4] != MAGIC:
                raise CheckpointError("not a CKPT file (bad magic)")
            version, n_id = struct.unpack_from("<HH", raw, 4)
            if version != VERSION:
                raise CheckpointError(f"unsupported CKPT version {version}")
            off = 8
            model_id = raw[off:off + n_id].decode("utf-8")
            off += n_id
            (n_cfg,) = struct.unpack_from("<I", raw, off)
            off += 4
            ints = list(struct.unpack_from(f"<{n_cfg}I", raw, off))
            off += 4 * n_cfg
        except struct.error as exc:
            raise CheckpointError(f"truncated CKPT header: {exc}") from exc
        try:
            net = network_from_config(model_id, ints)
        except ValueError as exc:
            raise CheckpointError(str(exc)) from exc
        n = net.n_params()
        body = raw[off:]
        if len(body) != 8 * n:
            raise CheckpointError(f"{model_id}: expected {n} parameters, file holds {len(body) / 8:g}")
        flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
        params, pos = [], 0
        for spec in net.param_specs():
            params.append(flat[pos:pos + spec.size].reshape(spec.shape).copy())
            pos += spec.size
        return cls(net, params)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
