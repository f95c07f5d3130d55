"""Define-by-run reverse-mode automatic differentiation over float64 arrays.

Every primitive returns a :class:`Tensor`.  When at least one input requires a
gradient the primitive appends a record to the thread's current :class:`Tape`;
:func:`backward` replays that tape in reverse and clears it.

Gradients accumulate into ``Tensor.grad``.  Callers zero them between optimizer
steps (see :func:`zero_grad`).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "current_tape",
    "backward",
    "zero_grad",
    "no_grad",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "concat",
    "take",
    "reshape",
    "transpose",
    "gather",
    "conv2d",
    "mse",
    "total",
]


class ShapeError(ValueError):
    """Raised when the inputs of a primitive have incompatible shapes."""


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar, all routed through the recorded primitives
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


class _Record:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive applications for one thread.

    Use as a context manager to isolate a computation from the thread's default
    tape::

        with Tape():
            loss = mse(model(x), y)
            backward(loss)
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.enabled = True

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()


_local = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = [Tape()]
    return stack


def current_tape() -> Tape:
    return _stack()[-1]


@contextmanager
def no_grad():
    """Suspend recording on the current tape."""
    tape = current_tape()
    prev = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = prev


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray, backward: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    tape = current_tape()
    if needs and tape.enabled:
        out = Tensor(out_data, requires_grad=True)
        tape.records.append(_Record(op, inputs, out, backward))
        return out
    return Tensor(out_data)


def _shape_error(op: str, a, b) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


# --------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    """Matrix-vector or matrix-matrix product (``a @ b``); 1-D ``a`` is a row."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    A, B = a.data, b.data

    def bw(g):
        if B.ndim == 1:
            ga = np.multiply.outer(g, B) if A.ndim == 2 else g * B
            gb = A.T @ g if A.ndim == 2 else A * g
        elif A.ndim == 1:
            ga = B @ g
            gb = np.multiply.outer(A, g)
        else:
            ga = g @ B.T
            gb = A.T @ g
        return ga, gb

    return _emit("matmul", (a, b), A @ B, bw)


def _binary_check(op, a, b):
    if a.shape != b.shape:
        raise _shape_error(op, a.shape, b.shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check("add", a, b)
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check("mul", a, b)
    A, B = a.data, b.data
    return _emit("mul", (a, b), A * B, lambda g: (g * B, g * A))


def scale(a, factor: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = _as_tensor(a)
    factor = float(factor)
    return _emit("scale", (a,), a.data * factor, lambda g: (g * factor,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _emit("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _emit("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat: no inputs")
    ref = ts[0].shape
    ax = axis % len(ref) if ref else 0
    for t in ts[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for k, (s, r) in enumerate(zip(t.shape, ref)) if k != ax
        ):
            raise _shape_error("concat", ref, t.shape)
    out = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", ts, out, bw)


def take(a, index) -> Tensor:
    """Basic (slice/integer) indexing; the result is a copy."""
    a = _as_tensor(a)
    try:
        out = np.array(a.data[index])
    except IndexError as exc:
        raise ShapeError(f"take: index {index!r} invalid for shape {a.shape}") from exc
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _emit("take", (a,), out, bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise _shape_error("reshape", src, shape) from exc
    return _emit("reshape", (a,), out, lambda g: (g.reshape(src),))


def transpose(a) -> Tensor:
    """Transpose of a 2-D tensor."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D input, got shape {a.shape}")
    return _emit("transpose", (a,), a.data.T, lambda g: (g.T,))


def gather(a, index: np.ndarray) -> Tensor:
    """``out[k] = a.ravel()[index[k]]``; negative indices read as 0.0.

    Used for neighbour routing on grids where off-grid sources are absent.
    """
    a = _as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    flat = a.data.reshape(-1)
    if index.size and index.max() >= flat.size:
        raise _shape_error("gather", a.shape, index.shape)
    valid = index >= 0
    safe = np.where(valid, index, 0)
    out = np.where(valid, flat[safe], 0.0)
    n, shape = flat.size, a.shape
    src = safe[valid]

    def bw(g):
        grad = np.bincount(src, weights=g[valid], minlength=n)
        return (grad.reshape(shape),)

    return _emit("gather", (a,), out, bw)


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # x: (N, C, H, W) -> (N, C*kh*kw, H*W), zero padded "same" correlation
    n, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N, C, H, W, kh, kw
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, h * w)


def conv2d(x, w) -> Tensor:
    """2-D cross-correlation, zero padding, stride 1, no bias.

    ``x`` is ``(C_in, H, W)`` or batched ``(N, C_in, H, W)``; ``w`` is
    ``(C_out, C_in, kh, kw)`` with odd kernel sides.  Output keeps ``H x W``.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    X, Wt = x.data, w.data
    batched = X.ndim == 4
    if not batched:
        X = X[None]
    if X.ndim != 4 or Wt.ndim != 4 or Wt.shape[1] != X.shape[1] or Wt.shape[2] % 2 == 0 or Wt.shape[3] % 2 == 0:
        raise _shape_error("conv2d", x.shape, w.shape)
    n, c, h, wd = X.shape
    co, _, kh, kw = Wt.shape
    cols = _im2col(X, kh, kw)
    W2 = Wt.reshape(co, -1)
    out = np.matmul(W2, cols).reshape(n, co, h, wd)
    if not batched:
        out = out[0]
    ph, pw = kh // 2, kw // 2

    def bw(g):
        G = g.reshape(n, co, h * wd)
        gw = np.einsum("nop,nkp->ok", G, cols).reshape(Wt.shape)
        gcols = np.matmul(W2.T, G).reshape(n, c, kh, kw, h, wd)
        gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw))
        for a in range(kh):
            for b in range(kw):
                gxp[:, :, a:a + h, b:b + wd] += gcols[:, :, a, b]
        gx = gxp[:, :, ph:ph + h, pw:pw + wd]
        if not batched:
            gx = gx[0]
        return gx, gw

    return _emit("conv2d", (x, w), out, bw)


def mse(a, b) -> Tensor:
    """Mean squared error between two same-shape tensors (scalar result)."""
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_check("mse", a, b)
    diff = a.data - b.data
    n = diff.size
    val = np.array(np.dot(diff.reshape(-1), diff.reshape(-1)) / n)

    def bw(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return _emit("mse", (a, b), val, bw)


def total(a) -> Tensor:
    """Sum of all elements (scalar result)."""
    a = _as_tensor(a)
    shape = a.shape
    return _emit("sum", (a,), np.array(a.data.sum()), lambda g: (np.full(shape, float(g)),))


# --------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor.

    The tape is cleared afterwards, including records that did not contribute.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = tape or current_tape()
    if not loss.requires_grad:
        tape.clear()
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    seen: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        rec.output.grad = g if rec.output.grad is None else rec.output.grad + g
        parts = rec.backward(g)
        for t, gi in zip(rec.inputs, parts):
            if not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64)
                seen[key] = t
    # whatever is left was never produced on this tape: leaves
    for key, g in grads.items():
        t = seen[key]
        t.grad = g.copy() if t.grad is None else t.grad + g
    tape.clear()


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
