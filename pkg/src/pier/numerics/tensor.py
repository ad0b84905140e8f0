"""Tensor type and the reverse-mode recording tape."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..exceptions import InvalidInputError

DEFAULT_DTYPE = np.float32


class Tensor:
    """A numpy array plus an optional gradient buffer.

    Tensors created outside a recording context are never mutated by kernels,
    so they may be shared read-only between threads.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic dispatches to kernels (imported lazily to avoid a cycle)
    def __add__(self, other):
        from . import kernels
        return kernels.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import kernels
        return kernels.sub(self, other)

    def __rsub__(self, other):
        from . import kernels
        return kernels.sub(other, self)

    def __mul__(self, other):
        from . import kernels
        return kernels.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import kernels
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return kernels.mul(self, 1.0 / other)

    def __neg__(self):
        from . import kernels
        return kernels.mul(self, -1.0)

    def __matmul__(self, other):
        from . import kernels
        return kernels.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import kernels
        return kernels.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import kernels
        return kernels.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import kernels
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return kernels.reshape(self, shape)

    def transpose(self, *axes):
        from . import kernels
        return kernels.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()


def _not_scalar(t: Tensor):
    raise InvalidInputError(f"item() requires a single-element tensor, got shape {t.shape}")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        if dtype is not None and x.dtype != dtype:
            return Tensor(x.data, dtype=dtype)
        return x
    return Tensor(x, dtype=dtype)


@dataclass
class _Record:
    output: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class ComputationTape:
    """Ordered log of differentiable operations.

    Every kernel that sees a ``requires_grad`` input appends one record; the
    backward pass replays the records in reverse.
    """

    records: list[_Record] = field(default_factory=list)
    enabled: bool = True

    def append(self, output: Tensor, inputs: tuple, backward) -> None:
        self.records.append(_Record(output, inputs, backward))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


_TAPE = ComputationTape()


def get_tape() -> ComputationTape:
    return _TAPE


@contextlib.contextmanager
def no_grad():
    prev = _TAPE.enabled
    _TAPE.enabled = False
    try:
        yield
    finally:
        _TAPE.enabled = prev


def record(out_data: np.ndarray, inputs: tuple, backward) -> Tensor:
    """Wrap ``out_data`` and log the op when any input needs a gradient."""
    needs = _TAPE.enabled and any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs, dtype=out_data.dtype)
    if needs:
        _TAPE.append(out, inputs, backward)
    return out


def backward(loss: Tensor, tape: ComputationTape | None = None, clear: bool = True) -> None:
    """Propagate d(loss) to every ``requires_grad`` tensor recorded on the tape.

    Gradients accumulate into ``.grad``; leaf tensors keep theirs, intermediate
    buffers are released once consumed. The tape is cleared afterwards unless
    ``clear=False``.
    """
    tape = tape or _TAPE
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise InvalidInputError("backward() needs a scalar loss tensor")
    if not loss.requires_grad:
        raise InvalidInputError("loss does not depend on any tensor requiring grad")
    produced = {id(r.output) for r in tape.records}
    if id(loss) not in produced:
        raise InvalidInputError("loss was not recorded on the tape")

    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape.records):
        g = rec.output.grad
        if g is None:
            continue
        grads = rec.backward(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            gi = np.asarray(gi, dtype=inp.dtype)
            if gi.shape != inp.shape:
                gi = gi.reshape(inp.shape)
            if inp.grad is None:
                inp.grad = gi.copy()
            else:
                inp.grad += gi
        if rec.output is not loss:
            rec.output.grad = None
    if clear:
        tape.clear()
