"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape`. Outside of
a tape nothing is recorded, which is how inference runs. ``Tape.backward``
walks the records in reverse, accumulates gradients into the leaves and then
frees the records and every intermediate gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from exception import MissingGradient

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_TAPES: list["Tape"] = []


class Tensor:
    """An n-d array (up to 3 axes in practice) with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_leaf")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} requires_grad={self.requires_grad}>"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import mul
        return mul(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Records operations while active; used as a context manager."""

    def __init__(self) -> None:
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: BackwardFn) -> None:
        out._leaf = False
        self._records.append(_Record(out, tuple(inputs), backward))

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(leaf) into every leaf's ``grad`` (accumulating), then free the tape."""
        if loss.size != 1:
            raise MissingGradient(f"backward needs a scalar loss, got shape {loss.shape}")
        intermediates: list[Tensor] = []
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data)
            for record in reversed(self._records):
                out = record.out
                intermediates.append(out)
                if out.grad is None:
                    continue
                grads = record.backward(out.grad)
                for tensor, grad in zip(record.inputs, grads):
                    if grad is None or not tensor.requires_grad:
                        continue
                    _accumulate(tensor, grad)
        for tensor in intermediates:
            tensor.grad = None
        self._records.clear()


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=tensor.dtype)
    if grad.shape != tensor.shape:
        grad = grad.reshape(tensor.shape)
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad = tensor.grad + grad


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def make_result(data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap an op's output and record it when a tape is active and any input needs a gradient."""
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    tape = active_tape()
    if tape is not None and needs_grad:
        tape.record(out, inputs, backward)
    else:
        out.requires_grad = False
    return out
