"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Operations in :mod:`advtransfer.engine.ops`
record the inputs they were computed from together with a closure that maps
the upstream gradient to gradients for each input. ``Tensor.backward`` walks
that record in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

_DTYPE = np.dtype(np.float32)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def get_dtype() -> np.dtype:
    return _DTYPE


def set_dtype(dtype) -> None:
    """Set the storage dtype for newly created tensors (float32 or float64)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the engine dtype, e.g. ``with precision(np.float64):``.

    The float64 mode exists for tight gradient verification. It mutates a
    module-level setting, so do not toggle it while other threads build tensors.
    """
    previous = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(previous)


class Tensor:
    """n-dimensional float array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        *,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        arr = np.asarray(data, dtype=_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise ValueError(f"tensor dims must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        # Only keep the graph when some input needs a gradient.
        if any(p.requires_grad for p in parents):
            return cls(data, True, _parents=parents, _backward=backward, op=op)
        return cls(data, False, op=op)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # arithmetic sugar, routed through ops so it is recorded
    def __add__(self, other):
        from . import ops

        return ops.add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.add(self, ops.neg(_as_tensor(other)))

    def __rsub__(self, other):
        from . import ops

        return ops.add(_as_tensor(other), ops.neg(self))

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, _as_tensor(other))

    def sum(self) -> "Tensor":
        from . import ops

        return ops.sum(self)

    def reshape(self, *shape) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self, grad=None) -> None:
        """Back-propagate from this tensor.

        Without ``grad`` the tensor must hold a single element (a scalar loss).
        Gradients of leaves that require them are accumulated into ``.grad``;
        calling backward twice without ``zero_grad`` adds the two results.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.data.dtype)
            if seed.shape != self.shape:
                raise ValueError(f"seed gradient shape {seed.shape} does not match tensor shape {self.shape}")
        if not self.requires_grad:
            return

        order = _topological_order(self)
        grads = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> list:
    """Nodes reachable from ``root`` that require grad, parents before children."""
    order: list = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order
