"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every public operation records a node on the implicit tape (the output
tensor keeps references to its inputs and a closure computing the vector-Jacobian
product). ``Tensor.backward`` walks the reachable nodes in reverse creation
order, each exactly once.

Broadcasting is deliberately limited to scalar-tensor operations and adding a
bias row ``(n,)`` to a ``(m, n)`` matrix; anything else raises
:class:`DimensionError`.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "ContractError",
    "no_grad",
    "is_grad_enabled",
    "matmul",
    "linear",
    "add",
    "sub",
    "mul",
    "scale",
    "negate",
    "leaky_relu",
    "tanh",
    "softplus",
    "softplus_np",
    "reduce_sum",
    "reduce_mean",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


_counter = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording on the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """A dense float64 array plus an optional gradient slot.

    ``data`` is a numpy array (row-major); ``grad`` is ``None`` until a backward
    pass reaches the tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._id = next(_counter)

    @classmethod
    def _from_op(
        cls, data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._id = next(_counter)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out.op = "leaf"
            out._parents = ()
            out._backward = None
        return out

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- autodiff --------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(t) into ``t.grad`` for every reachable tensor
        that requires grad."""
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        nodes = _reachable(self)
        grads: dict[int, np.ndarray] = {self._id: np.ones_like(self.data)}
        for node in nodes:
            g = grads.pop(node._id, None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._id in grads:
                    grads[parent._id] = grads[parent._id] + pg
                else:
                    grads[parent._id] = pg

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __neg__(self):
        return negate(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _reachable(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen[t._id] = t
        stack.extend(p for p in t._parents if p.requires_grad)
    # reverse creation order is a valid reverse topological order
    return sorted(seen.values(), key=lambda t: t._id, reverse=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- broadcasting helpers ------------------------------------------------


def _broadcast_kind(a: np.ndarray, b: np.ndarray, opname: str) -> str:
    if a.shape == b.shape:
        return "same"
    if b.ndim == 0:
        return "scalar_b"
    if a.ndim == 0:
        return "scalar_a"
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return "row_b"
    raise DimensionError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, kind: str, side: str) -> np.ndarray:
    if kind == "same":
        return g
    if (kind == "scalar_b" and side == "b") or (kind == "scalar_a" and side == "a"):
        return np.asarray(g.sum())
    if kind == "row_b" and side == "b":
        return g.sum(axis=0)
    return g


def _reshape_like(g: np.ndarray, t: Tensor) -> np.ndarray:
    return g.reshape(t.shape) if g.shape != t.shape else g


# -- operations ------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return Tensor._from_op(ad @ bd, (a, b), backward, "matmul")


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """x @ W.T + b for x (m, in), W (out, in), b (out,); one tape node."""
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionError(f"linear: input {x.shape}, weight {W.shape}, bias {b.shape}")
    xd, wd = x.data, W.data

    def backward(g):
        return (
            g @ wd if x.requires_grad else None,
            g.T @ xd if W.requires_grad else None,
            g.sum(axis=0) if b.requires_grad else None,
        )

    return Tensor._from_op(xd @ wd.T + b.data, (x, W, b), backward, "linear")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim == 0 and b.data.ndim > 0:
        a, b = b, a
    kind = _broadcast_kind(a.data, b.data, "add")

    def backward(g):
        return (
            _reshape_like(_reduce_to(g, kind, "a"), a),
            _reshape_like(_reduce_to(g, kind, "b"), b),
        )

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    kind = _broadcast_kind(a.data, b.data, "sub")

    def backward(g):
        return (
            _reshape_like(_reduce_to(g, kind, "a"), a),
            _reshape_like(-_reduce_to(g, kind, "b"), b),
        )

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product (same shapes, scalar, or bias row)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim == 0 and b.data.ndim > 0:
        a, b = b, a
    kind = _broadcast_kind(a.data, b.data, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return (
            _reshape_like(_reduce_to(g * bd, kind, "a"), a),
            _reshape_like(_reduce_to(g * ad, kind, "b"), b),
        )

    return Tensor._from_op(ad * bd, (a, b), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._from_op(x.data * c, (x,), lambda g: (g * c,), "scale")


def negate(x: Tensor) -> Tensor:
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,), "negate")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data >= 0
    factor = np.where(mask, 1.0, slope)
    return Tensor._from_op(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def softplus_np(x: np.ndarray) -> np.ndarray:
    """ln(1 + e^x) as max(x, 0) + ln(1 + e^-|x|); finite for any finite x."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._from_op(softplus_np(xd), (x,), lambda g: (g * _sigmoid(xd),), "softplus")


def reduce_sum(x: Tensor) -> Tensor:
    if x.size == 0:
        raise ContractError("reduce_sum of an empty tensor")
    shape = x.shape
    return Tensor._from_op(
        np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum"
    )


def reduce_mean(x: Tensor) -> Tensor:
    if x.size == 0:
        raise ContractError("reduce_mean of an empty tensor")
    shape, n = x.shape, x.size
    return Tensor._from_op(
        np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),), "mean"
    )
