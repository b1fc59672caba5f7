"""Dense tensors with reverse-mode automatic differentiation.

Every primitive returns a new :class:`Tensor` holding references to its
inputs and a closure mapping the output gradient to input gradients. Calling
:func:`backward` on a scalar linearises that graph into a :class:`Tape`
(execution order) and replays it in reverse exactly once.

Storage is float32 unless a float64 array is passed with ``dtype=np.float64``;
primitives preserve the dtype of their inputs, which lets gradient checks run
in double precision. Reductions always accumulate in float64.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from contextlib import contextmanager

import numpy as np

from ..errors import NonScalarLossError, ShapeMismatchError

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Inside this block primitives record nothing (inference only)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def note_branch(choice: np.ndarray) -> None:
    """Record the branch taken by a piecewise primitive (mask or argmax)."""
    log = getattr(_state, "branches", None)
    if log is not None:
        log.append(choice)


@contextmanager
def record_branches():
    """Collect every piecewise decision made inside the block.

    Two evaluations with equal logs lie on the same smooth piece, which is
    what finite-difference checks need.
    """
    prev = getattr(_state, "branches", None)
    _state.branches = log = []
    try:
        yield log
    finally:
        _state.branches = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            # float64 input is narrowed unless the caller asks for float64
            dtype = np.float32
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # construction helpers
    @classmethod
    def zeros(cls, shape, requires_grad=False, dtype=np.float32):
        return cls(np.zeros(shape, dtype=dtype), requires_grad, dtype=dtype)

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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def abs(self):
        return abs_(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Tape:
    """Execution-ordered record of the primitives that produced a loss."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes
        self.consumed = False

    @classmethod
    def record(cls, loss: Tensor) -> Tape:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def run(self, loss: Tensor, seed: np.ndarray):
        if self.consumed:
            raise RuntimeError("tape already consumed")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            # free the graph behind us
            node._backward = None
            node._parents = ()


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    When ``params`` is given, any of them not reached by the loss gets a zero
    gradient instead of ``None``.
    """
    if loss.data.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.shape}")
    if loss.requires_grad:
        Tape.record(loss).run(loss, np.ones_like(loss.data))
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


# elementwise binary ops with numpy broadcasting


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary_shapes(a: Tensor, b: Tensor, name: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{name}: cannot broadcast {a.shape} with {b.shape}") from None


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    return as_tensor(a, like=b), b


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _binary_shapes(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _binary_shapes(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        # scalar multiplication keeps the graph small
        s = float(b)
        return _result(a.data * a.data.dtype.type(s), (a,), lambda g: (g * s,))
    a, b = _pair(a, b)
    _binary_shapes(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return mul(a, 1.0 / float(b))
    a, b = _pair(a, b)
    _binary_shapes(a, b, "div")
    out = a.data / b.data
    return _result(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# elementwise unary ops


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    note_branch(mask)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    note_branch(pos)
    scale = np.where(pos, 1.0, slope).astype(x.dtype)
    return _result(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: (g * (1.0 - out * out),))


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    note_branch(sign)
    return _result(np.abs(x.data), (x,), lambda g: (g * sign,))


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


# reductions (float64 accumulation)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, dtype=np.float64, keepdims=keepdims).astype(x.dtype)
    kept_shape = tuple(1 if i in axes else n for i, n in enumerate(x.shape))
    return _result(np.asarray(out), (x,), lambda g: (np.broadcast_to(g.reshape(kept_shape), x.shape).copy(),))


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.mean(x.data, axis=axes, dtype=np.float64, keepdims=keepdims).astype(x.dtype)
    kept_shape = tuple(1 if i in axes else n_ for i, n_ in enumerate(x.shape))
    inv = x.dtype.type(1.0 / n)
    return _result(np.asarray(out), (x,), lambda g: (np.broadcast_to(g.reshape(kept_shape) * inv, x.shape).copy(),))


# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeMismatchError(f"broadcast: cannot broadcast {x.shape} to {shape}") from None
    return _result(out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    ref = xs[0].shape
    axis = axis % len(ref)
    for t in xs[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis):
            raise ShapeMismatchError(f"concat along {axis}: shapes {[t.shape for t in xs]}")
    out = np.concatenate([t.data for t in xs], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in xs])

    def back(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(xs)))

    return _result(out, xs, back)


def slice_(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g) if _is_advanced(index) else full.__setitem__(index, g)
        return (full,)

    return _result(np.ascontiguousarray(out), (x,), back)


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table; gradients scatter-add back to the rows."""
    idx = np.asarray(indices, dtype=np.int64)
    out = table.data[idx]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _result(out, (table,), back)


# losses built from primitives


def l1_loss(pred: Tensor, target) -> Tensor:
    return mean(abs_(pred - target))


def mse_loss(pred: Tensor, target) -> Tensor:
    return mean(square(pred - target))
