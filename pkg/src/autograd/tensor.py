"""
Tensor Module

Dense NCHW tensor with reverse-mode automatic differentiation.

Every differentiable op records a node (operands + backward rule) on the
output tensor. backward() rebuilds the graph from the loss, orders it
topologically and walks it once in reverse, summing gradients into shared
operands. The graph is rebuilt on every forward pass.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DimensionError, GraphError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

Scalar = Union[int, float]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


# ========== Grad Mode ==========

def is_grad_enabled() -> bool:
    """Return False inside a no_grad() block on the current thread."""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording a graph (evaluation / inference)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


# ========== Tensor ==========

class Tensor:
    """
    N-dimensional array of reals plus an optional gradient slot.

    Activations are (N, C, H, W); kernels are (Cout, Cin, Kh, Kw).
    Data is 32-bit unless a dtype is passed explicitly (gradient-check
    oracles build 64-bit shadows this way).
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.ascontiguousarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._released = False

    # ---------- construction helpers ----------

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, dtype=None) -> "Tensor":
        return cls(np.zeros(tuple(shape)), requires_grad=requires_grad, dtype=dtype)

    @classmethod
    def ones(cls, shape: Sequence[int], requires_grad: bool = False, dtype=None) -> "Tensor":
        return cls(np.ones(tuple(shape)), requires_grad=requires_grad, dtype=dtype)

    @classmethod
    def zeros_like(cls, other: "Tensor", requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros_like(other.data), requires_grad=requires_grad, dtype=other.data.dtype)

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """
        Wrap the result of an op and record its graph node.

        Raises NumericalError when the op produced NaN/Inf.
        """
        if not np.isfinite(data).all():
            raise NumericalError(f"{op} produced non-finite values (shape {tuple(data.shape)})")
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data)
        out.grad = None
        out.op = op
        out._released = False
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ---------- properties ----------

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag}, op={self.op})"

    # ---------- operators ----------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other: Scalar):
        if isinstance(other, Tensor):
            raise DimensionError("division is only defined by a scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def abs(self) -> "Tensor":
        return absolute(self)

    def sum(self) -> "Tensor":
        return total(self)

    def mean(self) -> "Tensor":
        return mean(self)


# ========== Graph ==========

class Graph:
    """Op nodes reachable from an output, operands before consumers."""

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        order = []
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def ops(self, name: str) -> list:
        """Return the recorded nodes produced by op `name`."""
        return [n for n in self.nodes if n.op == name]


def backward(loss: Tensor):
    """
    Populate .grad of every requires_grad leaf reachable from a scalar loss.

    The graph is released afterwards; calling backward again on the same
    loss is an error.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._released:
        raise GraphError("backward already ran on this graph; run the forward pass again")
    if not loss.requires_grad:
        raise GraphError("backward on a tensor that is detached from any graph")

    graph = Graph.from_output(loss)
    pending = {id(loss): np.ones_like(loss.data)}

    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._released:
            raise GraphError(f"{node.op} node was released by an earlier backward; run the forward pass again")
        if node.is_leaf:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.array(grad, dtype=node.data.dtype, copy=True)
                else:
                    node.grad += grad
            continue
        parent_grads = node._backward(grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad

    for node in graph.nodes:
        if not node.is_leaf:
            node._backward = None
            node._parents = ()
            node._released = True
    logger.debug(f"backward visited {len(graph)} nodes")


# ========== Elementwise Ops ==========

def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, value), dtype=like.data.dtype)


def _channel_view(a: Tensor, b: Tensor) -> Tuple[np.ndarray, Optional[Tuple[int, ...]]]:
    """
    Return b's data laid out against a, plus the axes its gradient sums over.

    Only two layouts exist: identical shapes, or a (C,) vector broadcast
    along the channel axis of an NCHW tensor.
    """
    if a.shape == b.shape:
        return b.data, None
    if b.ndim == 1 and a.ndim == 4 and a.shape[1] == b.shape[0]:
        return b.data.reshape(1, -1, 1, 1), (0, 2, 3)
    raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return Tensor.from_op(a.data + np.asarray(b, dtype=a.data.dtype), (a,), lambda g: (g,), "add_scalar")
    b_view, axes = _channel_view(a, b)

    def _backward(grad):
        grad_b = grad if axes is None else grad.sum(axis=axes)
        return grad, grad_b

    return Tensor.from_op(a.data + b_view, (a, b), _backward, "add")


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -b)
    b_view, axes = _channel_view(a, b)

    def _backward(grad):
        grad_b = -grad if axes is None else -grad.sum(axis=axes)
        return grad, grad_b

    return Tensor.from_op(a.data - b_view, (a, b), _backward, "sub")


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        factor = np.asarray(b, dtype=a.data.dtype)
        return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,), "mul_scalar")
    b_view, axes = _channel_view(a, b)

    def _backward(grad):
        grad_a = grad * b_view
        grad_b = grad * a.data
        if axes is not None:
            grad_b = grad_b.sum(axis=axes)
        return grad_a, grad_b

    return Tensor.from_op(a.data * b_view, (a, b), _backward, "mul")


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), "neg")


def _relu_grad(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return grad * (x > 0)


def relu(x: Tensor) -> Tensor:
    data = x.data

    def _backward(grad):
        return (_relu_grad(data, grad),)

    return Tensor.from_op(np.maximum(data, 0), (x,), _backward, "relu")


def absolute(x: Tensor) -> Tensor:
    data = x.data

    def _backward(grad):
        return (grad * np.sign(data),)

    return Tensor.from_op(np.abs(data), (x,), _backward, "abs")


# ========== Reductions ==========

def total(x: Tensor) -> Tensor:
    shape = x.shape

    def _backward(grad):
        return (np.broadcast_to(grad.reshape(()), shape).astype(grad.dtype),)

    return Tensor.from_op(np.asarray(x.data.sum(dtype=x.data.dtype)), (x,), _backward, "sum")


def mean(x: Tensor) -> Tensor:
    shape = x.shape
    count = max(x.size, 1)

    def _backward(grad):
        return (np.full(shape, grad.reshape(()) / count, dtype=grad.dtype),)

    return Tensor.from_op(np.asarray(x.data.mean(dtype=x.data.dtype)), (x,), _backward, "mean")
