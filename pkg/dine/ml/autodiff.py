"""
Reverse-mode automatic differentiation over numpy arrays.

Every operation records its parents and a closure mapping the output
gradient to one gradient per parent. ``Tensor.backward`` walks the
recorded graph in reverse topological order and accumulates gradients,
undoing numpy broadcasting where a parent was broadcast.
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from dine.core.exceptions import TrainingError
from dine.ml.special import LOG_SQRT_2PI


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node of the differentiable computation graph"""

    __array_priority__ = 100

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward: Optional[Callable] = None,
                 requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        # constants do not keep their history
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def _topological_order(self):
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        self.grad = np.ones_like(self.data)
        for node in reversed(self._topological_order()):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=float), parent.data.shape)
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor(self.data + other.data, (self, other), lambda g: (g, g))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor(self.data - other.data, (self, other), lambda g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor(a * b, (self, other), lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        a = self.data
        return Tensor(a ** exponent, (self,), lambda g: (g * exponent * a ** (exponent - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g))

    def __getitem__(self, index):
        shape = self.data.shape

        def backward(g):
            full = np.zeros(shape)
            full[index] = g
            return (full,)

        return Tensor(self.data[index], (self,), backward)

    def reshape(self, *shape):
        original = self.data.shape
        return Tensor(self.data.reshape(*shape), (self,), lambda g: (g.reshape(original),))

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) / float(count)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# -- elementwise functions ---------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    a = x.data
    return Tensor(np.log(a), (x,), lambda g: (g / a,))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return Tensor(np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def ndtr(x: Tensor) -> Tensor:
    """Standard normal CDF"""
    a = x.data
    return Tensor(special.ndtr(a), (x,), lambda g: (g * np.exp(-0.5 * a * a - LOG_SQRT_2PI),))


def log_ndtr(x: Tensor) -> Tensor:
    a = x.data
    out = special.log_ndtr(a)
    return Tensor(out, (x,), lambda g: (g * np.exp(-0.5 * a * a - LOG_SQRT_2PI - out),))


# -- row-wise functions ------------------------------------------------------

def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    lse = special.logsumexp(x.data, axis=axis, keepdims=True)
    weights = np.exp(x.data - lse)
    return Tensor(np.squeeze(lse, axis=axis), (x,),
                  lambda g: (np.expand_dims(g, axis) * weights,))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    out = x.data - special.logsumexp(x.data, axis=axis, keepdims=True)
    probs = np.exp(out)
    return Tensor(out, (x,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    probs = special.softmax(x.data, axis=axis)
    return Tensor(probs, (x,),
                  lambda g: (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]
    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                  lambda g: tuple(np.split(g, bounds, axis=axis)))


# -- gradients with respect to a parameter vector ----------------------------

def gradient(objective: Callable, params):
    """
    Evaluate ``objective(bound_params)`` on the tape and return
    ``(value, grad)`` where ``grad`` has the layout of ``params``.
    """
    bound = params.bind()
    out = objective(bound)
    value = float(np.asarray(out.data).reshape(()))
    if not np.isfinite(value):
        raise TrainingError(f"Objective is not finite: {value}", value=value)
    out.backward()
    flat = bound.flat.grad
    return value, params.like(np.zeros_like(params.values) if flat is None else flat)
