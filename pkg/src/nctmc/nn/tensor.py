"""Reverse-mode automatic differentiation over dense float64 arrays."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import NonFiniteGradient, ShapeMismatch

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    Leaves created with ``requires_grad=True`` accumulate ``.grad`` when
    :meth:`backward` is called on a scalar result.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'!r})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def _make(self, data, parents, op, backward):
        out = Tensor(data, _parents=parents, op=op)
        if out.requires_grad:
            out._backward = backward
        return out

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def back(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return self._make(self.data + other.data, (self, other), "add", back)

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.data, (self,), "neg", lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def back(g):
            return _unbroadcast(g * other.data, self.shape), _unbroadcast(g * self.data, other.shape)

        return self._make(self.data * other.data, (self, other), "mul", back)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatch(f"matmul {self.shape} @ {other.shape}")

        def back(g):
            return g @ other.data.T, self.data.T @ g

        return self._make(self.data @ other.data, (self, other), "matmul", back)

    def sum(self, axis=None):
        shape = self.shape

        def back(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._make(self.data.sum(axis=axis), (self,), "sum", back)

    def log(self):
        x = self.data
        return self._make(np.log(x), (self,), "log", lambda g: (g / x,))

    def exp(self):
        y = np.exp(self.data)
        return self._make(y, (self,), "exp", lambda g: (g * y,))

    def reshape(self, *shape):
        old = self.shape
        return self._make(self.data.reshape(*shape), (self,), "reshape", lambda g: (g.reshape(old),))

    def __getitem__(self, idx):
        shape = self.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return self._make(self.data[idx], (self,), "index", back)

    # -- graph -----------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient."""
        if self.data.size != 1:
            raise ShapeMismatch("backward needs a scalar output")
        order = _topological(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if not np.all(np.isfinite(g)):
                    raise NonFiniteGradient(f"non-finite gradient reaching {node!r}")
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def selu(x: Tensor) -> Tensor:
    d = x.data
    neg = SELU_ALPHA * np.expm1(np.minimum(d, 0.0))
    y = SELU_LAMBDA * np.where(d > 0, d, neg)
    dy = SELU_LAMBDA * np.where(d > 0, 1.0, neg + SELU_ALPHA)
    return x._make(y, (x,), "selu", lambda g: (g * dy,))


def softplus(x: Tensor) -> Tensor:
    """``log(1 + e^x)`` via ``max(x, 0) + log1p(e^-|x|)``."""
    d = x.data
    y = np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d)))
    sig = np.exp(-np.logaddexp(0.0, -d))
    return x._make(y, (x,), "softplus", lambda g: (g * sig,))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"selu": selu, "softplus": softplus, "identity": identity}


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Valid true convolution ``G[m] = sum_j h[j] f[m - j]`` summed over input channels.

    ``x`` is (batch, in_channels, length) or (in_channels, length); ``kernel``
    is (out_channels, in_channels, kernel_length). Output length is
    ``length - kernel_length + 1``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3 or kernel.ndim != 3 or x.shape[1] != kernel.shape[1] or x.shape[2] < kernel.shape[2]:
        raise ShapeMismatch(f"conv1d input {x.shape} with kernel {kernel.shape}")
    xd = np.ascontiguousarray(x.data)
    kd = np.ascontiguousarray(kernel.data)

    def back(g):
        return kernels.conv1d_backward(np.ascontiguousarray(g), xd, kd)

    out = x._make(kernels.conv1d_forward(xd, kd), (x, kernel), "conv1d", back)
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, -1, 1)
    if squeeze:
        out = out.reshape(*out.shape[1:])
    return out
