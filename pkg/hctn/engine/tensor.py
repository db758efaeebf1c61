"""
Dense tensors with reverse-mode automatic differentiation.

A `Tensor` is both the value and its graph node: ops record their parents
and a local backward rule, and `Tensor.backward()` walks the graph once in
reverse topological order accumulating exact analytic gradients.

All values are float64, at most 3-D, and checked for finiteness after every
op. Parameters are leaves created with `requires_grad=True`; everything else
is produced by the ops in this module.
"""
from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

from ..exceptions import NumericError, ShapeError

MAX_NDIM = 3

_grad_enabled = True


@contextmanager
def no_grad():
    """Build values only; ops inside do not record parents."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """
    Row-major float64 array participating in a differentiation graph.

    Attributes
    ----------
    data : np.ndarray
        The value.
    grad : np.ndarray or None
        Accumulated gradient, same shape as `data`; None until backward
        reaches this node (lazily zeroed).
    requires_grad : bool
        Whether gradients flow to this node.
    name : str or None
        Parameter name, used in error messages and checkpoints.
    """

    __slots__ = ('data', 'grad', 'requires_grad', 'name', 'op', '_parents', '_backward')

    def __init__(self, data, requires_grad=False, name=None, op='input'):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_NDIM:
            raise ShapeError(op, arr.shape)
        if not np.all(np.isfinite(arr)):
            label = name or op
            raise NumericError(f"non-finite value produced by {label}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = ()
        self._backward = None

    # ------------------------------------------------------------------
    # basics
    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if g.shape != self.data.shape:
            raise ShapeError(f"{self.op} backward", g.shape, self.data.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None):
        """
        Back-propagate from this node.

        Each node in the graph is visited exactly once, children before
        parents. `grad` defaults to ones (the usual scalar-loss case).
        """
        if not self.requires_grad:
            return
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        self._accumulate(seed)

        for node in reversed(_topological_order(self)):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not np.isscalar(scalar):
            raise ShapeError("div", self.shape, np.shape(scalar))
        return hadamard(self, 1.0 / float(scalar))

    def __neg__(self):
        return hadamard(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(value):
    """Wrap arrays and scalars as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, op='constant')


def _topological_order(root):
    order, visited = [], set()
    stack = [(root, False)]
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
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _result(data, parents, op, backward):
    """Create an op output, wiring the graph only when needed."""
    out = Tensor(data, op=op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ----------------------------------------------------------------------
# element-wise arithmetic
# ----------------------------------------------------------------------
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), "sub", backward)


def hadamard(a, b):
    """Element-wise product (broadcasting for masks and per-row weights)."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("hadamard", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), "hadamard", backward)


def square(x):
    x = as_tensor(x)

    def backward(g):
        x._accumulate(2.0 * x.data * g)

    return _result(np.square(x.data), (x,), "square", backward)


def log(x):
    x = as_tensor(x)
    with np.errstate(divide='ignore', invalid='ignore'):
        value = np.log(x.data)

    def backward(g):
        x._accumulate(g / x.data)

    return _result(value, (x,), "log", backward)


def relu(x):
    x = as_tensor(x)
    active = x.data > 0

    def backward(g):
        x._accumulate(g * active)

    return _result(np.where(active, x.data, 0.0), (x,), "relu", backward)


def sigmoid(x):
    x = as_tensor(x)
    value = np.empty_like(x.data)
    pos = x.data >= 0
    value[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    value[~pos] = ex / (1.0 + ex)

    def backward(g):
        x._accumulate(g * value * (1.0 - value))

    return _result(value, (x,), "sigmoid", backward)


def tanh(x):
    x = as_tensor(x)
    value = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - value ** 2))

    return _result(value, (x,), "tanh", backward)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        x._accumulate(value * (g - inner))

    return _result(value, (x,), "softmax", backward)


# ----------------------------------------------------------------------
# reductions
# ----------------------------------------------------------------------
def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    value = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape).copy())

    return _result(value, (x,), "sum", backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return hadamard(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
def matmul(a, b):
    """Matrix product; 3-D operands are batched over the leading axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), "matmul", backward)


def graph_matmul(adjacency, x):
    """
    Multiply a constant (dense or scipy-sparse) matrix into a 2-D tensor.

    Gradients flow to `x` only.
    """
    x = as_tensor(x)
    if x.ndim != 2 or adjacency.shape[1] != x.shape[0]:
        raise ShapeError("graph_matmul", adjacency.shape, x.shape)
    value = adjacency @ x.data
    value = np.asarray(value)
    transposed = adjacency.T

    def backward(g):
        x._accumulate(np.asarray(transposed @ g))

    return _result(value, (x,), "graph_matmul", backward)


def dense(x, weight, bias=None):
    """Fully connected layer over the last axis: x @ W (+ b)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# ----------------------------------------------------------------------
# shape manipulation
# ----------------------------------------------------------------------
def reshape(x, shape):
    x = as_tensor(x)
    try:
        value = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _result(value, (x,), "reshape", backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)

    def backward(g):
        x._accumulate(np.transpose(g, inverse))

    return _result(np.transpose(x.data, axes), (x,), "transpose", backward)


def swap_last(x):
    """Transpose the last two axes (batched K^T)."""
    axes = list(range(as_tensor(x).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def take(x, index):
    """Basic or fancy indexing; fancy-index backward scatters with np.add.at."""
    x = as_tensor(x)
    value = x.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] += g
        x._accumulate(full)

    return _result(value, (x,), "slice", backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _result(value, tensors, "concat", backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("stack", *[t.shape for t in tensors]) from None

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _result(value, tensors, "stack", backward)


# ----------------------------------------------------------------------
# layers
# ----------------------------------------------------------------------
def batch_norm(x, gamma, beta, running_mean, running_var, train, momentum=0.9, eps=1e-8):
    """
    Batch normalization over every axis but the last (feature) axis.

    In train mode the batch statistics are used and the running buffers
    (np.ndarray, updated in place) move by an exponential moving average:
    running = momentum * running + (1 - momentum) * batch. In eval mode the
    running buffers are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    features = x.shape[-1]
    if gamma.shape != (features,) or beta.shape != (features,):
        raise ShapeError("batch_norm", x.shape, gamma.shape, beta.shape)
    axes = tuple(range(x.ndim - 1))

    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    value = gamma.data * x_hat + beta.data
    count = x.data.size // features

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * x_hat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            g_hat = g * gamma.data
            if train:
                dx = (inv_std / count) * (
                    count * g_hat
                    - g_hat.sum(axis=axes)
                    - x_hat * (g_hat * x_hat).sum(axis=axes)
                )
            else:
                dx = g_hat * inv_std
            x._accumulate(dx)

    return _result(value, (x, gamma, beta), "batch_norm", backward)


def dropout(x, rate, rng, train):
    """Inverted dropout; identity when rate is 0 or not training."""
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return hadamard(x, keep)


def conv1d(x, weight, bias=None):
    """
    1-D convolution with 'same' zero padding along axis 1.

    Parameters
    ----------
    x : Tensor
        (batch, length, in_channels)
    weight : Tensor
        (kernel, in_channels, out_channels); kernel must be odd
    bias : Tensor, optional
        (out_channels,)

    Returns
    -------
    Tensor
        (batch, length, out_channels)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or weight.shape[1] != x.shape[2] or weight.shape[0] % 2 == 0:
        raise ShapeError("conv1d", x.shape, weight.shape)
    kernel, in_channels, out_channels = weight.shape
    batch, length, _ = x.shape
    pad = (kernel - 1) // 2
    if pad:
        zeros = np.zeros((batch, pad, in_channels))
        x = concat([zeros, x, zeros], axis=1)
    windows = concat([take(x, (slice(None), slice(i, i + length), slice(None))) for i in range(kernel)], axis=2)
    out = matmul(windows, reshape(weight, (kernel * in_channels, out_channels)))
    return out if bias is None else add(out, bias)
