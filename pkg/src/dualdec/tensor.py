"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op builds a node in an implicit tape (parent links + a backward
closure); ``backward`` walks the tape once in reverse topological order.
Values are always float64 and row-major. Gradient buffers are allocated
lazily for intermediates and eagerly (zero-filled) for parameters, so an
unreached parameter reports a zero gradient rather than None.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

_grad_enabled = True


class NonFiniteError(ValueError):
    """An op received or produced non-finite values."""


@contextmanager
def no_grad():
    """Disable tape construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 ndarray plus gradient slot and tape linkage."""

    __slots__ = ("data", "grad", "parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.name = name
        if _grad_enabled:
            self.parents = parents
            self._backward = backward
        else:
            self.parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"

    # Operator sugar; the module-level functions are the real ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def parameter(data, name=None) -> Tensor:
    """Leaf tensor with an eagerly allocated zero gradient buffer."""
    t = Tensor(np.array(data, dtype=np.float64), name=name)
    t.grad = np.zeros_like(t.data)
    return t


def constant(data) -> Tensor:
    """Tensor that never receives gradient (masks, position indices)."""
    return Tensor(data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    out._backward = backward if _grad_enabled else None
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward = backward if _grad_enabled else None
    return out


def matmul(a, b) -> Tensor:
    """Matrix product, supporting stacked (batched) operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(np.matmul(a.data, b.data), parents=(a, b))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a.accumulate(_unbroadcast(ga, a.data.shape))
        b.accumulate(_unbroadcast(gb, b.data.shape))

    out._backward = backward if _grad_enabled else None
    return out


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def backward(g):
        a.accumulate(g.reshape(old))

    out._backward = backward if _grad_enabled else None
    return out


def transpose(a: Tensor, axes) -> Tensor:
    a = _as_tensor(a)
    inv = np.argsort(axes)
    out = Tensor(a.data.transpose(axes), parents=(a,))

    def backward(g):
        a.accumulate(g.transpose(inv))

    out._backward = backward if _grad_enabled else None
    return out


def concat(tensors, axis=-1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(piece)

    out._backward = backward if _grad_enabled else None
    return out


def slice_(a: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing with gradient scatter-back."""
    a = _as_tensor(a)
    out = Tensor(a.data[index], parents=(a,))

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    out._backward = backward if _grad_enabled else None
    return out


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup `table[ids]` (embedding); gradient scatter-adds."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    out = Tensor(table.data[ids], parents=(table,))

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    out._backward = backward if _grad_enabled else None
    return out


def take_positions(x: Tensor, positions) -> Tensor:
    """Pick one sequence position per batch row: (B,S,H) -> (B,H)."""
    x = _as_tensor(x)
    positions = np.asarray(positions)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, positions], parents=(x,))

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (rows, positions), g)

    out._backward = backward if _grad_enabled else None
    return out


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape))

    out._backward = backward if _grad_enabled else None
    return out


def mean_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = Tensor(x * cdf, parents=(a,))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a.accumulate(g * (cdf + x * pdf))

    out._backward = backward if _grad_enabled else None
    return out


def softmax(a: Tensor, axis=-1) -> Tensor:
    """Max-stabilized softmax along `axis`. Rejects non-finite input.

    Mask biases around -1e30 are accepted: they are finite and underflow
    to exactly 0 probability after the shift.
    """
    a = _as_tensor(a)
    x = a.data
    if not np.isfinite(x).all():
        bad = np.argwhere(~np.isfinite(x))[0]
        raise NonFiniteError(f"softmax input is non-finite at index {tuple(bad)}")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, parents=(a,))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a.accumulate((g - dot) * y)

    out._backward = backward if _grad_enabled else None
    return out


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dim, then affine: gain * xhat + bias."""
    a, gain, bias = _as_tensor(a), _as_tensor(gain), _as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(gain.data * xhat + bias.data, parents=(a, gain, bias))

    def backward(g):
        gain.accumulate(_unbroadcast(g * xhat, gain.data.shape))
        bias.accumulate(_unbroadcast(g, bias.data.shape))
        gx = g * gain.data
        a.accumulate(inv * (gx
                            - gx.mean(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    out._backward = backward if _grad_enabled else None
    return out


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity at rate 0 (the default everywhere)."""
    if rate <= 0.0:
        return a
    a = _as_tensor(a)
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * keep, parents=(a,))

    def backward(g):
        a.accumulate(g * keep)

    out._backward = backward if _grad_enabled else None
    return out


def cross_entropy(logits: Tensor, targets, ignore_id: int) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id.

    `logits` is (N, V); `targets` an int array of N labels in [0, V) or the
    ignore sentinel. An all-ignored batch yields loss 0 and a warning.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets).reshape(-1)
    x = logits.data
    if x.ndim != 2:
        raise ValueError(f"cross_entropy expects (N, V) logits, got {x.shape}")
    valid = targets != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        warnings.warn("cross_entropy: all positions ignored; loss is 0",
                      RuntimeWarning, stacklevel=2)
        out = Tensor(0.0, parents=(logits,))
        out._backward = (lambda g: None) if _grad_enabled else None
        return out
    bad = (targets[valid] < 0) | (targets[valid] >= x.shape[1])
    if bad.any():
        raise ValueError("cross_entropy: target id outside [0, vocab)")

    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(x.shape[0])
    safe_t = np.where(valid, targets, 0)
    nll = lse - z[rows, safe_t]
    loss = nll[valid].sum() / n_valid
    out = Tensor(loss, parents=(logits,))

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, safe_t] -= 1.0
        p[~valid] = 0.0
        logits.accumulate(p * (float(g) / n_valid))

    out._backward = backward if _grad_enabled else None
    return out


def backward(loss: Tensor):
    """Populate grads of every tape ancestor of a scalar `loss`."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {loss.data.shape}")
    # Iterative topological order (graphs can exceed the recursion limit).
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
