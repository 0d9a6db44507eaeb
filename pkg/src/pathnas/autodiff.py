"""Minimal reverse-mode autodiff over numpy arrays.

Just enough tensor machinery to train the predictor: broadcasting-aware
elementwise ops, batched matmul, reductions, a row-gather for embedding
lookups, and an Adam optimizer. Everything is float64 and purely
CPU-deterministic, which keeps finite-difference gradient checks and
bit-exact checkpoint round-trips honest.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the context (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tensor:
    """A numpy array plus the closure that routes gradients to its parents."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray):
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g is self.data else g
        else:
            self.grad = self.grad + g

    # -- basic properties ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- elementwise arithmetic -------------------------------------------------

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(g)
        return self._make(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)
        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(-g)
        return self._make(self.data - other.data, (self, other), backward)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * other.data)
            if other.requires_grad:
                other._accumulate(g * self.data)
        return self._make(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(g / other.data)
            if other.requires_grad:
                other._accumulate(-g * self.data / (other.data**2))
        return self._make(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))
        return self._make(self.data**exponent, (self,), backward)

    # -- matmul ------------------------------------------------------------------

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        def backward(g):
            # the x[..., in] @ w[in, out] case flattens batch dims into one
            # GEMM instead of stacking per-sample outer products
            if self.requires_grad:
                if other.data.ndim == 2:
                    gm = g.reshape(-1, g.shape[-1])
                    self._accumulate((gm @ other.data.T).reshape(self.data.shape))
                else:
                    self._accumulate(
                        _unbroadcast(g @ other.data.swapaxes(-1, -2), self.data.shape)
                    )
            if other.requires_grad:
                if other.data.ndim == 2:
                    gm = g.reshape(-1, g.shape[-1])
                    xm = self.data.reshape(-1, self.data.shape[-1])
                    other._accumulate(xm.T @ gm)
                else:
                    other._accumulate(
                        _unbroadcast(self.data.swapaxes(-1, -2) @ g, other.data.shape)
                    )
        return self._make(self.data @ other.data, (self, other), backward)

    # -- nonlinearities ------------------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)
        def backward(g):
            self._accumulate(g * out_data)
        return self._make(out_data, (self,), backward)

    def log(self):
        def backward(g):
            self._accumulate(g / self.data)
        return self._make(np.log(self.data), (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)
        def backward(g):
            self._accumulate(g * (1.0 - out_data**2))
        return self._make(out_data, (self,), backward)

    def sigmoid(self):
        out_data = 1.0 / (1.0 + np.exp(-self.data))
        def backward(g):
            self._accumulate(g * out_data * (1.0 - out_data))
        return self._make(out_data, (self,), backward)

    def relu(self):
        mask = self.data > 0
        def backward(g):
            self._accumulate(g * mask)
        return self._make(self.data * mask, (self,), backward)

    # -- reductions / shape ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(gg, self.data.shape))
        return self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        def backward(g):
            self._accumulate(g.reshape(old))
        return self._make(self.data.reshape(shape), (self,), backward)

    def swapaxes(self, a: int, b: int):
        def backward(g):
            self._accumulate(g.swapaxes(a, b))
        return self._make(self.data.swapaxes(a, b), (self,), backward)

    def max_const(self, axis=None, keepdims: bool = False) -> np.ndarray:
        """Max of the raw values, detached from the graph (softmax shifts)."""
        return self.data.max(axis=axis, keepdims=keepdims)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along an axis, splitting the gradient back."""
    tensors = [Tensor._coerce(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward
    )


def take_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Row gather ``table[index]`` for embedding lookups; index is constant."""
    index = np.asarray(index, dtype=np.int64)
    def backward(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, index, g)
        table._accumulate(acc)
    return Tensor._make(table.data[index], (table,), backward)


def backward(root: Tensor) -> None:
    """Backpropagate from a scalar tensor through the recorded graph."""
    if root.data.size != 1:
        raise ValueError("backward() requires a scalar tensor")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


Tensor.backward = lambda self: backward(self)


class Adam:
    """Adam with the conventional bias-corrected moment estimates."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / b2t) + self.eps
            p.data = p.data - (self.lr / b1t) * (m / denom)


def finite_difference_grads(fn, params: dict[str, Tensor], h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of scalar ``fn()`` w.r.t. every parameter entry."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn()
            flat[i] = orig - h
            f_minus = fn()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_error(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], floor: float = 1e-4
) -> float:
    """Largest guarded relative error across all parameter groups."""
    worst = 0.0
    for name in analytic:
        a = analytic[name]
        f = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst
