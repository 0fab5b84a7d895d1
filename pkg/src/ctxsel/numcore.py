"""Dense float64 kernels and a small reverse-mode tape.

The tape only knows the handful of primitives the policy network needs
(matmul, bias add, residual add, tanh, row softmax, scaling). It is not a
general autodiff system.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .exceptions import (
    ConsistencyError,
    DegenerateVectorError,
    DomainError,
    EmptyContextError,
    ShapeError,
)

__all__ = [
    "as_matrix",
    "matmul",
    "softmax",
    "logsumexp",
    "cosine",
    "attention",
    "Var",
    "GradTape",
]


def as_matrix(a, name="matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D float64 array (a 1-D input becomes one row)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _vector(v, name) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def logsumexp(v) -> float:
    v = _vector(v, "v")
    m = v.max()
    return float(m + math.log(np.exp(v - m).sum()))


def softmax(v) -> np.ndarray:
    v = _vector(v, "v")
    e = np.exp(v - v.max())
    return e / e.sum()


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cosine(a, b) -> float:
    a = _vector(a, "a")
    b = _vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector")
    c = float(a @ b / (na * nb))
    return min(1.0, max(-1.0, c))


def attention(q, k, v, dim: int) -> np.ndarray:
    """Scaled dot-product attention ``softmax(q k^T / sqrt(dim)) v``."""
    q = as_matrix(q, "q")
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] == 0:
        raise EmptyContextError("attention over zero keys")
    k = as_matrix(k, "k")
    v = as_matrix(v, "v")
    if q.shape[1] != dim or k.shape[1] != dim:
        raise ShapeError(f"query/key width must equal dim={dim}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError("keys and values have different row counts")
    weights = _softmax_rows(q @ k.T / math.sqrt(dim))
    return weights @ v


class Var:
    """A node on a :class:`GradTape`."""

    __slots__ = ("value", "grad", "name", "tape")

    def __init__(self, value: np.ndarray, tape: "GradTape", name: str | None = None):
        self.value = value
        self.grad: np.ndarray | None = None
        self.name = name
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class GradTape:
    """Records primitive ops in order; :meth:`backward` replays them in reverse.

    A tape is single-use: one forward pass, then one backward pass.
    """

    def __init__(self):
        self._ops: list[Callable[[], None]] = []
        self.params: dict[str, Var] = {}
        self._done = False

    def param(self, name: str, value) -> Var:
        if name in self.params:
            raise ConsistencyError(f"parameter {name!r} registered twice")
        var = Var(np.asarray(value, dtype=np.float64), self, name)
        self.params[name] = var
        return var

    def constant(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), self)

    def _check(self, *xs: Var) -> None:
        for x in xs:
            if x.tape is not self:
                raise ConsistencyError("operand recorded on a different tape")

    def matmul(self, a: Var, b: Var) -> Var:
        self._check(a, b)
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
        out = Var(a.value @ b.value, self)

        def back():
            if out.grad is None:
                return
            a._accumulate(out.grad @ b.value.T)
            b._accumulate(a.value.T @ out.grad)

        self._ops.append(back)
        return out

    def matmul_t(self, a: Var, b: Var) -> Var:
        """``a @ b.T``"""
        self._check(a, b)
        if a.shape[-1] != b.shape[-1]:
            raise ShapeError(f"cannot multiply {a.shape} by {b.shape}^T")
        out = Var(a.value @ b.value.T, self)

        def back():
            if out.grad is None:
                return
            a._accumulate(out.grad @ b.value)
            b._accumulate(out.grad.T @ a.value)

        self._ops.append(back)
        return out

    def add(self, a: Var, b: Var) -> Var:
        """Elementwise sum; ``b`` may be a row vector broadcast over ``a``'s rows."""
        self._check(a, b)
        if b.value.ndim == 1:
            if b.shape[0] != a.shape[-1]:
                raise ShapeError(f"bias {b.shape} does not fit {a.shape}")
        elif b.shape != a.shape:
            raise ShapeError(f"cannot add {a.shape} and {b.shape}")
        out = Var(a.value + b.value, self)

        def back():
            if out.grad is None:
                return
            a._accumulate(out.grad)
            b._accumulate(out.grad.sum(axis=0) if b.value.ndim == 1 else out.grad)

        self._ops.append(back)
        return out

    def scale(self, a: Var, c: float) -> Var:
        self._check(a)
        out = Var(a.value * c, self)

        def back():
            if out.grad is not None:
                a._accumulate(out.grad * c)

        self._ops.append(back)
        return out

    def tanh(self, a: Var) -> Var:
        self._check(a)
        y = np.tanh(a.value)
        out = Var(y, self)

        def back():
            if out.grad is not None:
                a._accumulate(out.grad * (1.0 - y * y))

        self._ops.append(back)
        return out

    def softmax_rows(self, a: Var) -> Var:
        self._check(a)
        y = _softmax_rows(a.value)
        out = Var(y, self)

        def back():
            if out.grad is None:
                return
            g = out.grad
            a._accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

        self._ops.append(back)
        return out

    def backward(self, output: Var, upstream) -> dict[str, np.ndarray]:
        """Propagate ``upstream`` (d objective / d output) back to every parameter.

        Parameters never reached get a zero gradient of their own shape.
        """
        self._check(output)
        if self._done:
            raise ConsistencyError("tape already replayed")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != output.shape:
            raise ConsistencyError(
                f"upstream shape {upstream.shape} != output shape {output.shape}"
            )
        output.grad = upstream.copy()
        for op in reversed(self._ops):
            op()
        self._done = True
        return {
            name: (v.grad if v.grad is not None else np.zeros_like(v.value))
            for name, v in self.params.items()
        }
