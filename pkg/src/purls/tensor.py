"""Dense 2-d float64 tensors with reverse-mode differentiation.

Every trainable computation in this package is expressed through the small
primitive set below. Each primitive records its parents and a closure that
propagates cotangents, so `grad` can return exact analytic partials of a
scalar with respect to any tensor in the graph. Graphs are built and
consumed in a single thread; node creation order is a valid topological
order, which the backward traversal relies on.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError

_counter = itertools.count()


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if a.ndim != 2:
        raise DimensionError(f"expected a 1-d or 2-d array, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return a


class Var:
    """One node of the gradient tape: a value plus how to backpropagate it.

    Vars are immutable once created. `parents` holds the input Vars and
    `vjp` maps the output cotangent to a tuple of parent cotangents.
    """

    __slots__ = ("value", "parents", "vjp", "ordinal")

    def __init__(self, value: np.ndarray, parents=(), vjp=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.ordinal = next(_counter)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, ordinal={self.ordinal})"


def constant(x) -> Var:
    """Lift an array into the graph as a leaf."""
    a = _as_matrix(x)
    _check_finite(a, "constant")
    return Var(a)


def _lift(x) -> Var:
    return x if isinstance(x, Var) else constant(x)


def _node(value: np.ndarray, parents, vjp, op: str) -> Var:
    _check_finite(value, op)
    return Var(value, tuple(parents), vjp)


def matmul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {a.value.shape} x {b.value.shape}"
        )
    out = a.value @ b.value

    def vjp(g):
        return g @ b.value.T, a.value.T @ g

    return _node(out, (a, b), vjp, "matmul")


def transpose(a) -> Var:
    a = _lift(a)
    return _node(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: shapes differ, {a.value.shape} vs {b.value.shape}")
    return _node(a.value + b.value, (a, b), lambda g: (g, g), "add")


def add_row(a, row) -> Var:
    """Add a 1xq row vector to every row of a pxq matrix."""
    a, row = _lift(a), _lift(row)
    if row.value.shape != (1, a.value.shape[1]):
        raise DimensionError(
            f"add_row: expected row of shape (1, {a.value.shape[1]}), got {row.value.shape}"
        )

    def vjp(g):
        return g, g.sum(axis=0, keepdims=True)

    return _node(a.value + row.value, (a, row), vjp, "add_row")


def scale(a, c: float) -> Var:
    """Multiply by a python float (not a differentiable quantity)."""
    a = _lift(a)
    c = float(c)
    return _node(a.value * c, (a,), lambda g: (g * c,), "scale")


def scale_var(a, s) -> Var:
    """Multiply a matrix by a 1x1 graph scalar, differentiable in both."""
    a, s = _lift(a), _lift(s)
    if s.value.shape != (1, 1):
        raise DimensionError(f"scale_var: scalar must be 1x1, got {s.value.shape}")
    sv = s.value[0, 0]

    def vjp(g):
        return g * sv, np.array([[np.sum(g * a.value)]])

    return _node(a.value * sv, (a, s), vjp, "scale_var")


def mul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"mul: shapes differ, {a.value.shape} vs {b.value.shape}")

    def vjp(g):
        return g * b.value, g * a.value

    return _node(a.value * b.value, (a, b), vjp, "mul")


def mul_col(a, col) -> Var:
    """Scale each row i of a pxq matrix by the px1 column entry col[i]."""
    a, col = _lift(a), _lift(col)
    if col.value.shape != (a.value.shape[0], 1):
        raise DimensionError(
            f"mul_col: expected column of shape ({a.value.shape[0]}, 1), got {col.value.shape}"
        )

    def vjp(g):
        return g * col.value, np.sum(g * a.value, axis=1, keepdims=True)

    return _node(a.value * col.value, (a, col), vjp, "mul_col")


def log(a) -> Var:
    a = _lift(a)
    out = np.log(a.value)
    return _node(out, (a,), lambda g: (g / a.value,), "log")


def exp(a) -> Var:
    a = _lift(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def relu(a) -> Var:
    a = _lift(a)
    mask = a.value > 0.0

    def vjp(g):
        return (g * mask,)

    return _node(np.where(mask, a.value, 0.0), (a,), vjp, "relu")


def rsqrt(a) -> Var:
    """Elementwise 1/sqrt(x); inputs must be strictly positive."""
    a = _lift(a)
    out = 1.0 / np.sqrt(a.value)

    def vjp(g):
        return (-0.5 * g * out / a.value,)

    return _node(out, (a,), vjp, "rsqrt")


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a) -> Var:
    """Row-wise softmax, computed with max-subtraction for stability."""
    a = _lift(a)
    out = _softmax(a.value)

    def vjp(g):
        inner = np.sum(g * out, axis=1, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (a,), vjp, "softmax_rows")


def logsumexp_rows(a) -> Var:
    """Stable log(sum(exp(row))) for each row, returned as a px1 column."""
    a = _lift(a)
    mx = a.value.max(axis=1, keepdims=True)
    out = mx + np.log(np.exp(a.value - mx).sum(axis=1, keepdims=True))

    def vjp(g):
        return (g * _softmax(a.value),)

    return _node(out, (a,), vjp, "logsumexp_rows")


def row_gather(a, rows: Sequence[int]) -> Var:
    """Pick the given rows (constant indices); gradient scatter-adds back."""
    a = _lift(a)
    idx = list(int(r) for r in rows)
    for r in idx:
        if not 0 <= r < a.value.shape[0]:
            raise DimensionError(f"row_gather: row {r} out of range for shape {a.value.shape}")

    def vjp(g):
        da = np.zeros_like(a.value)
        np.add.at(da, idx, g)
        return (da,)

    return _node(a.value[idx], (a,), vjp, "row_gather")


def stack_rows(parts: Iterable[Var]) -> Var:
    """Concatenate matrices along rows; gradient slices back apart."""
    parts = [_lift(p) for p in parts]
    if not parts:
        raise DimensionError("stack_rows: nothing to stack")
    width = parts[0].value.shape[1]
    for p in parts:
        if p.value.shape[1] != width:
            raise DimensionError("stack_rows: column counts differ")
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _node(np.vstack([p.value for p in parts]), parts, vjp, "stack_rows")


def sum_rows(a) -> Var:
    """Sum each row into a px1 column."""
    a = _lift(a)
    out = a.value.sum(axis=1, keepdims=True)

    def vjp(g):
        return (np.broadcast_to(g, a.value.shape).copy(),)

    return _node(out, (a,), vjp, "sum_rows")


def sum_all(a) -> Var:
    """Sum every entry into a 1x1 scalar."""
    a = _lift(a)
    out = np.array([[a.value.sum()]])

    def vjp(g):
        return (np.full_like(a.value, g[0, 0]),)

    return _node(out, (a,), vjp, "sum_all")


def grad(loss: Var, params: Sequence[Var]) -> list[np.ndarray]:
    """Exact partials of a 1x1 scalar loss with respect to each param.

    Parameters not reachable from the loss get all-zero gradients.
    Accumulation order is fixed by node creation order, so identical
    graphs give bit-identical gradients.
    """
    if loss.value.shape != (1, 1):
        raise DimensionError(f"grad: loss must be 1x1, got {loss.value.shape}")

    reachable: dict[int, Var] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in reachable:
            continue
        reachable[id(node)] = node
        stack.extend(node.parents)

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in sorted(reachable.values(), key=lambda v: v.ordinal, reverse=True):
        g = adjoint.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            acc = adjoint.get(id(parent))
            adjoint[id(parent)] = pg.copy() if acc is None else acc + pg

    return [adjoint.get(id(p), np.zeros_like(p.value)).copy() for p in params]
