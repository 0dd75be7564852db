"""Forward-mode duals over a reverse-mode tape.

Input derivatives of network outputs (d/dt, d/dx) are carried as tangents of
:class:`Dual` numbers; parameter gradients of any scalar built from those
duals come from replaying a :class:`Tape` backwards. Because the dual
arithmetic is written against a duck-typed "number" (float, ndarray or
:class:`Var`), running it on tape variables gives reverse-over-forward
gradients, including the mixed second-order paths through the input
derivative terms.

Tape nodes are array valued; a batch of collocation points is one node, not
thousands of scalar nodes.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError

__all__ = [
    "Tape",
    "Var",
    "Dual",
    "tanh",
    "exp",
    "linear",
    "reshape",
    "value_of",
    "loss_gradient",
    "value_and_grad",
    "check_gradient",
    "eval_with_input_derivatives",
]


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    """Ordered record of array operations.

    Nodes are appended in evaluation order, so iterating in reverse is a
    valid topological order for the adjoint sweep.
    """

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value) -> "Var":
        return self._record(np.array(value, dtype=float), (), None, "leaf")

    def _record(self, value, parents, backward_fn, op):
        var = Var.__new__(Var)
        var.value = value
        var.grad = None
        var.tape = self
        var.parents = parents
        var.backward_fn = backward_fn
        var.op = op
        var.index = len(self.nodes)
        self.nodes.append(var)
        return var

    def clear(self):
        self.nodes.clear()

    def backward(self, root: "Var"):
        if root.tape is not self:
            raise ConfigurationError("root variable belongs to another tape")
        if np.size(root.value) != 1:
            raise ConfigurationError("backward() needs a scalar root")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.index + 1]):
            g = node.grad
            if g is None or node.backward_fn is None:
                continue
            grads = node.backward_fn(g)
            for parent, gp in zip(node.parents, grads):
                if gp is None:
                    continue
                parent.grad = gp if parent.grad is None else parent.grad + gp
            # intermediate adjoints are no longer needed
            node.grad = None

    def first_nonfinite(self):
        """(index, op) of the first node holding a non-finite value, or None."""
        for node in self.nodes:
            if not np.all(np.isfinite(node.value)):
                return node.index, node.op
        return None


def _val(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


class Var:
    """An array-valued node on a :class:`Tape`."""

    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "op", "index")
    # make ``ndarray <op> Var`` defer to Var's reflected operators
    __array_ufunc__ = None

    def __init__(self, *args, **kwargs):
        raise TypeError("create leaves with Tape.leaf()")

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.shape})"

    # -- arithmetic ---------------------------------------------------------
    # a Dual operand wins: its reflected operator puts the Var into the value
    # and tangent slots
    def __add__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _add(self, -other if not isinstance(other, Var) else _neg(other))

    def __rsub__(self, other):
        return _add(_neg(self), other)

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, Var):
            return _div(self, other)
        return _mul(self, 1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return _div(other, self)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ConfigurationError("only non-negative integer powers are supported")
        return _ipow(self, int(n))

    def __matmul__(self, other):
        return _matmul(self, other)

    def __rmatmul__(self, other):
        return _matmul(other, self)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    # -- elementwise and reductions ----------------------------------------
    def tanh(self):
        y = np.tanh(self.value)
        return self.tape._record(y, (self,), lambda g: (g * (1.0 - y * y),), "tanh")

    def exp(self):
        y = np.exp(self.value)
        return self.tape._record(y, (self,), lambda g: (g * y,), "exp")

    def sum(self, axis=None):
        shape = self.shape

        def back(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self.tape._record(np.sum(self.value, axis=axis), (self,), back, "sum")

    def mean(self, axis=None):
        n = np.size(self.value) if axis is None else np.shape(self.value)[axis]
        return self.sum(axis) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        old = self.shape
        return self.tape._record(
            self.value.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )

    @property
    def T(self):
        return self.tape._record(self.value.T, (self,), lambda g: (g.T,), "transpose")


def _add(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av + bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))
    shapes = [np.shape(x.value) for x in parents]

    def back(g):
        return tuple(_unbroadcast(g, s) for s in shapes)

    return tape._record(out, parents, back, "add")


def _neg(a):
    return a.tape._record(-a.value, (a,), lambda g: (-g,), "neg")


def _mul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av * bv
    if isinstance(a, Var) and isinstance(b, Var):
        sa, sb = np.shape(av), np.shape(bv)
        return tape._record(
            out, (a, b), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)), "mul"
        )
    var, const = (a, bv) if isinstance(a, Var) else (b, av)
    s = var.shape
    return tape._record(out, (var,), lambda g: (_unbroadcast(g * const, s),), "mul")


def _div(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av / bv
    parents, shapes = [], []
    for x in (a, b):
        if isinstance(x, Var):
            parents.append(x)
            shapes.append(x.shape)

    def back(g):
        grads = []
        if isinstance(a, Var):
            grads.append(_unbroadcast(g / bv, np.shape(av)))
        if isinstance(b, Var):
            grads.append(_unbroadcast(-g * out / bv, np.shape(bv)))
        return tuple(grads)

    return tape._record(out, tuple(parents), back, "div")


def _ipow(a, n):
    av = a.value
    if n == 0:
        return a.tape._record(np.ones_like(av), (a,), lambda g: (np.zeros_like(av),), "pow")
    return a.tape._record(av**n, (a,), lambda g: (g * n * av ** (n - 1),), "pow")


def _matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av @ bv

    def back(g):
        grads = []
        if isinstance(a, Var):
            if bv.ndim == 1:
                ga = np.multiply.outer(g, bv) if av.ndim > 1 else g * bv
            elif av.ndim == 1:
                ga = bv @ g
            else:
                ga = g @ bv.T
            grads.append(ga)
        if isinstance(b, Var):
            if av.ndim == 1:
                gb = np.multiply.outer(av, g)
            elif bv.ndim == 1:
                gb = av.T @ g
            else:
                gb = av.T @ g
            grads.append(gb)
        return tuple(grads)

    parents = tuple(x for x in (a, b) if isinstance(x, Var))
    return tape._record(out, parents, back, "matmul")


def _has_advanced(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def _getitem(a, idx):
    shape = a.shape
    advanced = _has_advanced(idx)

    def back(g):
        full = np.zeros(shape)
        if advanced:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return a.tape._record(a.value[idx], (a,), back, "getitem")


def value_of(x):
    """Plain numpy value of a Var, Dual component or number."""
    if isinstance(x, Dual):
        return value_of(x.value)
    return _val(x)


def tanh(x):
    if isinstance(x, (Var, Dual)):
        return x.tanh()
    return np.tanh(x)


def exp(x):
    if isinstance(x, (Var, Dual)):
        return x.exp()
    return np.exp(x)


def reshape(x, shape):
    if isinstance(x, (Var, Dual)):
        return x.reshape(shape)
    return np.reshape(x, shape)


def linear(a, W, b=None):
    """``a @ W.T + b`` for weights stored as (out, in); fused on the tape.

    ``a`` may be a :class:`Dual`, in which case the tangents are mapped by
    ``W`` only.
    """
    if isinstance(a, Dual):
        return Dual(linear(a.value, W, b), tuple(linear(t, W) for t in a.tangents))
    tape = _tape_of(a, W, b)
    av, Wv = _val(a), _val(W)
    out = av @ Wv.T
    if b is not None:
        out = out + _val(b)
    if tape is None:
        return out
    parents = tuple(x for x in (a, W, b) if isinstance(x, Var))

    def back(g):
        grads = []
        if isinstance(a, Var):
            grads.append(g @ Wv)
        if isinstance(W, Var):
            grads.append(np.multiply.outer(g, av) if av.ndim == 1 else g.T @ av)
        if isinstance(b, Var):
            grads.append(g if g.ndim == 1 else g.sum(axis=0))
        return tuple(grads)

    return tape._record(out, parents, back, "linear")


class Dual:
    """Value plus a fixed number of tangent (directional derivative) slots.

    Components can be floats, ndarrays or tape variables; arithmetic applies
    the chain rule exactly, slot by slot.
    """

    __slots__ = ("value", "tangents")
    __array_ufunc__ = None

    def __init__(self, value, tangents=()):
        self.value = value
        self.tangents = tuple(tangents)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangents!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, (a + b for a, b in zip(self.tangents, other.tangents)))
        return Dual(self.value + other, self.tangents)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.value, (-t for t in self.tangents))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            u, v = self.value, other.value
            return Dual(u * v, (u * tb + ta * v for ta, tb in zip(self.tangents, other.tangents)))
        return Dual(self.value * other, (t * other for t in self.tangents))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, ((ta - q * tb) / other.value for ta, tb in zip(self.tangents, other.tangents)))
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        return Dual(other * inv, (-other * inv * inv * t for t in self.tangents))

    def __pow__(self, n):
        if n == 0:
            return Dual(self.value**0, (t * 0.0 for t in self.tangents))
        d = n * self.value ** (n - 1)
        return Dual(self.value**n, (d * t for t in self.tangents))

    def tanh(self):
        y = tanh(self.value)
        s = 1.0 - y * y
        return Dual(y, (s * t for t in self.tangents))

    def exp(self):
        y = exp(self.value)
        return Dual(y, (y * t for t in self.tangents))

    def reshape(self, shape):
        return Dual(reshape(self.value, shape), (reshape(t, shape) for t in self.tangents))

    def __getitem__(self, idx):
        return Dual(self.value[idx], (t[idx] for t in self.tangents))


def _check_finite(tape, value, what):
    if not np.all(np.isfinite(value)):
        hit = tape.first_nonfinite()
        index, op = hit if hit is not None else (None, None)
        raise NumericError(f"non-finite {what} (first bad node {index}: {op})", index, op)


def value_and_grad(fn: Callable, theta) -> tuple[float, np.ndarray]:
    """Evaluate ``fn(theta)`` on a fresh tape; return (value, d value / d theta).

    ``fn`` receives ``theta`` as a leaf :class:`Var` and must return a scalar
    Var built from it. Raises :class:`NumericError` on a non-finite value or
    gradient, naming the first tape node that went bad.
    """
    tape = Tape()
    leaf = tape.leaf(theta)
    out = fn(leaf)
    if not isinstance(out, Var):
        # fn does not depend on theta
        return float(out), np.zeros_like(leaf.value)
    _check_finite(tape, out.value, "loss")
    tape.backward(out)
    grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
    _check_finite(tape, grad, "gradient")
    value = float(out.value)
    tape.clear()
    return value, grad


def loss_gradient(fn: Callable, theta) -> np.ndarray:
    """Gradient of the scalar ``fn(theta)`` with respect to the flat vector ``theta``."""
    return value_and_grad(fn, theta)[1]


def check_gradient(fn: Callable, theta, step: float = 1e-6) -> float:
    """Max over components of |analytic - central difference| / max(1, |analytic|)."""
    if step <= 0:
        raise ConfigurationError("step must be positive")
    theta = np.array(theta, dtype=float)
    grad = loss_gradient(fn, theta)
    worst = 0.0
    for k in range(theta.size):
        hi = theta.copy()
        lo = theta.copy()
        hi.flat[k] += step
        lo.flat[k] -= step
        fd = (float(fn(hi)) - float(fn(lo))) / (2.0 * step)
        if not np.isfinite(fd):
            raise NumericError(f"non-finite finite difference at component {k}", k)
        worst = max(worst, abs(grad.flat[k] - fd) / max(1.0, abs(grad.flat[k])))
    return worst


def eval_with_input_derivatives(forward: Callable, point: Sequence[float], directions: Sequence[int]):
    """Value of a scalar function of a point and its exact partials along ``directions``.

    ``forward`` maps a :class:`Dual` input (shape (1, d)) to a Dual output.
    Returns ``(value, {index: derivative})``.
    """
    x = np.atleast_2d(np.asarray(point, dtype=float))
    d = x.shape[1]
    for i in directions:
        if not 0 <= i < d:
            raise ConfigurationError(f"direction {i} outside input dimension {d}")
    seeds = tuple(np.eye(d)[i] for i in directions)
    out = forward(Dual(x, seeds))
    value = float(np.ravel(value_of(out.value))[0])
    derivs = {
        i: float(np.ravel(np.broadcast_to(value_of(t), np.shape(value_of(out.value))))[0])
        for i, t in zip(directions, out.tangents)
    }
    return value, derivs
