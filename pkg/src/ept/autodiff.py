"""Reverse-mode automatic differentiation over dense float64 arrays.

A small define-by-run engine: expressions evaluate eagerly and record their
construction order on a :class:`Tape`.  Backward passes assemble adjoints out
of the same primitives, so a gradient is itself a node of the graph.  That is
what lets a penalty built from an input gradient -- e.g. the mean squared norm
of d(output)/d(input) of a network -- be back-propagated to the network
parameters with no extra machinery.

Conventions:

* every value is a float64 ndarray; scalars are 0-d arrays,
* ReLU takes subgradient 0 at the kink, and activation masks differentiate
  to zero (they are piecewise constant),
* a tape is built per batch and discarded; construction order is the
  topological order, so identical construction sequences replay identically.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "broadcast_to",
    "vsum",
    "vmean",
    "square",
    "relu",
    "exp",
    "log",
    "sigmoid",
    "softplus",
]


class Var:
    """One graph node: a cached value plus the recipe that produced it.

    ``parents`` are the operand nodes, ``_fwd`` recomputes the value from the
    parents' current values (replay), and ``_vjp`` builds the adjoint
    contributions for the parents as new graph nodes.
    """

    __slots__ = ("tape", "op", "parents", "value", "grad", "trainable", "index", "_fwd", "_vjp")

    def __init__(self, tape, op, parents, value, fwd=None, vjp=None, trainable=False):
        self.tape = tape
        self.op = op
        self.parents = parents
        self.value = value
        self.grad = None
        self.trainable = trainable
        self._fwd = fwd
        self._vjp = vjp
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def set_value(self, value):
        """Rebind a leaf's value (shape-preserving) ahead of a replay."""
        if self._fwd is not None:
            raise ValueError("only leaves can be rebound")
        arr = _as_array(value)
        if arr.shape != self.value.shape:
            raise ValueError(f"shape mismatch: bound {arr.shape}, expected {self.value.shape}")
        _check_finite(arr)
        self.value = arr

    def __repr__(self):
        return f"Var({self.op}, shape={self.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Construction-ordered node list with forward replay and backward passes."""

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value, trainable=False) -> Var:
        """Register an input node.  Non-finite entries are rejected."""
        arr = _as_array(value)
        _check_finite(arr)
        return Var(self, "leaf", (), arr, trainable=trainable)

    def constant(self, value) -> Var:
        return self.leaf(value, trainable=False)

    def forward(self):
        """Recompute every node, in construction order, from current leaf values."""
        for node in self.nodes:
            if node._fwd is not None:
                node.value = node._fwd()

    def backward(self, root: Var, seed=None):
        """Populate ``.grad`` (an ndarray) on every node the root depends on.

        ``seed`` is the adjoint of the root; defaults to ones of the root's
        shape.  Unreached nodes keep ``grad = None``.
        """
        adj = self._adjoints(root, seed)
        for idx, g in adj.items():
            self.nodes[idx].grad = g.value

    def grad(self, root: Var, wrt, seed=None):
        """Adjoints of ``wrt`` as graph nodes, differentiable themselves.

        ``wrt`` may be a Var or a list of Vars; nodes the root does not
        depend on get zero adjoints.
        """
        single = isinstance(wrt, Var)
        targets = [wrt] if single else list(wrt)
        adj = self._adjoints(root, seed)
        out = []
        for w in targets:
            g = adj.get(w.index)
            if g is None:
                g = self.constant(np.zeros_like(w.value))
            out.append(g)
        return out[0] if single else out

    def _adjoints(self, root: Var, seed):
        if root.tape is not self:
            raise ValueError("root does not belong to this tape")
        if seed is None:
            seed_var = self.constant(np.ones_like(root.value))
        elif isinstance(seed, Var):
            seed_var = seed
        else:
            seed_var = self.constant(seed)
        if seed_var.shape != root.shape:
            raise ValueError(f"seed shape {seed_var.shape} != root shape {root.shape}")

        # Sweep indices downward from the root.  Consumers always have larger
        # indices than their operands, so a node's adjoint is complete by the
        # time it is visited; nodes built during the sweep land above the root
        # and are left alone.
        adj: dict[int, Var] = {root.index: seed_var}
        for i in range(root.index, -1, -1):
            g = adj.get(i)
            if g is None:
                continue
            node = self.nodes[i]
            if node._vjp is None:
                continue
            for parent, contrib in zip(node.parents, node._vjp(node, g)):
                if contrib is None:
                    continue
                prev = adj.get(parent.index)
                adj[parent.index] = contrib if prev is None else add(prev, contrib)
        return adj


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value at graph boundary")


def _lift(x, tape) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("operands belong to different tapes")
        return x
    return tape.constant(x)


def _tape_of(a, b=None) -> Tape:
    if isinstance(a, Var):
        return a.tape
    if isinstance(b, Var):
        return b.tape
    raise TypeError("at least one operand must be a Var")


def _unbroadcast(g: Var, shape) -> Var:
    """Reduce an adjoint back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = vsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ts) in enumerate(zip(g.shape, shape)) if ts == 1 and gs != 1)
    if axes:
        g = vsum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)

    def fwd():
        return np.add(a.value, b.value)

    def vjp(node, g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Var(tape, "add", (a, b), fwd(), fwd, vjp)


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)

    def fwd():
        return np.subtract(a.value, b.value)

    def vjp(node, g):
        return _unbroadcast(g, a.shape), _unbroadcast(neg(g), b.shape)

    return Var(tape, "sub", (a, b), fwd(), fwd, vjp)


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)

    def fwd():
        return np.multiply(a.value, b.value)

    def vjp(node, g):
        return _unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)

    return Var(tape, "mul", (a, b), fwd(), fwd, vjp)


def div(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)

    def fwd():
        return np.divide(a.value, b.value)

    def vjp(node, g):
        da = _unbroadcast(div(g, b), a.shape)
        db = _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape)
        return da, db

    return Var(tape, "div", (a, b), fwd(), fwd, vjp)


def neg(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        return np.negative(a.value)

    def vjp(node, g):
        return (neg(g),)

    return Var(tape, "neg", (a,), fwd(), fwd, vjp)


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def fwd():
        return a.value @ b.value

    def vjp(node, g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return Var(tape, "matmul", (a, b), fwd(), fwd, vjp)


def transpose(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)
    if a.ndim != 2:
        raise ValueError("transpose expects a 2-d operand")

    def fwd():
        return a.value.T

    def vjp(node, g):
        return (transpose(g),)

    return Var(tape, "transpose", (a,), fwd(), fwd, vjp)


def reshape(a, shape) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)
    shape = tuple(shape)

    def fwd():
        return np.reshape(a.value, shape)

    def vjp(node, g):
        return (reshape(g, a.shape),)

    return Var(tape, "reshape", (a,), fwd(), fwd, vjp)


def broadcast_to(a, shape) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)
    shape = tuple(shape)

    def fwd():
        return np.broadcast_to(a.value, shape)

    def vjp(node, g):
        return (_unbroadcast(g, a.shape),)

    return Var(tape, "broadcast_to", (a,), fwd(), fwd, vjp)


def vsum(a, axis=None, keepdims=False) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)
    if axis is not None:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
    else:
        axes = None

    def fwd():
        return np.sum(a.value, axis=axes, keepdims=keepdims)

    def vjp(node, g):
        if axes is None:
            gg = reshape(g, (1,) * a.ndim) if a.ndim else g
        elif keepdims:
            gg = g
        else:
            kept = tuple(1 if i in axes else n for i, n in enumerate(a.shape))
            gg = reshape(g, kept)
        return (broadcast_to(gg, a.shape),)

    return Var(tape, "sum", (a,), fwd(), fwd, vjp)


def vmean(a, axis=None, keepdims=False) -> Var:
    a = _lift(a, _tape_of(a))
    count = a.size if axis is None else np.prod(
        [a.shape[ax % a.ndim] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def square(a) -> Var:
    return mul(a, a)


def relu(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        return np.maximum(a.value, 0.0)

    def vjp(node, g):
        return (mul(g, _active_mask(a)),)

    return Var(tape, "relu", (a,), fwd(), fwd, vjp)


def _active_mask(a: Var) -> Var:
    # Piecewise-constant indicator of the active ReLU region; its own
    # derivative is zero everywhere (the kink set has measure zero).
    def fwd():
        return (a.value > 0.0).astype(np.float64)

    def vjp(node, g):
        return (None,)

    return Var(a.tape, "active_mask", (a,), fwd(), fwd, vjp)


def exp(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        return np.exp(a.value)

    def vjp(node, g):
        return (mul(g, node),)

    return Var(tape, "exp", (a,), fwd(), fwd, vjp)


def log(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        return np.log(a.value)

    def vjp(node, g):
        return (div(g, a),)

    return Var(tape, "log", (a,), fwd(), fwd, vjp)


def sigmoid(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        x = a.value
        z = np.exp(-np.abs(x))
        return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def vjp(node, g):
        return (mul(g, mul(node, sub(1.0, node))),)

    return Var(tape, "sigmoid", (a,), fwd(), fwd, vjp)


def softplus(a) -> Var:
    tape = _tape_of(a)
    a = _lift(a, tape)

    def fwd():
        return np.logaddexp(0.0, a.value)

    def vjp(node, g):
        return (mul(g, sigmoid(a)),)

    return Var(tape, "softplus", (a,), fwd(), fwd, vjp)
