"""Tape-based reverse-mode differentiation on float64 numpy arrays.

The tape records vector-level primitives (matmul, elementwise maps,
reductions) so its length stays proportional to simulation steps times
network layers rather than parameter count.  A node stores its value and
a vector-Jacobian-product closure; `backward_sweep` walks the tape once
in reverse, accumulating adjoints in a fixed order so identical tapes
produce bit-identical adjoints.

Constants may be raw numpy arrays or Python floats; only `Var` operands
receive adjoints.
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.mul(self, -1.0)

    def __pow__(self, p):
        return self.tape.power(self, p)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


class Tape:
    """Append-only record of primitive operations (a DAG in append order)."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list = []  # callable(adjoint) -> tuple of parent adjoints

    def _record(self, value, parent_vars, vjp) -> Var:
        self.values.append(value)
        self.parents.append(tuple(p.index for p in parent_vars))
        self.vjps.append(vjp)
        return Var(self, len(self.values) - 1)

    def __len__(self) -> int:
        return len(self.values)

    # -- inputs ------------------------------------------------------------

    def input(self, value) -> Var:
        v = np.asarray(value, dtype=np.float64)
        return self._record(v, (), None)

    # -- elementwise -------------------------------------------------------

    def add(self, a, b) -> Var:
        av, bv = _val(a), _val(b)
        out = av + bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g, g))
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g,))
        return self._record(out, (b,), lambda g: (g,))

    def sub(self, a, b) -> Var:
        av, bv = _val(a), _val(b)
        out = av - bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g, -g))
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g,))
        return self._record(out, (b,), lambda g: (-g,))

    def mul(self, a, b) -> Var:
        av, bv = _val(a), _val(b)
        out = av * bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g * bv, g * av))
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g * bv,))
        return self._record(out, (b,), lambda g: (g * av,))

    def div(self, a, b) -> Var:
        av, bv = _val(a), _val(b)
        out = av / bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(
                out, (a, b), lambda g: (g / bv, -g * av / (bv * bv))
            )
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g / bv,))
        return self._record(out, (b,), lambda g: (-g * av / (bv * bv),))

    def exp(self, a: Var) -> Var:
        out = np.exp(a.value)
        return self._record(out, (a,), lambda g: (g * out,))

    def log(self, a: Var) -> Var:
        av = a.value
        return self._record(np.log(av), (a,), lambda g: (g / av,))

    def power(self, a: Var, p: float) -> Var:
        av = a.value
        out = av**p
        return self._record(out, (a,), lambda g: (g * p * av ** (p - 1.0),))

    def leaky_relu(self, a: Var) -> Var:
        av = a.value
        mask = np.where(av >= 0.0, 1.0, LEAKY_SLOPE)
        return self._record(av * mask, (a,), lambda g: (g * mask,))

    def softplus(self, a: Var) -> Var:
        av = a.value
        out = np.logaddexp(0.0, av)
        sig = _stable_sigmoid(av)
        return self._record(out, (a,), lambda g: (g * sig,))

    def sigmoid(self, a: Var) -> Var:
        out = _stable_sigmoid(a.value)
        return self._record(out, (a,), lambda g: (g * out * (1.0 - out),))

    def clip(self, a: Var, lo: float, hi: float) -> Var:
        av = a.value
        inside = ((av > lo) & (av < hi)).astype(np.float64)
        return self._record(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))

    def softmax_rows(self, a: Var) -> Var:
        # max-subtraction for overflow safety
        av = a.value
        shifted = av - av.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=-1, keepdims=True)

        def vjp(g):
            inner = (g * out).sum(axis=-1, keepdims=True)
            return ((g - inner) * out,)

        return self._record(out, (a,), vjp)

    # -- linear algebra ------------------------------------------------------

    def matmul(self, a, b) -> Var:
        """(M, p) @ (p, q); either factor may be a Var."""
        av, bv = _val(a), _val(b)
        out = av @ bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g @ bv.T, av.T @ g))
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g @ bv.T,))
        return self._record(out, (b,), lambda g: (av.T @ g,))

    def matvec(self, a, v) -> Var:
        """(M, k) @ (k,) -> (M,); either factor may be a Var."""
        av, vv = _val(a), _val(v)
        out = av @ vv
        if isinstance(a, Var) and isinstance(v, Var):
            return self._record(
                out, (a, v), lambda g: (np.outer(g, vv), av.T @ g)
            )
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (np.outer(g, vv),))
        return self._record(out, (v,), lambda g: (av.T @ g,))

    def dot(self, a, b) -> Var:
        """(k,) . (k,) -> scalar."""
        av, bv = _val(a), _val(b)
        out = av @ bv
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g * bv, g * av))
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g * bv,))
        return self._record(out, (b,), lambda g: (g * av,))

    def row_dot(self, a, b) -> Var:
        """Row-wise dot of two (M, k) operands -> (M,)."""
        av, bv = _val(a), _val(b)
        out = np.einsum("ij,ij->i", av, bv)
        if isinstance(a, Var) and isinstance(b, Var):
            return self._record(
                out, (a, b), lambda g: (g[:, None] * bv, g[:, None] * av)
            )
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g[:, None] * bv,))
        return self._record(out, (b,), lambda g: (g[:, None] * av,))

    def add_bias(self, a: Var, b) -> Var:
        """(M, q) + (q,) with sum-reduced adjoint for the bias."""
        av, bv = _val(a), _val(b)
        out = av + bv
        if isinstance(b, Var):
            return self._record(out, (a, b), lambda g: (g, g.sum(axis=0)))
        return self._record(out, (a,), lambda g: (g,))

    def scale_rows(self, a: Var, s) -> Var:
        """(M, k) scaled row-wise by (M,); either operand may be a Var."""
        av, sv = _val(a), _val(s)
        out = av * sv[:, None]
        if isinstance(a, Var) and isinstance(s, Var):
            return self._record(
                out,
                (a, s),
                lambda g: (g * sv[:, None], np.einsum("ij,ij->i", g, av)),
            )
        if isinstance(a, Var):
            return self._record(out, (a,), lambda g: (g * sv[:, None],))
        return self._record(
            out, (s,), lambda g: (np.einsum("ij,ij->i", g, av),)
        )

    # -- reductions / reshaping ---------------------------------------------

    def sum(self, a: Var) -> Var:
        av = a.value
        return self._record(
            np.float64(av.sum()), (a,), lambda g: (np.broadcast_to(g, av.shape).copy(),)
        )

    def mean(self, a: Var) -> Var:
        av = a.value
        n = av.size
        return self._record(
            np.float64(av.mean()),
            (a,),
            lambda g: (np.broadcast_to(g / n, av.shape).copy(),),
        )

    def rowsum(self, a: Var) -> Var:
        av = a.value
        return self._record(
            av.sum(axis=-1),
            (a,),
            lambda g: (np.broadcast_to(g[:, None], av.shape).copy(),),
        )

    def stack_cols(self, cols) -> Var:
        """Stack (M,) operands into (M, k); constants allowed."""
        vals = [_val(c) for c in cols]
        out = np.stack(vals, axis=1)
        var_pos = [(j, c) for j, c in enumerate(cols) if isinstance(c, Var)]
        parents = tuple(c for _, c in var_pos)
        pos = [j for j, _ in var_pos]

        def vjp(g):
            return tuple(g[:, j] for j in pos)

        return self._record(out, parents, vjp)

    def col(self, a: Var, j: int) -> Var:
        av = a.value

        def vjp(g):
            out = np.zeros_like(av)
            out[:, j] = g
            return (out,)

        return self._record(av[:, j].copy(), (a,), vjp)

    def slice_cols(self, a: Var, lo: int, hi: int) -> Var:
        av = a.value

        def vjp(g):
            out = np.zeros_like(av)
            out[:, lo:hi] = g
            return (out,)

        return self._record(av[:, lo:hi].copy(), (a,), vjp)


def backward_sweep(tape: Tape, root: Var) -> list:
    """Adjoint of every node with respect to the scalar at `root`.

    Returns a list aligned with tape order; entries are None for nodes
    the root does not depend on.
    """
    root_val = tape.values[root.index]
    if np.ndim(root_val) != 0:
        raise ValueError("backward_sweep root must be a scalar node")
    adjoints: list = [None] * len(tape.values)
    adjoints[root.index] = np.float64(1.0)
    for i in range(root.index, -1, -1):
        g = adjoints[i]
        if g is None or not tape.parents[i]:
            continue
        contribs = tape.vjps[i](g)
        for pidx, contrib in zip(tape.parents[i], contribs):
            if adjoints[pidx] is None:
                adjoints[pidx] = np.array(contrib, dtype=np.float64, copy=True)
            else:
                adjoints[pidx] = adjoints[pidx] + contrib
    return adjoints
