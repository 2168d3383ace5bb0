"""Reverse-mode autodiff on an append-only tape of dense float64 nodes.

The backward pass emits nodes onto the same tape instead of detached
numbers, so gradients are themselves differentiable.  This is what lets a
training loss contain squared input-gradients of a network (and gradients
of those with respect to parameters) without any special casing.

Node payloads are scalars or dense 2-D arrays.  Broadcasting is limited to
scalar-with-array, row (1,w) against (n,w) and column (n,1) against (n,w),
which is all an MLP over a batch of points needs.
"""

from __future__ import annotations

import numpy as np

_SCALAR = ()


class TapeError(RuntimeError):
    """Graph construction failed (bad shapes, wrong tape, non-scalar output)."""


class NonFiniteError(TapeError):
    """An op produced a NaN or infinity."""

    def __init__(self, op, nid):
        super().__init__(f"non-finite value produced by op {op!r} at node {nid}")
        self.op = op
        self.nid = nid


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else np.float64(out)


_ACTIVATIONS = {
    "softplus": _softplus,
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": _sigmoid,
}


def _eval_op(op, pvals, meta):
    """Single source of truth for forward evaluation; also used by replay."""
    if op == "add":
        return pvals[0] + pvals[1]
    if op == "mul":
        return pvals[0] * pvals[1]
    if op == "neg":
        return -pvals[0]
    if op == "exp":
        return np.exp(pvals[0])
    if op == "log":
        return np.log(pvals[0])
    if op == "max":
        return np.maximum(pvals[0], pvals[1])
    if op == "power":
        return pvals[0] ** meta
    if op == "dot":
        return np.float64(np.sum(pvals[0] * pvals[1]))
    if op == "matvec":
        ta, tb = meta
        a = pvals[0].T if ta else pvals[0]
        b = pvals[1].T if tb else pvals[1]
        return a @ b
    if op == "activation":
        return _ACTIVATIONS[meta](pvals[0])
    if op == "sum":
        axis = meta
        if axis is None:
            return np.float64(np.sum(pvals[0]))
        return np.sum(pvals[0], axis=axis, keepdims=True)
    raise TapeError(f"unknown op {op!r}")


class Node:
    __slots__ = ("tape", "nid", "op", "parents", "value", "meta")

    def __init__(self, tape, nid, op, parents, value, meta=None):
        self.tape = tape
        self.nid = nid
        self.op = op
        self.parents = parents
        self.value = value
        self.meta = meta

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(id={self.nid}, op={self.op}, shape={self.shape})"

    # arithmetic sugar; scalars on the other side become constants
    def __add__(self, other):
        return self.tape.add(self, self.tape.lift(other))

    def __radd__(self, other):
        return self.tape.add(self.tape.lift(other), self)

    def __sub__(self, other):
        return self.tape.add(self, self.tape.neg(self.tape.lift(other)))

    def __rsub__(self, other):
        return self.tape.add(self.tape.lift(other), self.tape.neg(self))

    def __mul__(self, other):
        return self.tape.mul(self, self.tape.lift(other))

    def __rmul__(self, other):
        return self.tape.mul(self.tape.lift(other), self)

    def __neg__(self):
        return self.tape.neg(self)

    def __pow__(self, p):
        return self.tape.power(self, p)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


def _check_broadcast(sa, sb):
    if sa == sb or sa == _SCALAR or sb == _SCALAR:
        return
    if len(sa) == 2 and len(sb) == 2:
        if sa[1] == sb[1] and (sa[0] == 1 or sb[0] == 1):
            return
        if sa[0] == sb[0] and (sa[1] == 1 or sb[1] == 1):
            return
    raise TapeError(f"incompatible shapes {sa} and {sb}")


class Tape:
    """Append-only computation graph; single-writer."""

    def __init__(self):
        self.nodes = []
        self.leaf_index = {}

    def _push(self, op, parents, meta=None):
        for p in parents:
            if p.tape is not self:
                raise TapeError("node belongs to a different tape")
        value = _eval_op(op, [p.value for p in parents], meta)
        nid = len(self.nodes)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(op, nid)
        node = Node(self, nid, op, tuple(parents), value, meta)
        self.nodes.append(node)
        return node

    def constant(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = np.float64(value)
        nid = len(self.nodes)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError("constant", nid)
        node = Node(self, nid, "constant", (), value)
        self.nodes.append(node)
        return node

    def leaf(self, label, value):
        if label in self.leaf_index:
            raise TapeError(f"duplicate leaf label {label!r}")
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = np.float64(value)
        nid = len(self.nodes)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError("leaf", nid)
        node = Node(self, nid, "leaf", (), value)
        self.nodes.append(node)
        self.leaf_index[label] = nid
        return node

    def lift(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise TapeError("node belongs to a different tape")
            return x
        return self.constant(x)

    # --- primitive ops -------------------------------------------------

    def add(self, a, b):
        _check_broadcast(a.shape, b.shape)
        return self._push("add", (a, b))

    def mul(self, a, b):
        _check_broadcast(a.shape, b.shape)
        return self._push("mul", (a, b))

    def neg(self, a):
        return self._push("neg", (a,))

    def exp(self, a):
        return self._push("exp", (a,))

    def log(self, a):
        return self._push("log", (a,))

    def maximum(self, a, b):
        b = self.lift(b)
        _check_broadcast(a.shape, b.shape)
        return self._push("max", (a, b))

    def power(self, a, p):
        return self._push("power", (a,), float(p))

    def dot(self, a, b):
        if a.shape != b.shape:
            raise TapeError(f"dot needs equal shapes, got {a.shape} {b.shape}")
        return self._push("dot", (a, b))

    def matmul(self, a, b, ta=False, tb=False):
        sa = a.shape[::-1] if ta else a.shape
        sb = b.shape[::-1] if tb else b.shape
        if len(sa) != 2 or len(sb) != 2 or sa[1] != sb[0]:
            raise TapeError(f"matmul shape mismatch {sa} @ {sb}")
        return self._push("matvec", (a, b), (ta, tb))

    def activation(self, a, kind):
        if kind not in _ACTIVATIONS:
            raise TapeError(f"unknown activation {kind!r}")
        return self._push("activation", (a,), kind)

    def softplus(self, a):
        return self.activation(a, "softplus")

    def sigmoid(self, a):
        return self.activation(a, "sigmoid")

    def sum(self, a, axis=None):
        if axis not in (None, 0, 1):
            raise TapeError("axis must be None, 0 or 1")
        return self._push("sum", (a,), axis)

    def zeros_like(self, a):
        return self.constant(np.zeros(a.shape))

    # --- backward ------------------------------------------------------

    def _unbroadcast(self, g, shape):
        """Reduce cotangent g back to the shape of the broadcast operand."""
        if g.shape == shape:
            return g
        if shape == _SCALAR:
            return self.sum(g)
        if shape[0] == 1 and g.shape[0] != 1:
            return self.sum(g, axis=0)
        if shape[1] == 1 and g.shape[1] != 1:
            return self.sum(g, axis=1)
        raise TapeError(f"cannot reduce {g.shape} to {shape}")

    def _vjp(self, node, g):
        """Contributions of cotangent g to each parent of node, as nodes."""
        op = node.op
        a = node.parents[0] if node.parents else None
        if op == "add":
            b = node.parents[1]
            return (self._unbroadcast(g, a.shape), self._unbroadcast(g, b.shape))
        if op == "mul":
            b = node.parents[1]
            return (
                self._unbroadcast(self.mul(g, b), a.shape),
                self._unbroadcast(self.mul(g, a), b.shape),
            )
        if op == "neg":
            return (self.neg(g),)
        if op == "exp":
            return (self.mul(g, node),)
        if op == "log":
            return (self.mul(g, self.power(a, -1.0)),)
        if op == "max":
            # subgradient 0 on ties; masks are measure-zero kinks, detached
            b = node.parents[1]
            mask = np.asarray(a.value > b.value, dtype=np.float64)
            if np.shape(mask) != node.shape:
                mask = np.broadcast_to(mask, node.shape).copy()
            mnode = self.constant(mask)
            ga = self._unbroadcast(self.mul(g, mnode), a.shape)
            gb = self._unbroadcast(self.mul(g, self.constant(1.0 - mask)), b.shape)
            return (ga, gb)
        if op == "power":
            p = node.meta
            return (self.mul(g, self.mul(self.constant(p), self.power(a, p - 1.0))),)
        if op == "dot":
            b = node.parents[1]
            return (self.mul(g, b), self.mul(g, a))
        if op == "matvec":
            b = node.parents[1]
            ta, tb = node.meta
            if ta:
                ga = self.matmul(b, g, ta=tb, tb=True)
            else:
                ga = self.matmul(g, b, ta=False, tb=not tb)
            if tb:
                gb = self.matmul(g, a, ta=True, tb=ta)
            else:
                gb = self.matmul(a, g, ta=not ta, tb=False)
            return (ga, gb)
        if op == "activation":
            kind = node.meta
            if kind == "softplus":
                return (self.mul(g, self.sigmoid(a)),)
            if kind == "tanh":
                return (self.mul(g, 1.0 - self.power(node, 2.0)),)
            if kind == "relu":
                mask = np.asarray(a.value > 0.0, dtype=np.float64)
                return (self.mul(g, self.constant(mask)),)
            if kind == "sigmoid":
                return (self.mul(g, self.mul(node, 1.0 - node)),)
        if op == "sum":
            axis = node.meta
            if axis is None:
                return (self.mul(g, self.constant(np.ones(a.shape))),)
            return (self.mul(g, self.constant(np.ones(a.shape))),)
        raise TapeError(f"no vjp for op {node.op!r}")

    def gradient(self, output, wrt):
        """Differentiate a scalar node with respect to each node in wrt.

        Returns one node per entry of wrt, living on this tape, so the
        results can be differentiated again.  Nodes not reachable from
        the output get a zero node.
        """
        if output.tape is not self:
            raise TapeError("output is on a different tape")
        if output.shape != _SCALAR:
            raise TapeError(f"gradient needs a scalar output, got shape {output.shape}")
        wrt = list(wrt)

        # ancestors of output, found by DFS over parent links
        involved = set()
        stack = [output]
        while stack:
            n = stack.pop()
            if n.nid in involved:
                continue
            involved.add(n.nid)
            stack.extend(n.parents)

        cotangent = {output.nid: self.constant(1.0)}
        for nid in sorted(involved, reverse=True):
            node = self.nodes[nid]
            g = cotangent.get(nid)
            if g is None or not node.parents:
                continue
            contribs = self._vjp(node, g)
            for parent, contrib in zip(node.parents, contribs):
                if contrib is None:
                    continue
                prev = cotangent.get(parent.nid)
                cotangent[parent.nid] = contrib if prev is None else self.add(prev, contrib)

        out = []
        for node in wrt:
            g = cotangent.get(node.nid)
            out.append(g if g is not None else self.zeros_like(node))
        return out

    def replay(self):
        """Recompute every node from its parents; returns max abs deviation."""
        worst = 0.0
        for node in self.nodes:
            if not node.parents:
                continue
            fresh = _eval_op(node.op, [p.value for p in node.parents], node.meta)
            worst = max(worst, float(np.max(np.abs(fresh - node.value))))
        return worst


def record(builder, **leaves):
    """Build an expression on a fresh tape from labeled numeric leaves.

    builder receives a dict of leaf nodes and returns the root node.
    """
    tape = Tape()
    nodes = {}
    for label, value in leaves.items():
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise TapeError(f"leaf {label!r} is not finite")
        nodes[label] = tape.leaf(label, arr)
    root = builder(nodes)
    if not isinstance(root, Node) or root.tape is not tape:
        raise TapeError("builder must return a node on the recording tape")
    return root


def gradient(output, wrt):
    """Module-level convenience for Tape.gradient."""
    return output.tape.gradient(output, wrt)


def gradient_of_gradient(output, inner_wrt, outer_scalar_builder, outer_wrt):
    """Second-order derivative of a scalar built from an inner gradient.

    The inner gradient nodes are handed to outer_scalar_builder, which
    must combine them into a scalar node; that scalar is then
    differentiated with respect to outer_wrt.
    """
    tape = output.tape
    inner = tape.gradient(output, inner_wrt)
    outer = outer_scalar_builder(inner)
    return tape.gradient(outer, outer_wrt)
