"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value in a computation graph is a Node holding a 2-D numpy array
(column vectors are (n, 1); feature sequences are (n, dim) with time as
rows).  Operations record their parents and a backward closure; calling
backward() on a scalar loss walks the graph once in reverse topological
order, accumulating gradients.  Gradients keep accumulating across
backward() calls until zero_grad() is used.
"""

from __future__ import annotations

import numpy as np

GROUP_TAGGER = "tagger"
GROUP_DISCRIMINATOR = "discriminator"


class Node:
    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        if value.ndim != 2:
            raise ValueError(f"nodes hold 2-D arrays, got shape {value.shape}")
        self.value = value
        self.grad = np.zeros_like(value)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def tensor(data):
    """Create a leaf node from array-like data; rejects non-finite entries."""
    value = np.array(data, dtype=np.float64, order="C")
    if value.ndim == 0:
        value = value.reshape(1, 1)
    elif value.ndim == 1:
        value = value.reshape(-1, 1)
    if not np.all(np.isfinite(value)):
        raise ValueError("tensor data contains NaN or Inf")
    return Node(value)


class Parameter:
    """Named trainable leaf, assigned to one of the two optimization groups."""

    def __init__(self, name, value, group):
        if group not in (GROUP_TAGGER, GROUP_DISCRIMINATOR):
            raise ValueError(f"unknown parameter group {group!r}")
        self.name = name
        self.node = tensor(value)
        self.group = group

    @property
    def value(self):
        return self.node.value

    @value.setter
    def value(self, v):
        self.node.value[...] = v

    @property
    def grad(self):
        return self.node.grad

    @grad.setter
    def grad(self, g):
        self.node.grad[...] = g

    def zero_grad(self):
        self.node.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.node.value.shape}, group={self.group})"


def zero_grads(params):
    for p in params:
        p.zero_grad()


def backward(loss):
    """Populate grads of every node reachable from a scalar loss node.

    Each node's backward rule runs exactly once, in reverse topological
    order, so shared subgraphs are not double counted.
    """
    if loss.value.shape != (1, 1):
        raise ValueError(f"backward requires a scalar (1,1) node, got {loss.value.shape}")
    order = []
    seen = {id(loss)}
    stack = [(loss, 0)]
    while stack:
        node, i = stack[-1]
        parents = node._parents
        if i < len(parents):
            stack[-1] = (node, i + 1)
            p = parents[i]
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, 0))
        else:
            stack.pop()
            order.append(node)
    loss.grad += 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def add(a, b):
    _require(a.shape == b.shape, f"add: shape mismatch {a.shape} vs {b.shape}")
    out = Node(a.value + b.value, (a, b))

    def bwd(g):
        a.grad += g
        b.grad += g

    out._backward = bwd
    return out


def sub(a, b):
    _require(a.shape == b.shape, f"sub: shape mismatch {a.shape} vs {b.shape}")
    out = Node(a.value - b.value, (a, b))

    def bwd(g):
        a.grad += g
        b.grad -= g

    out._backward = bwd
    return out


def add_colvec(a, v):
    """a (r,c) plus column vector v (r,1), broadcast across columns."""
    _require(
        v.shape == (a.shape[0], 1),
        f"add_colvec: expected {(a.shape[0], 1)} column, got {v.shape}",
    )
    out = Node(a.value + v.value, (a, v))

    def bwd(g):
        a.grad += g
        v.grad += g.sum(axis=1, keepdims=True)

    out._backward = bwd
    return out


def matmul(a, b):
    _require(
        a.shape[1] == b.shape[0],
        f"matmul: inner dims differ, {a.shape} @ {b.shape}",
    )
    out = Node(a.value @ b.value, (a, b))

    def bwd(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    out._backward = bwd
    return out


def pointwise_mul(a, b):
    _require(a.shape == b.shape, f"pointwise_mul: shape mismatch {a.shape} vs {b.shape}")
    out = Node(a.value * b.value, (a, b))

    def bwd(g):
        a.grad += g * b.value
        b.grad += g * a.value

    out._backward = bwd
    return out


def tanh(a):
    t = np.tanh(a.value)
    out = Node(t, (a,))

    def bwd(g):
        a.grad += g * (1.0 - t * t)

    out._backward = bwd
    return out


def sigmoid(a):
    # exp(-logaddexp(0, -x)) is stable for large |x|
    s = np.exp(-np.logaddexp(0.0, -a.value))
    out = Node(s, (a,))

    def bwd(g):
        a.grad += g * s * (1.0 - s)

    out._backward = bwd
    return out


def concat_rows(a, b):
    _require(a.shape[1] == b.shape[1], f"concat_rows: column mismatch {a.shape} vs {b.shape}")
    out = Node(np.vstack((a.value, b.value)), (a, b))
    ra = a.shape[0]

    def bwd(g):
        a.grad += g[:ra]
        b.grad += g[ra:]

    out._backward = bwd
    return out


def concat_cols(a, b):
    _require(a.shape[0] == b.shape[0], f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    out = Node(np.hstack((a.value, b.value)), (a, b))
    ca = a.shape[1]

    def bwd(g):
        a.grad += g[:, :ca]
        b.grad += g[:, ca:]

    out._backward = bwd
    return out


def transpose(a):
    out = Node(np.ascontiguousarray(a.value.T), (a,))

    def bwd(g):
        a.grad += g.T

    out._backward = bwd
    return out


def row(a, i):
    """Row i of a as a (1, cols) node."""
    _require(0 <= i < a.shape[0], f"row: index {i} out of range for {a.shape}")
    out = Node(a.value[i : i + 1].copy(), (a,))

    def bwd(g):
        a.grad[i] += g[0]

    out._backward = bwd
    return out


def block(a, r0, r1, c0, c1):
    """Contiguous sub-matrix a[r0:r1, c0:c1]."""
    _require(
        0 <= r0 < r1 <= a.shape[0] and 0 <= c0 < c1 <= a.shape[1],
        f"block: bad slice ({r0}:{r1}, {c0}:{c1}) of {a.shape}",
    )
    out = Node(a.value[r0:r1, c0:c1].copy(), (a,))

    def bwd(g):
        a.grad[r0:r1, c0:c1] += g

    out._backward = bwd
    return out


def pick(a, i, j):
    """Single entry a[i, j] as a (1,1) node."""
    _require(
        0 <= i < a.shape[0] and 0 <= j < a.shape[1],
        f"pick: index ({i},{j}) out of range for {a.shape}",
    )
    out = Node(a.value[i, j].reshape(1, 1).copy(), (a,))

    def bwd(g):
        a.grad[i, j] += g[0, 0]

    out._backward = bwd
    return out


def logsumexp_rows(a):
    """log sum exp down each column (over rows), shape (1, cols).

    The row maximum is subtracted before exponentiation, so the result is
    overflow-free and exact when there is a single row.
    """
    _require(a.shape[0] >= 1, "logsumexp_rows: empty input")
    m = a.value.max(axis=0, keepdims=True)
    e = np.exp(a.value - m)
    out_val = m + np.log(e.sum(axis=0, keepdims=True))
    out = Node(out_val, (a,))

    def bwd(g):
        # d/da logsumexp = softmax along the reduced axis
        a.grad += g * np.exp(a.value - out_val)

    out._backward = bwd
    return out


def max_pool_time(hs):
    """Elementwise max over time.

    Accepts either a (n, dim) node with time as rows, giving a (1, dim)
    result, or a non-empty list of equal-shaped nodes, giving a node of
    that shape.  Gradient flows only to the first position attaining each
    maximum.
    """
    if isinstance(hs, Node):
        _require(hs.shape[0] >= 1, "max_pool_time: empty sequence")
        idx = hs.value.argmax(axis=0)
        cols = np.arange(hs.shape[1])
        out = Node(hs.value[idx, cols].reshape(1, -1), (hs,))

        def bwd(g):
            hs.grad[idx, cols] += g[0]

        out._backward = bwd
        return out

    if len(hs) == 0:
        raise ValueError("max_pool_time: empty sequence")
    shape = hs[0].shape
    for h in hs:
        _require(h.shape == shape, "max_pool_time: shapes differ across time")
    stacked = np.stack([h.value for h in hs])
    idx = stacked.argmax(axis=0)
    out = Node(stacked.max(axis=0), tuple(hs))

    def bwd_list(g):
        for k, h in enumerate(hs):
            h.grad += g * (idx == k)

    out._backward = bwd_list
    return out


def grad_reverse(a):
    """Identity in the forward pass; negates the gradient in the backward pass."""
    out = Node(a.value, (a,))

    def bwd(g):
        a.grad -= g

    out._backward = bwd
    return out


def dropout(a, p, training, rng=None):
    """Inverted dropout: zero entries w.p. p and scale survivors by 1/(1-p).

    Identity at inference time and for p = 0.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        out = Node(a.value, (a,))

        def bwd_id(g):
            a.grad += g

        out._backward = bwd_id
        return out

    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    scale = (rng.random(a.shape) >= p) / (1.0 - p)
    out = Node(a.value * scale, (a,))

    def bwd(g):
        a.grad += g * scale

    out._backward = bwd
    return out


def take_rows(a, ids):
    """Gather rows of a by index; gradients of repeated rows accumulate."""
    ids = np.asarray(ids, dtype=np.intp)
    _require(ids.ndim == 1, "take_rows: ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= a.shape[0]):
        raise ValueError(f"take_rows: index out of range for {a.shape[0]} rows")
    out = Node(a.value[ids], (a,))

    def bwd(g):
        np.add.at(a.grad, ids, g)

    out._backward = bwd
    return out


def window_stack(a, radius):
    """Stack each row with its +-radius neighbours, zero padding the ends.

    (n, k) -> (n, (2*radius+1)*k); output row t is the concatenation of
    rows t-radius .. t+radius of a.
    """
    _require(radius >= 0, "window_stack: radius must be >= 0")
    n, k = a.shape
    width = 2 * radius + 1
    out_val = np.zeros((n, width * k))
    spans = []
    for j, off in enumerate(range(-radius, radius + 1)):
        t0 = max(0, -off)
        t1 = min(n, n - off)
        if t0 < t1:
            out_val[t0:t1, j * k : (j + 1) * k] = a.value[t0 + off : t1 + off]
            spans.append((t0, t1, j, off))
    out = Node(out_val, (a,))

    def bwd(g):
        for t0, t1, j, off in spans:
            a.grad[t0 + off : t1 + off] += g[t0:t1, j * k : (j + 1) * k]

    out._backward = bwd
    return out


def linear(x, w, b=None):
    """Affine map of row features: x (n,i) @ w (o,i)^T, plus optional bias (o,1)."""
    _require(x.shape[1] == w.shape[1], f"linear: feature dim {x.shape} vs weight {w.shape}")
    y = x.value @ w.value.T
    if b is not None:
        _require(b.shape == (w.shape[0], 1), f"linear: bias shape {b.shape}")
        y = y + b.value[:, 0]
    out = Node(y, (x, w) if b is None else (x, w, b))

    def bwd(g):
        x.grad += g @ w.value
        w.grad += g.T @ x.value
        if b is not None:
            b.grad += g.sum(axis=0)[:, None]

    out._backward = bwd
    return out
