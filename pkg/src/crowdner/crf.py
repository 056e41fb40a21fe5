"""Linear-chain CRF output layer.

Scores a label sequence as the sum of per-position emissions and
transition weights, including learned transitions from a BOS pseudo-label
into the first position and from the last position into EOS.  The
partition function runs in log space; an exhaustive enumeration oracle is
provided for testing.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Node, Parameter
from .layers import xavier

BRUTE_FORCE_LIMIT = 10**6


class CrfLayer:
    """Emission matrix plus transition matrix augmented with BOS/EOS."""

    def __init__(self, name, n_labels, feature_dim, rng, group):
        if n_labels < 1:
            raise ValueError("CRF needs at least one label")
        self.n_labels = n_labels
        self.bos = n_labels
        self.eos = n_labels + 1
        self.w = Parameter(f"{name}.W", xavier(rng, n_labels, feature_dim), group)
        self.t = Parameter(
            f"{name}.T", xavier(rng, n_labels + 2, n_labels + 2), group
        )

    def params(self):
        return [self.w, self.t]


def emissions(layer, h_ner):
    """Per-position label scores (n, |labels|); a plain linear map, no bias."""
    if h_ner.shape[0] < 1:
        raise ValueError("emissions: empty sequence")
    return ad.linear(h_ner, layer.w.node)


def _check_labels(e, y):
    n, n_labels = e.shape
    y = np.asarray(y, dtype=np.intp)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"label sequence length {y.shape} does not match {n} positions")
    if y.size and (y.min() < 0 or y.max() >= n_labels):
        raise ValueError(f"label index out of range for {n_labels} labels")
    return y


def sequence_score(e, t, y):
    """Global score of label sequence y: emissions plus transitions, with
    BOS -> y_1 and y_n -> EOS included."""
    y = _check_labels(e, y)
    n, n_labels = e.shape
    bos, eos = n_labels, n_labels + 1
    prev = np.concatenate(([bos], y))
    nxt = np.concatenate((y, [eos]))
    val = e.value[np.arange(n), y].sum() + t.value[prev, nxt].sum()
    out = Node(np.array([[val]]), (e, t))

    def bwd(g):
        s = g[0, 0]
        np.add.at(e.grad, (np.arange(n), y), s)
        np.add.at(t.grad, (prev, nxt), s)

    out._backward = bwd
    return out


def log_partition(e, t):
    """log sum over all label sequences of exp(score), via the forward
    algorithm over the label lattice in log space.

    Runs as one fused graph op: the forward recursion keeps the softmax
    weights of every logsumexp and the backward closure replays the
    recursion in reverse, which spreads the incoming gradient over
    emissions and transitions exactly as the op-by-op graph would.
    """
    n, n_labels = e.shape
    if n < 1:
        raise ValueError("log_partition: empty sequence")
    bos, eos = n_labels, n_labels + 1
    t_val = t.value
    logz, soft, w_final = _kernels.crf_forward(
        e.value,
        np.ascontiguousarray(t_val[:n_labels, :n_labels]),
        np.ascontiguousarray(t_val[bos, :n_labels]),
        np.ascontiguousarray(t_val[:n_labels, eos]),
    )
    out = Node(np.array([[logz]]), (e, t))

    def bwd(g):
        de, dt_inner, dt_bos, dt_eos = _kernels.crf_backward(g[0, 0], soft, w_final)
        e.grad += de
        t.grad[:n_labels, :n_labels] += dt_inner
        t.grad[bos, :n_labels] += dt_bos
        t.grad[:n_labels, eos] += dt_eos

    out._backward = bwd
    return out


def nll(e, t, y):
    """Negative log-likelihood of y: log_partition - sequence_score; >= 0."""
    return ad.sub(log_partition(e, t), sequence_score(e, t, y))


def viterbi(e, t):
    """Best-scoring label sequence and its score.

    Ties at each backpointer decision break toward the smaller label
    index, so an all-equal score table decodes to all zeros.
    """
    e = np.asarray(e, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n, n_labels = e.shape
    if n < 1:
        raise ValueError("viterbi: empty sequence")
    bos, eos = n_labels, n_labels + 1
    delta = e[0] + t[bos, :n_labels]
    back = np.empty((n, n_labels), dtype=np.intp)
    for pos in range(1, n):
        scores = delta[:, None] + t[:n_labels, :n_labels]
        back[pos] = scores.argmax(axis=0)
        delta = scores[back[pos], np.arange(n_labels)] + e[pos]
    final = delta + t[:n_labels, eos]
    best = int(final.argmax())
    path = [best]
    for pos in range(n - 1, 0, -1):
        best = int(back[pos][best])
        path.append(best)
    path.reverse()
    return path, float(final.max())


def brute_force(e, t):
    """Exhaustive enumeration oracle: (log partition, best sequence, best score).

    Scores every candidate sequence independently of the dynamic programs
    above; guarded to |labels|^n <= 10^6 and meant for tests only.
    """
    e = np.asarray(e, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n, n_labels = e.shape
    if n_labels**n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute_force: {n_labels}^{n} sequences exceed the size guard")
    bos, eos = n_labels, n_labels + 1
    scores = []
    best_seq, best_score = None, -np.inf
    for seq in itertools.product(range(n_labels), repeat=n):
        s = t[bos, seq[0]]
        for pos in range(n):
            s += e[pos, seq[pos]]
            if pos + 1 < n:
                s += t[seq[pos], seq[pos + 1]]
        s += t[seq[-1], eos]
        scores.append(s)
        if s > best_score:
            best_seq, best_score = list(seq), s
    scores = np.array(scores)
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum())), best_seq, float(best_score)
