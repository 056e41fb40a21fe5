"""Neural building blocks: embeddings, Bi-LSTM encoders, the feature
combination layer and the CNN worker discriminator.

Feature sequences are (n, dim) nodes with time as rows.  Each LSTM
direction runs as a single fused graph op: the forward pass caches the
gate activations and the backward pass replays them in reverse
(backpropagation through time), which keeps the per-sentence graph small.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Node, Parameter

CNN_WINDOW = 5


def xavier(rng, rows, cols):
    """Uniform init in +-sqrt(6/(fan_in+fan_out))."""
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class EmbeddingTable:
    """Trainable looking-up table mapping ids to dense rows."""

    def __init__(self, name, vocab_size, dim, rng, group):
        if vocab_size < 1 or dim < 1:
            raise ValueError("embedding table needs positive vocab size and dim")
        self.vocab_size = vocab_size
        self.dim = dim
        self.table = Parameter(f"{name}.E", xavier(rng, vocab_size, dim), group)

    def params(self):
        return [self.table]


def embed(table, ids):
    """Look up rows of the table; repeated ids share (and sum) gradients."""
    return ad.take_rows(table.table.node, ids)


class LstmParams:
    """One direction's gate weights, stored fused in (i, f, o, g) order.

    Wx is (4H, in), Wh is (4H, H), b is (4H, 1); the forget-gate block of
    the bias starts at 1 for stable early training.
    """

    def __init__(self, name, input_dim, hidden_dim, rng, group):
        h = hidden_dim
        wx = np.vstack([xavier(rng, h, input_dim) for _ in range(4)])
        wh = np.vstack([xavier(rng, h, h) for _ in range(4)])
        b = np.zeros((4 * h, 1))
        b[h : 2 * h] = 1.0
        self.input_dim = input_dim
        self.hidden_dim = h
        self.wx = Parameter(f"{name}.Wx", wx, group)
        self.wh = Parameter(f"{name}.Wh", wh, group)
        self.b = Parameter(f"{name}.b", b, group)

    def params(self):
        return [self.wx, self.wh, self.b]


def _lstm_direction(x, p, reverse):
    """Run one LSTM direction over x (n, in) -> (n, H) as a fused op.

    The forward recurrence caches the gate activations; the backward
    closure replays them in reverse (BPTT) and reduces the per-step
    preactivation gradients to weight gradients with two matrix products.
    """
    wx_v, wh_v, b_v = p.wx.value, p.wh.value, p.b.value
    xo = x.value[::-1] if reverse else x.value
    pre = xo @ wx_v.T + b_v[:, 0]
    gates, c_prev, h_prev, tc, hs = _kernels.lstm_forward(pre, wh_v)

    out_val = hs[::-1].copy() if reverse else hs
    out = Node(out_val, (x, p.wx.node, p.wh.node, p.b.node))

    def bwd(g_out):
        g_seq = np.ascontiguousarray(g_out[::-1]) if reverse else g_out
        da = _kernels.lstm_backward(g_seq, wh_v, gates, c_prev, tc)
        p.wx.grad += da.T @ xo
        p.wh.grad += da.T @ h_prev
        p.b.grad += da.sum(axis=0)[:, None]
        dx = da @ wx_v
        x.grad += dx[::-1] if reverse else dx

    out._backward = bwd
    return out


class BiLstm:
    """Bidirectional LSTM; output at each position is fwd-state (+) bwd-state."""

    def __init__(self, name, input_dim, hidden_dim, rng, group):
        self.hidden_dim = hidden_dim
        self.fwd = LstmParams(f"{name}.fwd", input_dim, hidden_dim, rng, group)
        self.bwd = LstmParams(f"{name}.bwd", input_dim, hidden_dim, rng, group)

    @property
    def output_dim(self):
        return 2 * self.hidden_dim

    def params(self):
        return self.fwd.params() + self.bwd.params()


def bilstm_run(layer, xs):
    """Encode a (n, in) sequence to (n, 2H); initial states are zero."""
    if xs.shape[0] == 0:
        raise ValueError("bilstm_run: empty sequence")
    return ad.concat_cols(
        _lstm_direction(xs, layer.fwd, reverse=False),
        _lstm_direction(xs, layer.bwd, reverse=True),
    )


class Combiner:
    """Affine map turning (concatenated) encoder features into NER features."""

    def __init__(self, name, input_dim, output_dim, rng, group):
        self.input_dim = input_dim
        self.w = Parameter(f"{name}.W", xavier(rng, output_dim, input_dim), group)
        self.b = Parameter(f"{name}.b", np.zeros((output_dim, 1)), group)

    def params(self):
        return [self.w, self.b]


def combine(c, h_common, h_private):
    """h_ner = W (h_common (+) h_private) + b; h_common is absent in baseline mode."""
    h = h_private if h_common is None else ad.concat_cols(h_common, h_private)
    if h.shape[1] != c.input_dim:
        raise ValueError(
            f"combine: feature width {h.shape[1]} does not match configured {c.input_dim}"
        )
    return ad.linear(h, c.w.node, c.b.node)


class CnnDiscriminator:
    """Window-5 convolution + max pooling over time, scoring every worker."""

    def __init__(self, name, input_dim, conv_dim, n_workers, rng, group):
        if n_workers < 2:
            raise ValueError("worker discriminator needs at least 2 workers")
        self.input_dim = input_dim
        self.n_workers = n_workers
        self.w_cnn = Parameter(
            f"{name}.Wcnn", xavier(rng, conv_dim, CNN_WINDOW * input_dim), group
        )
        self.w_worker = Parameter(f"{name}.Wworker", xavier(rng, n_workers, conv_dim), group)

    def params(self):
        return [self.w_cnn, self.w_worker]


def discriminate(d, h_common, h_label, reverse=True):
    """Score every worker from common (+) label features, one scalar per worker.

    The common branch passes through gradient reversal before the
    concatenation, so the worker loss pushes common features toward
    worker invariance; positions outside the sentence are zero padded.
    Set reverse=False only to measure the gradient flow without reversal.
    """
    if h_common.shape[0] != h_label.shape[0]:
        raise ValueError(
            f"discriminate: length mismatch {h_common.shape[0]} vs {h_label.shape[0]}"
        )
    if h_common.shape[0] == 0:
        raise ValueError("discriminate: empty sequence")
    hc = ad.grad_reverse(h_common) if reverse else h_common
    h = ad.concat_cols(hc, h_label)
    if h.shape[1] != d.input_dim:
        raise ValueError(
            f"discriminate: feature width {h.shape[1]} does not match configured {d.input_dim}"
        )
    windows = ad.window_stack(h, CNN_WINDOW // 2)
    conv = ad.tanh(ad.linear(windows, d.w_cnn.node))
    pooled = ad.max_pool_time(conv)
    return ad.matmul(d.w_worker.node, ad.transpose(pooled))
