"""Hot inner loops for the LSTM recurrence and the CRF forward algorithm.

Both have a vectorized numpy implementation and an equivalent scalar-loop
version that numba compiles when it is installed; the public names bind
to the fastest available one.  The two variants are kept numerically
interchangeable (same operation order per element) and are cross-checked
by the test suite.
"""

from __future__ import annotations

import numpy as np


# -- LSTM: one direction ---------------------------------------------------
#
# Gate layout along the 4H axis is (input, forget, output, candidate).
# lstm_forward takes the precomputed input projections pre = x @ Wx^T + b
# and returns the caches the backward pass needs; lstm_backward returns
# the gradient w.r.t. the gate preactivations, from which the weight and
# input gradients are plain matrix products.


def _lstm_forward_np(pre, wh):
    n, four_h = pre.shape
    h_dim = four_h // 4
    gates = np.empty((n, four_h))
    c_prev = np.empty((n, h_dim))
    h_prev = np.empty((n, h_dim))
    tc = np.empty((n, h_dim))
    hs = np.empty((n, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(n):
        a = pre[t] + wh @ h
        s = 1.0 / (1.0 + np.exp(-a[: 3 * h_dim]))
        g = np.tanh(a[3 * h_dim :])
        i, f, o = s[:h_dim], s[h_dim : 2 * h_dim], s[2 * h_dim :]
        h_prev[t] = h
        c_prev[t] = c
        c = f * c + i * g
        tct = np.tanh(c)
        h = o * tct
        gates[t, : 3 * h_dim] = s
        gates[t, 3 * h_dim :] = g
        tc[t] = tct
        hs[t] = h
    return gates, c_prev, h_prev, tc, hs


def _lstm_backward_np(g_seq, wh, gates, c_prev, tc):
    n, h_dim = g_seq.shape
    da = np.empty((n, 4 * h_dim))
    dh = np.zeros(h_dim)
    dc = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        i = gates[t, :h_dim]
        f = gates[t, h_dim : 2 * h_dim]
        o = gates[t, 2 * h_dim : 3 * h_dim]
        g = gates[t, 3 * h_dim :]
        tct = tc[t]
        dht = g_seq[t] + dh
        do = dht * tct
        dcx = dc + dht * o * (1.0 - tct * tct)
        da[t, :h_dim] = dcx * g * i * (1.0 - i)
        da[t, h_dim : 2 * h_dim] = dcx * c_prev[t] * f * (1.0 - f)
        da[t, 2 * h_dim : 3 * h_dim] = do * o * (1.0 - o)
        da[t, 3 * h_dim :] = dcx * i * (1.0 - g * g)
        dc = dcx * f
        dh = da[t] @ wh
    return da


def _lstm_forward_loop(pre, wh):
    n, four_h = pre.shape
    h_dim = four_h // 4
    gates = np.empty((n, four_h))
    c_prev = np.empty((n, h_dim))
    h_prev = np.empty((n, h_dim))
    tc = np.empty((n, h_dim))
    hs = np.empty((n, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(n):
        a = pre[t] + np.dot(wh, h)
        for j in range(h_dim):
            i = 1.0 / (1.0 + np.exp(-a[j]))
            f = 1.0 / (1.0 + np.exp(-a[h_dim + j]))
            o = 1.0 / (1.0 + np.exp(-a[2 * h_dim + j]))
            g = np.tanh(a[3 * h_dim + j])
            h_prev[t, j] = h[j]
            c_prev[t, j] = c[j]
            cj = f * c[j] + i * g
            tcj = np.tanh(cj)
            gates[t, j] = i
            gates[t, h_dim + j] = f
            gates[t, 2 * h_dim + j] = o
            gates[t, 3 * h_dim + j] = g
            tc[t, j] = tcj
            c[j] = cj
            h[j] = o * tcj
        hs[t] = h
    return gates, c_prev, h_prev, tc, hs


def _lstm_backward_loop(g_seq, wh, gates, c_prev, tc):
    n, h_dim = g_seq.shape
    da = np.empty((n, 4 * h_dim))
    dh = np.zeros(h_dim)
    dc = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        for j in range(h_dim):
            i = gates[t, j]
            f = gates[t, h_dim + j]
            o = gates[t, 2 * h_dim + j]
            g = gates[t, 3 * h_dim + j]
            tcj = tc[t, j]
            dht = g_seq[t, j] + dh[j]
            do = dht * tcj
            dcx = dc[j] + dht * o * (1.0 - tcj * tcj)
            da[t, j] = dcx * g * i * (1.0 - i)
            da[t, h_dim + j] = dcx * c_prev[t, j] * f * (1.0 - f)
            da[t, 2 * h_dim + j] = do * o * (1.0 - o)
            da[t, 3 * h_dim + j] = dcx * i * (1.0 - g * g)
            dc[j] = dcx * f
        dh = np.dot(da[t], wh)
    return da


# -- CRF: forward algorithm over the label lattice ---------------------------
#
# crf_forward returns the log partition plus the per-step softmax weights
# of each logsumexp, so crf_backward can replay the recursion in reverse
# (a mechanical reverse-mode pass, not a separate beta recursion).


def _crf_forward_np(e, t_inner, t_bos, t_eos):
    n, n_labels = e.shape
    alpha = e[0] + t_bos
    soft = np.empty((n - 1, n_labels, n_labels))
    for pos in range(1, n):
        s = alpha[:, None] + t_inner
        m = s.max(axis=0)
        w = np.exp(s - m)
        tot = w.sum(axis=0)
        soft[pos - 1] = w / tot
        alpha = m + np.log(tot) + e[pos]
    fin = alpha + t_eos
    mf = fin.max()
    wf = np.exp(fin - mf)
    z = wf.sum()
    return float(mf + np.log(z)), soft, wf / z


def _crf_backward_np(g, soft, w_final):
    n_minus1, n_labels, _ = soft.shape
    de = np.empty((n_minus1 + 1, n_labels))
    dt_inner = np.zeros((n_labels, n_labels))
    dalpha = g * w_final
    dt_eos = dalpha.copy()
    for pos in range(n_minus1, 0, -1):
        de[pos] = dalpha
        contrib = soft[pos - 1] * dalpha
        dt_inner += contrib
        dalpha = contrib.sum(axis=1)
    de[0] = dalpha
    return de, dt_inner, dalpha.copy(), dt_eos


def _crf_forward_loop(e, t_inner, t_bos, t_eos):
    n, n_labels = e.shape
    alpha = np.empty(n_labels)
    for j in range(n_labels):
        alpha[j] = e[0, j] + t_bos[j]
    soft = np.empty((n - 1, n_labels, n_labels))
    nxt = np.empty(n_labels)
    for pos in range(1, n):
        for j in range(n_labels):
            m = -np.inf
            for i in range(n_labels):
                s = alpha[i] + t_inner[i, j]
                if s > m:
                    m = s
            tot = 0.0
            for i in range(n_labels):
                w = np.exp(alpha[i] + t_inner[i, j] - m)
                soft[pos - 1, i, j] = w
                tot += w
            for i in range(n_labels):
                soft[pos - 1, i, j] /= tot
            nxt[j] = m + np.log(tot) + e[pos, j]
        alpha[:] = nxt
    mf = -np.inf
    for i in range(n_labels):
        s = alpha[i] + t_eos[i]
        if s > mf:
            mf = s
    z = 0.0
    w_final = np.empty(n_labels)
    for i in range(n_labels):
        w_final[i] = np.exp(alpha[i] + t_eos[i] - mf)
        z += w_final[i]
    for i in range(n_labels):
        w_final[i] /= z
    return float(mf + np.log(z)), soft, w_final


def _crf_backward_loop(g, soft, w_final):
    n_minus1, n_labels, _ = soft.shape
    de = np.empty((n_minus1 + 1, n_labels))
    dt_inner = np.zeros((n_labels, n_labels))
    dalpha = np.empty(n_labels)
    dt_eos = np.empty(n_labels)
    for j in range(n_labels):
        dalpha[j] = g * w_final[j]
        dt_eos[j] = dalpha[j]
    nxt = np.empty(n_labels)
    for pos in range(n_minus1, 0, -1):
        for j in range(n_labels):
            de[pos, j] = dalpha[j]
        for i in range(n_labels):
            acc = 0.0
            for j in range(n_labels):
                c = soft[pos - 1, i, j] * dalpha[j]
                dt_inner[i, j] += c
                acc += c
            nxt[i] = acc
        dalpha[:] = nxt
    for j in range(n_labels):
        de[0, j] = dalpha[j]
    return de, dt_inner, dalpha.copy(), dt_eos


HAVE_NUMBA = False
try:
    from numba import njit
except ImportError:
    lstm_forward = _lstm_forward_np
    lstm_backward = _lstm_backward_np
    crf_forward = _crf_forward_np
    crf_backward = _crf_backward_np
else:
    HAVE_NUMBA = True
    lstm_forward = njit(cache=True)(_lstm_forward_loop)
    lstm_backward = njit(cache=True)(_lstm_backward_loop)
    crf_forward = njit(cache=True)(_crf_forward_loop)
    crf_backward = njit(cache=True)(_crf_backward_loop)
