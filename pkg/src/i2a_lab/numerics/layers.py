"""Plain-numpy forward functions shared by the tape and by inference code."""

import numpy as np


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")


def sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits, axis=-1):
    """Normalised exponentials along ``axis``; rejects non-finite input."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0 or logits.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    _check_finite(logits, "softmax logits")
    z = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=axis, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=axis, keepdims=True))


def dense(x, w, b, activation=None):
    y = x @ w + b
    if activation == "relu":
        return np.maximum(y, 0.0)
    if activation == "tanh":
        return np.tanh(y)
    return y


def lstm_step(wx, wh, b, x, h, c, cache=False):
    """Standard LSTM cell, gate order (input, forget, candidate, output).

    ``wx`` is (I, 4H), ``wh`` is (H, 4H), ``b`` is (4H,); inputs are batched
    along axis 0.  Returns ``(h_next, c_next)`` and optionally the gate cache.
    """
    hidden = wh.shape[0]
    if wx.shape[1] != 4 * hidden or wh.shape[1] != 4 * hidden or b.shape != (4 * hidden,):
        raise ValueError(f"inconsistent LSTM weights: wx{wx.shape} wh{wh.shape} b{b.shape}")
    if x.shape[-1] != wx.shape[0]:
        raise ValueError(f"LSTM input width {x.shape[-1]} != {wx.shape[0]}")
    if h.shape[-1] != hidden or c.shape[-1] != hidden:
        raise ValueError(f"LSTM state width must be {hidden}")
    z = x @ wx + h @ wh + b
    i = sigmoid(z[..., :hidden])
    f = sigmoid(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = sigmoid(z[..., 3 * hidden:])
    c1 = f * c + i * g
    tc = np.tanh(c1)
    h1 = o * tc
    if cache:
        return h1, c1, (i, f, g, o, tc)
    return h1, c1


def lstm_param_specs(prefix, n_in, hidden):
    return [(f"{prefix}.wx", (n_in, 4 * hidden)), (f"{prefix}.wh", (hidden, 4 * hidden)),
            (f"{prefix}.b", (4 * hidden,))]
