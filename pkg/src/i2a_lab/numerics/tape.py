"""A small reverse-mode tape over batched numpy arrays.

Each op computes its output eagerly and appends a backward closure to the
tape.  ``Tape.backward`` replays the closures last-to-first.  Parameters
enter through :meth:`Tape.param`; their gradients are gathered into one
flat array matching the :class:`ParamVector` layout.
"""

import numpy as np

from .layers import lstm_step, sigmoid


class Node:
    __slots__ = ("value", "grad", "requires")

    def __init__(self, value, requires=True):
        self.value = value
        self.grad = None
        self.requires = requires

    @property
    def shape(self):
        return self.value.shape

    def _acc(self, g):
        if not self.requires:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    def __init__(self):
        self._records = []
        self._params = []

    # -- leaves -------------------------------------------------------------
    def param(self, pv, name):
        node = Node(pv.view(name))
        self._params.append((pv, name, node))
        return node

    @staticmethod
    def const(x):
        return Node(np.asarray(x, dtype=np.float64), requires=False)

    def _out(self, value, *inputs):
        return Node(value, requires=any(i.requires for i in inputs))

    def _record(self, fn, out):
        if out.requires:
            self._records.append(fn)

    # -- linear algebra -----------------------------------------------------
    def matmul(self, x, w):
        out = self._out(x.value @ w.value, x, w)

        def back():
            if out.grad is None:
                return
            if x.requires:
                x._acc(out.grad @ w.value.T)
            if w.requires:
                w._acc(x.value.T @ out.grad)
        self._record(back, out)
        return out

    def affine(self, x, w, b):
        out = self._out(x.value @ w.value + b.value, x, w, b)

        def back():
            g = out.grad
            if g is None:
                return
            if x.requires:
                x._acc(g @ w.value.T)
            if w.requires:
                w._acc(x.value.T @ g)
            if b.requires:
                b._acc(g.sum(axis=0))
        self._record(back, out)
        return out

    def add(self, a, b):
        out = self._out(a.value + b.value, a, b)

        def back():
            if out.grad is None:
                return
            a._acc(_unbroadcast(out.grad, a.shape))
            b._acc(_unbroadcast(out.grad, b.shape))
        self._record(back, out)
        return out

    def sub(self, a, b):
        out = self._out(a.value - b.value, a, b)

        def back():
            if out.grad is None:
                return
            a._acc(_unbroadcast(out.grad, a.shape))
            b._acc(_unbroadcast(-out.grad, b.shape))
        self._record(back, out)
        return out

    def mul(self, a, b):
        out = self._out(a.value * b.value, a, b)

        def back():
            if out.grad is None:
                return
            if a.requires:
                a._acc(_unbroadcast(out.grad * b.value, a.shape))
            if b.requires:
                b._acc(_unbroadcast(out.grad * a.value, b.shape))
        self._record(back, out)
        return out

    def div(self, a, b):
        out = self._out(a.value / b.value, a, b)

        def back():
            if out.grad is None:
                return
            if a.requires:
                a._acc(_unbroadcast(out.grad / b.value, a.shape))
            if b.requires:
                b._acc(_unbroadcast(-out.grad * a.value / b.value ** 2, b.shape))
        self._record(back, out)
        return out

    def scale(self, a, c):
        """``a * c`` for a constant scalar or array ``c``."""
        c = np.asarray(c, dtype=np.float64)
        out = self._out(a.value * c, a)

        def back():
            if out.grad is not None:
                a._acc(_unbroadcast(out.grad * c, a.shape))
        self._record(back, out)
        return out

    def add_const(self, a, c):
        out = self._out(a.value + c, a)

        def back():
            if out.grad is not None:
                a._acc(out.grad)
        self._record(back, out)
        return out

    # -- elementwise nonlinearities -----------------------------------------
    def relu(self, a):
        mask = a.value > 0
        out = self._out(a.value * mask, a)

        def back():
            if out.grad is not None:
                a._acc(out.grad * mask)
        self._record(back, out)
        return out

    def tanh(self, a):
        y = np.tanh(a.value)
        out = self._out(y, a)

        def back():
            if out.grad is not None:
                a._acc(out.grad * (1.0 - y * y))
        self._record(back, out)
        return out

    def sigmoid(self, a):
        y = sigmoid(a.value)
        out = self._out(y, a)

        def back():
            if out.grad is not None:
                a._acc(out.grad * y * (1.0 - y))
        self._record(back, out)
        return out

    def exp(self, a):
        y = np.exp(a.value)
        out = self._out(y, a)

        def back():
            if out.grad is not None:
                a._acc(out.grad * y)
        self._record(back, out)
        return out

    def square(self, a):
        out = self._out(a.value * a.value, a)

        def back():
            if out.grad is not None:
                a._acc(2.0 * out.grad * a.value)
        self._record(back, out)
        return out

    def softplus(self, a):
        x = a.value
        out = self._out(np.logaddexp(0.0, x), a)

        def back():
            if out.grad is not None:
                a._acc(out.grad * sigmoid(x))
        self._record(back, out)
        return out

    # -- shape ops ------------------------------------------------------------
    def concat(self, nodes, axis=-1):
        out = self._out(np.concatenate([n.value for n in nodes], axis=axis), *nodes)
        sizes = np.cumsum([n.value.shape[axis] for n in nodes])[:-1]

        def back():
            if out.grad is None:
                return
            for n, g in zip(nodes, np.split(out.grad, sizes, axis=axis)):
                n._acc(g)
        self._record(back, out)
        return out

    def reshape(self, a, shape):
        out = self._out(a.value.reshape(shape), a)

        def back():
            if out.grad is not None:
                a._acc(out.grad.reshape(a.shape))
        self._record(back, out)
        return out

    def sum(self, a):
        out = self._out(np.asarray(a.value.sum()), a)

        def back():
            if out.grad is not None:
                a._acc(np.broadcast_to(out.grad, a.shape))
        self._record(back, out)
        return out

    def mean(self, a):
        return self.scale(self.sum(a), 1.0 / a.value.size)

    def sum_rows(self, a):
        """Sum over the last axis keeping dims: (B, n) -> (B, 1)."""
        out = self._out(a.value.sum(axis=-1, keepdims=True), a)

        def back():
            if out.grad is not None:
                a._acc(np.broadcast_to(out.grad, a.shape))
        self._record(back, out)
        return out

    # -- policy ops -----------------------------------------------------------
    def log_softmax(self, a):
        x = a.value
        m = x.max(axis=-1, keepdims=True)
        lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
        y = x - lse
        out = self._out(y, a)

        def back():
            if out.grad is None:
                return
            g = out.grad
            a._acc(g - np.exp(y) * g.sum(axis=-1, keepdims=True))
        self._record(back, out)
        return out

    def gather(self, a, index):
        """Pick ``a[i, index[i]]`` per row: (B, n) -> (B,)."""
        index = np.asarray(index, dtype=np.int64)
        rows = np.arange(a.shape[0])
        out = self._out(a.value[rows, index], a)

        def back():
            if out.grad is None:
                return
            g = np.zeros_like(a.value)
            np.add.at(g, (rows, index), out.grad)
            a._acc(g)
        self._record(back, out)
        return out

    # -- recurrent cell -------------------------------------------------------
    def lstm(self, x, h, c, wx, wh, b):
        """One batched LSTM step; returns ``(h_next, c_next)`` nodes."""
        h1, c1, cache = lstm_step(wx.value, wh.value, b.value, x.value, h.value, c.value, cache=True)
        hn = self._out(h1, x, h, c, wx, wh, b)
        cn = self._out(c1, x, h, c, wx, wh, b)

        def back():
            if hn.grad is None and cn.grad is None:
                return
            gh = hn.grad if hn.grad is not None else np.zeros_like(h1)
            gc = cn.grad if cn.grad is not None else np.zeros_like(c1)
            i, f, g, o, tc = cache
            d_o = gh * tc
            dc = gc + gh * o * (1.0 - tc * tc)
            d_i = dc * g
            d_f = dc * c.value
            d_g = dc * i
            dz = np.concatenate([d_i * i * (1 - i), d_f * f * (1 - f),
                                 d_g * (1 - g * g), d_o * o * (1 - o)], axis=-1)
            if x.requires:
                x._acc(dz @ wx.value.T)
            if h.requires:
                h._acc(dz @ wh.value.T)
            if c.requires:
                c._acc(dc * f)
            if wx.requires:
                wx._acc(x.value.T @ dz)
            if wh.requires:
                wh._acc(h.value.T @ dz)
            if b.requires:
                b._acc(dz.sum(axis=0))
        self._record(back, hn)
        return hn, cn

    # -- driver ---------------------------------------------------------------
    def backward(self, loss):
        """Seed ``d loss = 1`` and replay the tape; returns flat grads per ParamVector."""
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._records):
            fn()
        grads = {}
        for pv, name, node in self._params:
            flat = grads.get(id(pv))
            if flat is None:
                flat = grads[id(pv)] = np.zeros(pv.size)
            if node.grad is not None:
                pv.view(name, flat)[...] += node.grad
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        return grads

    def grad_for(self, grads, pv):
        return grads.get(id(pv), np.zeros(pv.size))
