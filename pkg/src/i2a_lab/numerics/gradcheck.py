"""Central finite-difference gradient checking."""

import numpy as np


def numeric_grad(f, values, eps=1e-6, coords=None):
    values = np.array(values, dtype=np.float64)
    coords = range(values.size) if coords is None else coords
    out = np.zeros(values.size)
    for i in coords:
        old = values[i]
        values[i] = old + eps
        fp = f(values)
        values[i] = old - eps
        fm = f(values)
        values[i] = old
        out[i] = (fp - fm) / (2.0 * eps)
    return out


def grad_check(f, p, eps=1e-6, grad=None, coords=None):
    """Max over coordinates of ``|analytic - numeric| / max(1, |analytic|)``.

    ``f`` maps a flat value array to a scalar. When ``grad`` (the analytic
    gradient at ``p``) is not given, ``f`` must instead return
    ``(value, grad)`` and is called once at ``p`` to obtain it.
    """
    if not 1e-8 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-8, 1e-3]")
    values = np.array(getattr(p, "values", p), dtype=np.float64)
    if grad is None:
        f0, grad = f(values)
        scalar = lambda v: f(v)[0]  # noqa: E731
    else:
        f0 = f(values)
        scalar = f
    if not np.isfinite(f0):
        raise FloatingPointError("f(p) is not finite")
    grad = np.asarray(grad, dtype=np.float64)
    coords = range(values.size) if coords is None else list(coords)
    num = numeric_grad(scalar, values, eps, coords)
    idx = np.fromiter(coords, dtype=np.int64)
    if idx.size == 0:
        return 0.0
    err = np.abs(grad[idx] - num[idx]) / np.maximum(1.0, np.abs(grad[idx]))
    return float(err.max())
