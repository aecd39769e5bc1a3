"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import backward


def numerical_grad(fn, tensor, h=1e-5, indices=None):
    """Central differences of scalar ``fn()`` w.r.t. ``tensor.data`` entries.

    ``indices`` restricts the check to a subset of flat positions; other
    entries of the returned array are NaN.
    """
    flat = tensor.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data)
        flat[i] = orig - h
        fm = float(fn().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(tensor.shape)


def relative_error(analytic, numeric, floor=1e-8):
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    mask = ~np.isnan(n)
    if not mask.any():
        return 0.0
    a, n = a[mask], n[mask]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(fn, tensors, h=1e-5, max_entries=None, rng=None, floor=1e-8):
    """Compare backward() against central differences for every tensor in ``tensors``.

    Returns the worst relative error. ``max_entries`` subsamples large tensors.
    ``floor`` bounds the denominator from below; for large graphs it should
    sit above the round-off of the differences (roughly ``eps * |fn()| / h``).
    """
    for t in tensors:
        t.grad = None
    backward(fn())
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        idx = None
        if max_entries is not None and t.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(t.size, size=max_entries, replace=False)
        numeric = numerical_grad(fn, t, h=h, indices=idx)
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst
