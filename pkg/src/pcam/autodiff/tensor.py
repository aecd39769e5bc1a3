"""Dense tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor` holding references to its inputs and a
closure that pushes the output gradient back to them. Calling
:func:`backward` on a scalar walks the graph in reverse topological order.
Values are float64 throughout.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.special import expit

from ..exceptions import NumericError, ParameterError

LOG_FLOOR = 1e-30

_grad_enabled = True


class no_grad:
    """Context manager disabling graph recording (inference only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """Trainable leaf tensor carrying its own AdamW state."""

    __slots__ = ("name", "m", "v", "step")

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, True, tuple(parents), backward, op)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ParameterError(f"shape mismatch in add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ParameterError(f"shape mismatch in sub: {a.shape} vs {b.shape}") from exc

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _make(out, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ParameterError(f"shape mismatch in mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), backward, "mul")


def scale(a, c):
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), backward, "scale")


def reciprocal(a):
    a = as_tensor(a)
    out = 1.0 / a.data

    def backward(g):
        _accumulate(a, -g * out * out)

    return _make(out, (a,), backward, "reciprocal")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        _accumulate(a, g * mask)

    return _make(a.data * mask, (a,), backward, "relu")


def sigmoid(a):
    a = as_tensor(a)
    out = expit(a.data)

    def backward(g):
        _accumulate(a, g * out * (1.0 - out))

    return _make(out, (a,), backward, "sigmoid")


def log(a, floor=LOG_FLOOR):
    """Natural log with the argument floored at ``floor`` (gradient zero below it)."""
    a = as_tensor(a)
    safe = np.maximum(a.data, floor)

    def backward(g):
        _accumulate(a, np.where(a.data > floor, g / safe, 0.0))

    return _make(np.log(safe), (a,), backward, "log")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)  # overflow surfaces as NumericError in _make

    def backward(g):
        _accumulate(a, g * out)

    return _make(out, (a,), backward, "exp")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "scale": scale,
}


def elementwise(kind, *operands):
    """Dispatch to a pointwise op by name."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ParameterError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# -- linear algebra and shape ops -------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ParameterError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a):
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g.T)

    return _make(a.data.T, (a,), backward, "transpose")


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def concat_cols(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ParameterError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    c1 = a.shape[1]

    def backward(g):
        _accumulate(a, g[:, :c1])
        _accumulate(b, g[:, c1:])

    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), backward, "concat_cols")


def gather_rows(a, idx):
    """``out[i, j, :] = a[idx[i, j], :]``; a 1-D ``idx`` yields a 2-D result."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ParameterError(f"gather index out of range for {n} rows")

    def backward(g):
        if not a.requires_grad:
            return
        flat = idx.reshape(-1)
        acc = scatter_matrix(flat, n) @ g.reshape(flat.size, -1)
        _accumulate(a, acc.reshape(a.shape))

    return _make(a.data[idx], (a,), backward, "gather_rows")


def scatter_matrix(flat_idx, n):
    """Sparse ``(n, len(flat_idx))`` 0/1 matrix; its product sums rows into their target slots."""
    m = flat_idx.size
    return sparse.csr_matrix((np.ones(m), (flat_idx, np.arange(m))), shape=(n, m))


def edge_aggregate(nbr, ctr, idx, scatter=None):
    """Fused ``mean_j relu(nbr[idx[i, j]] + ctr[i])`` over the neighbours of each row.

    Same value and gradient as composing gather_rows, add, relu and
    reduce_neighborhood, but only a boolean mask of the ``(m, k, d)``
    intermediate is kept for the backward pass. ``scatter`` may carry a
    precomputed :func:`scatter_matrix` for ``idx``.
    """
    nbr, ctr = as_tensor(nbr), as_tensor(ctr)
    idx = np.asarray(idx, dtype=np.int64)
    m, k = idx.shape
    pre = nbr.data[idx]
    pre += ctr.data[:, None, :]
    mask = pre > 0
    np.maximum(pre, 0.0, out=pre)
    out = pre.mean(axis=1)

    def backward(g):
        G = mask * (g[:, None, :] / k)
        if ctr.requires_grad:
            _accumulate(ctr, G.sum(axis=1))
        if nbr.requires_grad:
            S = scatter if scatter is not None else scatter_matrix(idx.reshape(-1), nbr.shape[0])
            _accumulate(nbr, S @ G.reshape(m * k, -1))

    return _make(out, (nbr, ctr), backward, "edge_aggregate")


def index_2d(a, rows, cols):
    """Vector of the entries ``a[rows[t], cols[t]]``."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def backward(g):
        if not a.requires_grad:
            return
        acc = np.zeros(a.shape)
        np.add.at(acc, (rows, cols), g)
        _accumulate(a, acc)

    return _make(a.data[rows, cols], (a,), backward, "index_2d")


# -- reductions -------------------------------------------------------------

def sum_all(a):
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(np.sum(a.data), (a,), backward, "sum")


def mean_all(a):
    a = as_tensor(a)
    n = a.size

    def backward(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _make(np.sum(a.data) / n, (a,), backward, "mean")


def sum_rows(a):
    """Sum over the last axis of a 2-D tensor -> vector."""
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.broadcast_to(g[:, None], a.shape))

    return _make(a.data.sum(axis=1), (a,), backward, "sum_rows")


def row_norms(a):
    """Euclidean norm of each row; the gradient at a zero row is taken as zero."""
    a = as_tensor(a)
    norms = np.sqrt(np.sum(a.data * a.data, axis=1))

    def backward(g):
        safe = np.where(norms > 0, norms, 1.0)
        _accumulate(a, np.where(norms[:, None] > 0, a.data * (g / safe)[:, None], 0.0))

    return _make(norms, (a,), backward, "row_norms")


def reduce_neighborhood(a, mode="mean"):
    """Reduce an ``(m, k, d)`` tensor over its neighbour axis."""
    a = as_tensor(a)
    if a.data.ndim != 3 or a.shape[1] < 1:
        raise ParameterError(f"reduce_neighborhood expects (m, k>=1, d), got {a.shape}")
    m, k, d = a.shape
    if mode == "mean":
        def backward(g):
            _accumulate(a, np.broadcast_to(g[:, None, :] / k, a.shape))

        return _make(a.data.mean(axis=1), (a,), backward, "reduce_mean")
    if mode == "max":
        arg = np.argmax(a.data, axis=1)  # first index on ties

        def backward(g):
            acc = np.zeros(a.shape)
            ii, dd = np.meshgrid(np.arange(m), np.arange(d), indexing="ij")
            acc[ii, arg, dd] = g
            _accumulate(a, acc)

        return _make(a.data.max(axis=1), (a,), backward, "reduce_max")
    raise ParameterError(f"unknown reduction mode {mode!r}")


# -- normalisation ----------------------------------------------------------

def _check_temperature(s):
    if not s > 0:
        raise ParameterError("temperature must be positive")
    return float(s)


def _softmax(a, s, axis, log_out):
    a = as_tensor(a)
    s = _check_temperature(s)
    z = a.data / s
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    tot = e.sum(axis=axis, keepdims=True)
    p = e / tot
    if log_out:
        out = z - np.log(tot)

        def backward(g):
            _accumulate(a, (g - p * g.sum(axis=axis, keepdims=True)) / s)

        return _make(out, (a,), backward, "log_softmax")

    def backward(g):
        _accumulate(a, p * (g - np.sum(g * p, axis=axis, keepdims=True)) / s)

    return _make(p, (a,), backward, "softmax")


def softmax_rows(a, s=1.0):
    """Softmax of ``a / s`` along each row."""
    return _softmax(a, s, 1, False)


def softmax_cols(a, s=1.0):
    """Softmax of ``a / s`` down each column."""
    return _softmax(a, s, 0, False)


def log_softmax_rows(a, s=1.0):
    return _softmax(a, s, 1, True)


def log_softmax_cols(a, s=1.0):
    return _softmax(a, s, 0, True)


def l2_normalize_rows(a, eps=1e-12):
    """Divide each row by ``max(|row|, eps)``."""
    a = as_tensor(a)
    norms = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))
    denom = np.maximum(norms, eps)
    out = a.data / denom
    active = norms > eps

    def backward(g):
        proj = np.sum(g * a.data, axis=1, keepdims=True)
        ga = g / denom - np.where(active, a.data * proj / denom ** 3, 0.0)
        _accumulate(a, ga)

    return _make(out, (a,), backward, "l2_normalize_rows")


def instance_norm_rows(a, gamma, beta, eps=1e-5):
    """Normalise every channel over the rows (points) of one cloud, then scale and shift."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    n = a.shape[0]
    if n < 1:
        raise ParameterError("instance_norm_rows needs at least one row")
    mu = a.data.mean(axis=0)
    xc = a.data - mu
    var = np.mean(xc * xc, axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        if gamma.requires_grad:
            _accumulate(gamma, np.sum(g * xhat, axis=0))
        if beta.requires_grad:
            _accumulate(beta, np.sum(g, axis=0))
        if a.requires_grad:
            dx = g * gamma.data
            _accumulate(a, inv / n * (n * dx - dx.sum(axis=0) - xhat * np.sum(dx * xhat, axis=0)))

    return _make(xhat * gamma.data + beta.data, (a, gamma, beta), backward, "instance_norm")


# -- graph traversal --------------------------------------------------------

def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add to any existing ``.grad`` values; intermediate node
    gradients are released once propagated.
    """
    if loss.size != 1:
        raise ParameterError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None
