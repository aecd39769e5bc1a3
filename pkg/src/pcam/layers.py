"""Point-convolution building blocks shared by the matching and confidence networks.

The convolution is a PointNet/EdgeConv-style local aggregator: for point ``i``
and each of its ``k`` neighbours ``j`` it feeds ``[x_j - x_i, f_j, f_i]``
through a two-layer MLP and averages over the neighbourhood. Both linear
layers are applied outside the gather (they commute with it), which keeps the
``(n, k, .)`` intermediate at the hidden width only.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .geometry import knn


class Neighborhood:
    """k-nearest-neighbour index of a cloud plus the sparse matrix used to scatter gradients."""

    def __init__(self, idx):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.scatter = ad.scatter_matrix(self.idx.reshape(-1), self.idx.shape[0])

    @classmethod
    def build(cls, coords, k):
        return cls(knn(coords, coords, k))


class ParamStore:
    """Ordered registry of named parameters with seeded He-uniform init."""

    def __init__(self, rng):
        self.rng = rng
        self.params = {}

    def _add(self, name, data):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(data, name)
        self.params[name] = p
        return p

    def weight(self, name, fan_in, fan_out, zero=False):
        if zero:
            return self._add(name, np.zeros((fan_in, fan_out)))
        bound = np.sqrt(6.0 / fan_in)
        return self._add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def const(self, name, shape, value):
        return self._add(name, np.full(shape, float(value)))


class PointConv:
    def __init__(self, store, prefix, c_in, c_out, hidden, bias=False, zero_init=False):
        fan = 2 * c_in + 3
        self.c_in, self.c_out = c_in, c_out
        self.w_nbr = store.weight(f"{prefix}.w_nbr", c_in, hidden) if c_in else None
        self.w_ctr = store.weight(f"{prefix}.w_ctr", c_in, hidden) if c_in else None
        # rescale to the fan-in of the full concatenated input
        for w in (self.w_nbr, self.w_ctr):
            if w is not None:
                w.data *= np.sqrt(c_in / fan)
        self.w_rel = store.weight(f"{prefix}.w_rel", 3, hidden)
        self.w_rel.data *= np.sqrt(3 / fan)
        self.b_hidden = store.const(f"{prefix}.b_hidden", (hidden,), 0.0)
        self.w_out = store.weight(f"{prefix}.w_out", hidden, c_out, zero=zero_init)
        self.b_out = store.const(f"{prefix}.b_out", (c_out,), 0.0) if bias else None

    def __call__(self, feats, coords, nbrs):
        X = Tensor(coords)
        xw = ad.matmul(X, self.w_rel)
        nbr_part = xw
        ctr_part = ad.sub(self.b_hidden, xw)
        if self.c_in:
            nbr_part = ad.add(ad.matmul(feats, self.w_nbr), nbr_part)
            ctr_part = ad.add(ad.matmul(feats, self.w_ctr), ctr_part)
        h = ad.edge_aggregate(nbr_part, ctr_part, nbrs.idx, nbrs.scatter)
        out = ad.matmul(h, self.w_out)
        if self.b_out is not None:
            out = ad.add(out, self.b_out)
        return out


class ResidualBlock:
    """conv-IN-ReLU, conv-IN, plus a (projected when widths differ) skip, then ReLU."""

    def __init__(self, store, prefix, c_in, c_out, eps=1e-5):
        self.eps = eps
        self.conv1 = PointConv(store, f"{prefix}.conv1", c_in, c_out, c_out)
        self.gamma1 = store.const(f"{prefix}.in1.gamma", (c_out,), 1.0)
        self.beta1 = store.const(f"{prefix}.in1.beta", (c_out,), 0.0)
        self.conv2 = PointConv(store, f"{prefix}.conv2", c_out, c_out, c_out)
        self.gamma2 = store.const(f"{prefix}.in2.gamma", (c_out,), 1.0)
        self.beta2 = store.const(f"{prefix}.in2.beta", (c_out,), 0.0)
        self.proj = store.weight(f"{prefix}.proj", c_in, c_out) if c_in != c_out else None

    def __call__(self, feats, coords, nbrs):
        h = self.conv1(feats, coords, nbrs)
        h = ad.relu(ad.instance_norm_rows(h, self.gamma1, self.beta1, self.eps))
        h = self.conv2(h, coords, nbrs)
        h = ad.instance_norm_rows(h, self.gamma2, self.beta2, self.eps)
        skip = ad.matmul(feats, self.proj) if self.proj is not None else feats
        return ad.relu(ad.add(h, skip))


class Encoder:
    """Three residual blocks mapping ``c_in`` to ``c_out`` channels."""

    def __init__(self, store, prefix, c_in, c_out, n_blocks=3):
        self.blocks = [
            ResidualBlock(store, f"{prefix}.block{b}", c_in if b == 0 else c_out, c_out)
            for b in range(n_blocks)
        ]

    def __call__(self, feats, coords, nbrs):
        for block in self.blocks:
            feats = block(feats, coords, nbrs)
        return feats
