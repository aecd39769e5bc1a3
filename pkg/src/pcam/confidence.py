"""Confidence estimation for matched pairs and the hard-threshold filter."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ParameterError
from .geometry import check_cloud
from .layers import Neighborhood, ParamStore, PointConv, ResidualBlock


def pair_features(P, mapped):
    """Rows ``[p_i, m(p_i)]``. ``mapped`` may be a Tensor (soft maps keep their graph)."""
    P = check_cloud(P, "P")
    mapped = ad.as_tensor(mapped)
    if mapped.shape != P.shape:
        raise ParameterError(f"mapped points {mapped.shape} do not match P {P.shape}")
    return ad.concat_cols(Tensor(P), mapped)


def hard_threshold(w, tau):
    """Zero every score below ``tau``; ``tau = 0`` is the identity."""
    w = np.asarray(w, dtype=np.float64)
    return np.where(w >= tau, w, 0.0)


class ConfidenceNet:
    """Nine residual blocks, a point convolution down to one channel and a sigmoid.

    Neighbourhoods come from the source cloud (first three feature columns).
    Both halves of the pair features are centred on their own means before
    entering the network, so scores do not depend on the absolute frame.
    """

    def __init__(self, store=None, rng=None, width=64, n_blocks=9, k=32, prefix="conf"):
        if store is None:
            store = ParamStore(rng if rng is not None else np.random.default_rng(0))
        self.k = k
        self.prefix = prefix
        self.blocks = [
            ResidualBlock(store, f"{prefix}.block{b}", 6 if b == 0 else width, width)
            for b in range(n_blocks)
        ]
        self.head = PointConv(store, f"{prefix}.head", width, 1, width, bias=True, zero_init=True)
        self.store = store

    @property
    def parameters(self):
        return [p for name, p in self.store.params.items() if name.startswith(self.prefix + ".")]

    def logits(self, pairs):
        pairs = ad.as_tensor(pairs)
        coords = pairs.data[:, :3]
        n = coords.shape[0]
        if self.k > n:
            raise ParameterError(f"k={self.k} exceeds pair count {n}")
        nbrs = Neighborhood.build(coords, self.k)
        centre = Tensor(np.full((n, n), 1.0 / n))
        h = ad.sub(pairs, ad.matmul(centre, pairs))
        for block in self.blocks:
            h = block(h, coords, nbrs)
        return ad.reshape(self.head(h, coords, nbrs), (n,))

    def __call__(self, pairs):
        return ad.sigmoid(self.logits(pairs))
