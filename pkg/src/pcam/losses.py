"""Ground-truth correspondences and the training losses.

Each directional loss takes the source cloud, its mapped points and the
ground-truth transform *for that direction*; the Q -> P terms use the
inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ConfigError, ModeError, ParameterError
from .geometry import apply_transform, check_cloud, invert, nearest_neighbor

KAPPA_3DMATCH = 0.12
KAPPA_KITTI = 0.60


@dataclass(frozen=True)
class CorrespondenceSet:
    """Mutual nearest-neighbour pairs ``(u, v)`` between P and Q under the true pose."""

    pairs: np.ndarray  # (K, 2) int

    @property
    def cp(self):
        return self.pairs[:, 0]

    @property
    def cq(self):
        return self.pairs[:, 1]

    def __len__(self):
        return self.pairs.shape[0]


def build_correspondences(P, Q, T_gt):
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    TP = apply_transform(P, T_gt)
    j_star, _ = nearest_neighbor(Q, TP)
    i_star, _ = nearest_neighbor(TP, Q)
    u = np.flatnonzero(i_star[j_star] == np.arange(P.shape[0]))
    return CorrespondenceSet(np.stack([u, j_star[u]], axis=1).astype(np.int64))


def _zero():
    return Tensor(0.0)


def loss_ca(attention, C, N, M):
    """Cross-entropy on the global attention at the ground-truth pairs, both directions.

    Computed as a sum of per-layer log-softmax terms so that the product of
    attention entries never underflows.
    """
    if len(C) == 0:
        return _zero()
    pq = ad.index_2d(attention.log_global_pq, C.cp, C.cq)
    qp = ad.index_2d(attention.log_global_qp, C.cp, C.cq)
    return ad.scale(ad.add(ad.scale(ad.sum_all(pq), 1.0 / N), ad.scale(ad.sum_all(qp), 1.0 / M)), -1.0)


def loss_ca_product_form(attention, C, N, M):
    """Same loss evaluated directly as ``-log`` of the multiplied attention entries."""
    if len(C) == 0:
        return _zero()
    pq = ad.log(ad.index_2d(attention.global_pq, C.cp, C.cq))
    qp = ad.log(ad.index_2d(attention.global_qp, C.cp, C.cq))
    return ad.scale(ad.add(ad.scale(ad.sum_all(pq), 1.0 / N), ad.scale(ad.sum_all(qp), 1.0 / M)), -1.0)


def residual_distances(src, mapped, transform):
    """``|T(src_i) - mapped_i|`` as a Tensor (differentiable in ``mapped``)."""
    src = check_cloud(src, "src")
    target = Tensor(apply_transform(src, transform))
    return ad.row_norms(ad.sub(target, ad.as_tensor(mapped)))


def accuracy_labels(src, mapped, transform, kappa):
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    d = residual_distances(src, mapped, transform).data
    return (d <= kappa).astype(np.float64)


def loss_cc(w, src, mapped, transform, kappa):
    """Binary cross-entropy of the scores against the ``kappa`` accuracy labels (one direction)."""
    w = ad.as_tensor(w)
    y = accuracy_labels(src, mapped, transform, kappa)
    pos = ad.mul(Tensor(y), ad.log(w))
    neg = ad.mul(Tensor(1.0 - y), ad.log(ad.sub(1.0, w)))
    return ad.scale(ad.mean_all(ad.add(pos, neg)), -1.0)


def loss_gc(w, src, mapped, transform):
    """Score-weighted mean residual distance (one direction)."""
    w = ad.as_tensor(w)
    d = residual_distances(src, mapped, transform)
    return ad.mean_all(ad.mul(w, d))


def loss_ga(match, C, P, Q):
    """Mean distance between soft-mapped and ideal partners over the ground-truth pairs."""
    if match.map_mode != "soft":
        raise ModeError("loss_ga requires soft maps")
    if len(C) == 0:
        return _zero()
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    d_pq = ad.row_norms(ad.sub(ad.gather_rows(match.mapped_pq, C.cp), Tensor(Q[C.cq])))
    d_qp = ad.row_norms(ad.sub(ad.gather_rows(match.mapped_qp, C.cq), Tensor(P[C.cp])))
    return ad.add(ad.mean_all(d_pq), ad.mean_all(d_qp))


@dataclass(frozen=True)
class LossFlags:
    ca: bool = True
    cc: bool = True
    gc: bool = True
    ga: bool = False

    def __post_init__(self):
        if self.gc and not self.cc:
            raise ConfigError("the geometric confidence loss needs the classification loss")
        if not (self.ca or self.ga):
            raise ConfigError("at least one attention loss (ca or ga) is required")

    @classmethod
    def parse(cls, text):
        """From a ``+``-joined string such as ``"ca+cc+gc"``."""
        names = {s.strip() for s in str(text).split("+") if s.strip()}
        unknown = names - {"ca", "cc", "gc", "ga"}
        if unknown:
            raise ConfigError(f"unknown loss terms {sorted(unknown)}")
        return cls(**{n: n in names for n in ("ca", "cc", "gc", "ga")})

    def __str__(self):
        return "+".join(n for n in ("ca", "cc", "gc", "ga") if getattr(self, n))


@dataclass(frozen=True)
class LossBreakdown:
    l_ca: float
    l_cc: float
    l_gc: float
    l_ga: float
    total: float


def total_loss(flags, components):
    """Sum the enabled terms of ``components`` (dict name -> Tensor or float).

    Returns ``(total Tensor, LossBreakdown)``.
    """
    if flags.gc and not flags.cc:
        raise ConfigError("the geometric confidence loss needs the classification loss")
    total = _zero()
    values = {}
    for name in ("ca", "cc", "gc", "ga"):
        term = ad.as_tensor(components.get(name, 0.0))
        values[name] = float(term.data)
        if getattr(flags, name):
            total = ad.add(total, term)
    return total, LossBreakdown(values["ca"], values["cc"], values["gc"], values["ga"], float(total.data))


def registration_losses(match, w_P, w_Q, P, Q, T_gt, C, flags, kappa):
    """All enabled losses for one pair, both directions."""
    T_inv = invert(T_gt)
    N, M = P.shape[0], Q.shape[0]
    comp = {}
    if flags.ca:
        comp["ca"] = loss_ca(match.attention, C, N, M)
    if flags.cc:
        comp["cc"] = ad.add(loss_cc(w_P, P, match.mapped_pq, T_gt, kappa),
                            loss_cc(w_Q, Q, match.mapped_qp, T_inv, kappa))
    if flags.gc:
        comp["gc"] = ad.add(loss_gc(w_P, P, match.mapped_pq, T_gt),
                            loss_gc(w_Q, Q, match.mapped_qp, T_inv))
    if flags.ga:
        comp["ga"] = loss_ga(match, C, P, Q)
    return total_loss(flags, comp)
