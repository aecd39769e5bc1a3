"""Point matching network: per-layer cross-attention, feature exchange and the
global attention product, followed by soft or sparse correspondence maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ConfigError, NumericError, ParameterError
from .geometry import check_cloud
from .layers import Encoder, Neighborhood, ParamStore

# channel count at the output of each attention layer, index 0 is the xyz input
REFERENCE_CHANNELS = (3, 32, 32, 64, 64, 128, 128)
TEMPERATURE = 0.03

COMBINE_MODES = ("product", "last_layer", "no_intermediate")
MAP_MODES = ("soft", "sparse")
INPUT_FEATURES = ("ones", "xyz")


def default_channels(n_layers):
    if n_layers < len(REFERENCE_CHANNELS):
        return tuple(REFERENCE_CHANNELS[: n_layers + 1])
    return tuple(REFERENCE_CHANNELS) + (REFERENCE_CHANNELS[-1],) * (n_layers + 1 - len(REFERENCE_CHANNELS))


@dataclass
class MatchingModelConfig:
    n_layers: int = 2
    channels: Optional[Tuple[int, ...]] = None
    k: int = 32
    temperature: float = TEMPERATURE
    combine_mode: str = "product"
    map_mode: str = "soft"
    input_features: str = "ones"

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.channels is None:
            self.channels = default_channels(self.n_layers)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != self.n_layers + 1 or self.channels[0] != 3:
            raise ConfigError("channels must have n_layers + 1 entries starting with 3")
        if any(c % 2 for c in self.channels[1:]):
            raise ConfigError("layer channel counts must be even")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.combine_mode not in COMBINE_MODES:
            raise ConfigError(f"combine_mode must be one of {COMBINE_MODES}")
        if self.map_mode not in MAP_MODES:
            raise ConfigError(f"map_mode must be one of {MAP_MODES}")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.input_features not in INPUT_FEATURES:
            raise ConfigError(f"input_features must be one of {INPUT_FEATURES}")


def input_features(cloud, kind):
    """Per-point features fed to the first encoder.

    ``ones`` leaves all geometry to the relative coordinates inside the
    convolutions; ``xyz`` adds the centred absolute coordinates, which are not
    invariant to the unknown rotation between the clouds.
    """
    if kind == "ones":
        return Tensor(np.ones_like(cloud))
    return Tensor(cloud - cloud.mean(axis=0))


# -- attention algebra --------------------------------------------------------

def cosine_similarity_matrix(e_P, e_Q, eps=1e-12):
    e_P, e_Q = ad.as_tensor(e_P), ad.as_tensor(e_Q)
    if e_P.shape[1] != e_Q.shape[1]:
        raise ParameterError(f"feature sizes differ: {e_P.shape[1]} vs {e_Q.shape[1]}")
    return ad.matmul(ad.l2_normalize_rows(e_P, eps), ad.transpose(ad.l2_normalize_rows(e_Q, eps)))


def cross_attention(a, s=TEMPERATURE):
    """``(A_PQ, A_QP)``: softmax of ``a / s`` over rows and over columns."""
    return ad.softmax_rows(a, s), ad.softmax_cols(a, s)


def exchange_features(e_P, e_Q, A_PQ, A_QP):
    """Append to each point the attention-weighted features of the other cloud."""
    E_P = ad.concat_cols(e_P, ad.matmul(A_PQ, e_Q))
    E_Q = ad.concat_cols(e_Q, ad.matmul(ad.transpose(A_QP), e_P))
    return E_P, E_Q


def attention_product(mats):
    if len(mats) == 0:
        raise ParameterError("attention_product needs at least one matrix")
    out = ad.as_tensor(mats[0])
    shape = out.shape
    for m in mats[1:]:
        m = ad.as_tensor(m)
        if m.shape != shape:
            raise ParameterError("attention matrices differ in shape")
        out = ad.mul(out, m)
    return out


def soft_map(A, Q, min_row_sum=1e-30):
    """Row-renormalised barycentres ``sum_j A_ij q_j / sum_j A_ij``."""
    A = ad.as_tensor(A)
    Q = check_cloud(Q, "Q")
    if A.shape[1] != Q.shape[0]:
        raise ParameterError("attention columns must match |Q|")
    row_sums = A.data.sum(axis=1)
    bad = np.flatnonzero(row_sums < min_row_sum)
    if bad.size:
        raise NumericError(f"attention rows {bad.tolist()} sum below {min_row_sum}")
    weighted = ad.matmul(A, Tensor(Q))
    return ad.mul(weighted, ad.reshape(ad.reciprocal(ad.sum_rows(A)), (-1, 1)))


def soft_map_from_log(log_A, target, axis=1):
    """Soft map computed from log-attention, immune to underflow of the product.

    ``axis=1`` maps rows onto ``target`` (P -> Q); ``axis=0`` maps columns
    (Q -> P).
    """
    if axis == 1:
        W = ad.softmax_rows(log_A, 1.0)
    else:
        W = ad.transpose(ad.softmax_cols(log_A, 1.0))
    return ad.matmul(W, Tensor(target))


def sparse_map(A, Q):
    """Row argmax (lowest index on ties) and the selected points. Not differentiable."""
    data = A.data if isinstance(A, Tensor) else np.asarray(A, dtype=np.float64)
    Q = check_cloud(Q, "Q")
    if data.shape[1] != Q.shape[0]:
        raise ParameterError("attention columns must match |Q|")
    idx = np.argmax(data, axis=1)
    return Q[idx].copy(), idx


# -- network ------------------------------------------------------------------

@dataclass
class AttentionStack:
    """Per-layer attention pairs plus the log of the global combination.

    ``pq[l]`` is row-stochastic (P -> Q), ``qp[l]`` column-stochastic.
    """

    pq: List[Tensor]
    qp: List[Tensor]
    log_pq: List[Tensor]
    log_qp: List[Tensor]
    combine_mode: str = "product"

    def _selected(self):
        return slice(None) if self.combine_mode == "product" else slice(-1, None)

    @property
    def global_pq(self):
        return attention_product(self.pq[self._selected()])

    @property
    def global_qp(self):
        return attention_product(self.qp[self._selected()])

    @property
    def log_global_pq(self):
        return _sum_tensors(self.log_pq[self._selected()])

    @property
    def log_global_qp(self):
        return _sum_tensors(self.log_qp[self._selected()])


def _sum_tensors(ts):
    out = ts[0]
    for t in ts[1:]:
        out = ad.add(out, t)
    return out


@dataclass
class MatchResult:
    attention: AttentionStack
    mapped_pq: Tensor
    mapped_qp: Tensor
    map_mode: str
    idx_pq: Optional[np.ndarray] = None
    idx_qp: Optional[np.ndarray] = None


class MatchingNet:
    """Siamese stack of encoders with a cross-attention exchange after each one."""

    def __init__(self, config, store=None, rng=None, prefix="match"):
        self.config = config
        if store is None:
            store = ParamStore(rng if rng is not None else np.random.default_rng(0))
        ch = config.channels
        self.encoders = []
        c_in = ch[0]
        for layer in range(config.n_layers):
            exchanges = self._exchanges(layer)
            c_out = ch[layer + 1] // 2 if exchanges else ch[layer + 1]
            self.encoders.append(Encoder(store, f"{prefix}.layer{layer}", c_in, c_out))
            c_in = ch[layer + 1]
        self.store = store
        self.prefix = prefix

    def _exchanges(self, layer):
        """Whether ``layer`` computes attention (and, before the last layer, exchanges)."""
        last = layer == self.config.n_layers - 1
        return last or self.config.combine_mode != "no_intermediate"

    @property
    def parameters(self):
        return [p for name, p in self.store.params.items() if name.startswith(self.prefix + ".")]

    def neighborhoods(self, cloud):
        if self.config.k > cloud.shape[0]:
            raise ParameterError(f"k={self.config.k} exceeds cloud size {cloud.shape[0]}")
        return Neighborhood.build(cloud, self.config.k)

    def forward(self, P, Q, map_mode=None):
        cfg = self.config
        map_mode = map_mode or cfg.map_mode
        if map_mode not in MAP_MODES:
            raise ConfigError(f"map_mode must be one of {MAP_MODES}")
        P = check_cloud(P, "P")
        Q = check_cloud(Q, "Q")
        nP, nQ = self.neighborhoods(P), self.neighborhoods(Q)
        F_P, F_Q = input_features(P, cfg.input_features), input_features(Q, cfg.input_features)
        pq, qp, log_pq, log_qp = [], [], [], []
        for layer, enc in enumerate(self.encoders):
            e_P = enc(F_P, P, nP)
            e_Q = enc(F_Q, Q, nQ)
            if not self._exchanges(layer):
                F_P, F_Q = e_P, e_Q
                continue
            sim = cosine_similarity_matrix(e_P, e_Q)
            A_PQ, A_QP = cross_attention(sim, cfg.temperature)
            pq.append(A_PQ)
            qp.append(A_QP)
            log_pq.append(ad.log_softmax_rows(sim, cfg.temperature))
            log_qp.append(ad.log_softmax_cols(sim, cfg.temperature))
            if layer < cfg.n_layers - 1:
                F_P, F_Q = exchange_features(e_P, e_Q, A_PQ, A_QP)
        stack = AttentionStack(pq, qp, log_pq, log_qp, cfg.combine_mode)
        log_pq_star = stack.log_global_pq
        log_qp_star = stack.log_global_qp
        if map_mode == "soft":
            return MatchResult(
                stack,
                soft_map_from_log(log_pq_star, Q, axis=1),
                soft_map_from_log(log_qp_star, P, axis=0),
                "soft",
            )
        m_pq, i_pq = sparse_map(log_pq_star.data, Q)
        m_qp, i_qp = sparse_map(log_qp_star.data.T, P)
        return MatchResult(stack, Tensor(m_pq), Tensor(m_qp), "sparse", i_pq, i_qp)
