"""Full registration network: matching net ``g`` plus confidence net ``h``,
and the inference routine turning their outputs into a rigid transform."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .confidence import ConfidenceNet, hard_threshold, pair_features
from .exceptions import CheckpointError
from .geometry import RigidTransform, weighted_procrustes
from .icp import ICPResult, icp_refine
from .layers import ParamStore
from .matching import MatchingModelConfig, MatchingNet, MatchResult


@dataclass
class PairOutput:
    match: MatchResult
    w_P: ad.Tensor
    w_Q: ad.Tensor


@dataclass
class Registration:
    transform: RigidTransform
    weights: np.ndarray
    scores: np.ndarray
    mapped: np.ndarray
    icp: Optional[ICPResult] = None


class PCAMNetwork:
    def __init__(self, matching_config, seed=0, conf_width=64, conf_blocks=9, conf_k=32):
        self.matching_config = matching_config
        store = ParamStore(np.random.default_rng(seed))
        self.matcher = MatchingNet(matching_config, store, prefix="match")
        self.confidence = ConfidenceNet(store, width=conf_width, n_blocks=conf_blocks, k=conf_k, prefix="conf")
        self.store = store

    @classmethod
    def from_section(cls, model_section, seed=0):
        cfg = MatchingModelConfig(
            n_layers=model_section.n_layers,
            channels=model_section.channels,
            k=model_section.k,
            temperature=model_section.temperature,
            combine_mode=model_section.combine_mode,
            map_mode=model_section.map_mode,
            input_features=model_section.input_features,
        )
        return cls(cfg, seed, model_section.conf_width, model_section.conf_blocks, model_section.conf_k)

    @property
    def parameters(self):
        return list(self.store.params.values())

    def forward(self, P, Q, map_mode=None):
        match = self.matcher.forward(P, Q, map_mode)
        w_P = self.confidence(pair_features(P, match.mapped_pq))
        w_Q = self.confidence(pair_features(Q, match.mapped_qp))
        return PairOutput(match, w_P, w_Q)

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.store.params.items()}

    def load_state_dict(self, state):
        names = set(self.store.params)
        missing = sorted(names - set(state))
        unknown = sorted(set(state) - names)
        if missing:
            raise CheckpointError(f"missing parameters: {', '.join(missing)}")
        if unknown:
            raise CheckpointError(f"unknown parameters: {', '.join(unknown)}")
        for name, p in self.store.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise CheckpointError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
            p.m = np.zeros_like(p.data)
            p.v = np.zeros_like(p.data)
            p.step = 0

    def register(self, P, Q, tau=0.0, map_mode=None, icp=False, icp_max_iters=50, icp_max_pair_dist=0.05):
        """Estimate the transform mapping P onto Q.

        Raises DegenerateWeightsError / RankDeficiencyError when the
        thresholded weights leave nothing to solve with.
        """
        with ad.no_grad():
            out = self.forward(P, Q, map_mode)
        scores = out.w_P.data.copy()
        mapped = out.match.mapped_pq.data.copy()
        weights = hard_threshold(scores, tau)
        T = weighted_procrustes(P, mapped, weights)
        refined = None
        if icp:
            refined = icp_refine(P, Q, T, max_iters=icp_max_iters, max_pair_dist=icp_max_pair_dist)
            T = refined.transform
        return Registration(T, weights, scores, mapped, refined)
