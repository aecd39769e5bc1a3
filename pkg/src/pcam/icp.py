"""Point-to-point ICP used as an optional post-processing step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import RankDeficiencyError
from .geometry import (
    RigidTransform,
    apply_transform,
    check_cloud,
    nearest_neighbor,
    rotation_error,
    weighted_procrustes,
)


@dataclass(frozen=True)
class ICPResult:
    transform: RigidTransform
    rms: float
    iterations: int
    converged: bool
    no_progress: bool


def _inlier_pairs(P, Q, T, max_pair_dist):
    idx, dist = nearest_neighbor(Q, apply_transform(P, T))
    mask = dist <= max_pair_dist
    if not mask.any():
        return mask, idx, np.inf
    return mask, idx, float(np.sqrt(np.mean(dist[mask] ** 2)))


def icp_refine(P, Q, T_init, max_iters=50, convergence_eps=1e-10, max_pair_dist=0.1):
    """Refine ``T_init`` (mapping P onto Q) by alternating matching and Procrustes.

    A candidate update is only accepted when it does not increase the inlier
    RMS, so the returned transform is never worse than ``T_init`` under
    that measure.
    """
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    mask, idx, rms = _inlier_pairs(P, Q, T_init, max_pair_dist)
    if not mask.any():
        return ICPResult(T_init, float("inf"), 0, False, True)

    T = T_init
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        try:
            T_new = weighted_procrustes(P[mask], Q[idx[mask]])
        except RankDeficiencyError:
            break
        new_mask, new_idx, new_rms = _inlier_pairs(P, Q, T_new, max_pair_dist)
        if not new_mask.any() or new_rms > rms:
            break
        change = rotation_error(T_new.R, T.R) + float(np.linalg.norm(T_new.t - T.t))
        T, mask, idx, rms = T_new, new_mask, new_idx, new_rms
        if change < convergence_eps:
            converged = True
            break
    return ICPResult(T, rms, it, converged, False)
