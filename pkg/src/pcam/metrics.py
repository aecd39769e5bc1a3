"""Registration error metrics and aggregate reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ParameterError
from .geometry import RigidTransform, rotation_error, translation_error

# 3DMatch-style defaults: 0.3 scene units and 15 degrees
DEFAULT_TE_MAX = 0.3
DEFAULT_RE_MAX = np.deg2rad(15.0)

# residual rotation is reported as intrinsic Z-Y-X Euler angles
EULER_CONVENTION = "ZYX"


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    te: float
    re: float
    success: bool
    gt: Optional[RigidTransform] = None
    failed: bool = False

    @classmethod
    def from_estimate(cls, estimate, gt, te_max=DEFAULT_TE_MAX, re_max=DEFAULT_RE_MAX, failed=False):
        te = translation_error(estimate.t, gt.t)
        re = rotation_error(estimate.R, gt.R)
        return cls(estimate, te, re, bool(te <= te_max and re <= re_max and not failed), gt, failed)


class RecallReport(NamedTuple):
    recall: float
    te_all: float
    re_all: float
    te: float
    re: float


class RMSEMAEReport(NamedTuple):
    rmse_r: float
    mae_r: float
    rmse_t: float
    mae_t: float


def recall(results: Sequence[RegistrationResult], te_max=DEFAULT_TE_MAX, re_max=DEFAULT_RE_MAX):
    """Success rate plus mean errors over all pairs and over successful pairs.

    Rotation errors are in radians. Means over an empty success set are NaN.
    Failed registrations never count as successes.
    """
    if len(results) == 0:
        raise ParameterError("recall needs at least one result")
    te = np.array([r.te for r in results])
    re = np.array([r.re for r in results])
    failed = np.array([r.failed for r in results], dtype=bool)
    ok = (te <= te_max) & (re <= re_max) & ~failed
    return RecallReport(
        recall=float(ok.mean()),
        te_all=float(te.mean()),
        re_all=float(re.mean()),
        te=float(te[ok].mean()) if ok.any() else float("nan"),
        re=float(re[ok].mean()) if ok.any() else float("nan"),
    )


def residual_euler_degrees(R_est, R_gt):
    residual = np.asarray(R_gt).T @ np.asarray(R_est)
    return Rotation.from_matrix(residual).as_euler(EULER_CONVENTION, degrees=True)


def rmse_mae_rotation_translation(results: Sequence[RegistrationResult]):
    """RMSE/MAE of the residual Euler angles (degrees) and translation components."""
    if len(results) == 0:
        raise ParameterError("need at least one result")
    angles = np.array([residual_euler_degrees(r.transform.R, r.gt.R) for r in results])
    dt = np.array([r.transform.t - r.gt.t for r in results])
    return RMSEMAEReport(
        rmse_r=float(np.sqrt(np.mean(angles ** 2))),
        mae_r=float(np.mean(np.abs(angles))),
        rmse_t=float(np.sqrt(np.mean(dt ** 2))),
        mae_t=float(np.mean(np.abs(dt))),
    )
