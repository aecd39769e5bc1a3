"""Input validation helpers for the estimator API."""

from __future__ import annotations

from sklearn.exceptions import NotFittedError

from .data import RegistrationPair
from .exceptions import ParameterError
from .geometry import RigidTransform, check_cloud


def check_pair(item, require_gt=False):
    """Normalise ``item`` to ``(P, Q, T_gt or None)``.

    Accepts a :class:`RegistrationPair` or a tuple ``(P, Q)`` / ``(P, Q, T_gt)``.
    """
    if isinstance(item, RegistrationPair):
        P, Q, T = item.P, item.Q, item.T_gt
    else:
        try:
            parts = tuple(item)
        except TypeError:
            raise ParameterError("expected a RegistrationPair or a (P, Q[, T_gt]) tuple") from None
        if len(parts) not in (2, 3):
            raise ParameterError("expected a RegistrationPair or a (P, Q[, T_gt]) tuple")
        P, Q = parts[0], parts[1]
        T = parts[2] if len(parts) == 3 else None
    if T is not None and not isinstance(T, RigidTransform):
        raise ParameterError("ground truth must be a RigidTransform")
    if require_gt and T is None:
        raise ParameterError("ground-truth transform required")
    return check_cloud(P, "P"), check_cloud(Q, "Q"), T


def check_pairs(X, require_gt=False, min_points=1):
    pairs = [check_pair(item, require_gt) for item in X]
    if not pairs:
        raise ParameterError("no pairs given")
    for P, Q, _ in pairs:
        if P.shape[0] < min_points or Q.shape[0] < min_points:
            raise ParameterError(f"clouds need at least {min_points} points")
    return pairs


def check_is_fitted(estimator):
    if getattr(estimator, "network_", None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
