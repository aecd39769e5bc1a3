"""Point-cloud primitives: rigid transforms, neighbour search, downsampling and
weighted Procrustes alignment.

Point clouds are plain ``(N, 3)`` float arrays; :func:`check_cloud` is the
validation entry point used by every public function that accepts one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateWeightsError, ParameterError, RankDeficiencyError

ORTHO_TOL = 1e-9


def check_cloud(points, name="cloud", allow_empty=False):
    """Validate and convert ``points`` to a C-contiguous ``(N, 3)`` float64 array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ParameterError(f"{name} must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise ParameterError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite coordinates")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation ``R`` followed by translation ``t``: ``x -> R x + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ParameterError("transform contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ParameterError("R is not a proper rotation matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def apply(self, points):
        return apply_transform(points, self)

    def inverse(self):
        return invert(self)

    def compose(self, other):
        """Return ``self o other``, i.e. apply ``other`` first."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def to_list(self):
        """Twelve numbers: R row-major followed by t."""
        return [float(v) for v in self.R.ravel()] + [float(v) for v in self.t]

    @classmethod
    def from_list(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (12,):
            raise ParameterError(f"expected 12 values, got {values.size}")
        return cls(values[:9].reshape(3, 3), values[9:])

    def __repr__(self):
        return f"RigidTransform(R={self.R.tolist()}, t={self.t.tolist()})"


def apply_transform(points, transform):
    pts = check_cloud(points, allow_empty=True)
    return pts @ transform.R.T + transform.t


def invert(transform):
    Rt = transform.R.T
    return RigidTransform(Rt, -Rt @ transform.t)


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about ``axis`` (normalised internally) by ``angle`` radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    R = np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
    # re-orthonormalise to keep within ORTHO_TOL after many compositions
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def random_rotation(rng, max_angle=np.pi):
    """Uniform random axis, angle uniform in ``[0, max_angle]``."""
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-8:
        axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_angle)
    return axis_angle_matrix(axis, angle)


def _sq_dists(queries, reference):
    diff = queries[:, None, :] - reference[None, :, :]
    return diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]


def knn(reference, queries, k, chunk=1024):
    """Indices of the ``k`` nearest reference points for each query.

    Rows are sorted by ascending distance; equal distances keep the lower
    reference index first. Brute force, chunked over the queries.
    """
    ref = check_cloud(reference, "reference")
    qry = check_cloud(queries, "queries", allow_empty=True)
    k = int(k)
    if k < 1:
        raise ParameterError("k must be positive")
    if k > ref.shape[0]:
        raise ParameterError(f"k={k} exceeds reference size {ref.shape[0]}")
    out = np.empty((qry.shape[0], k), dtype=np.int64)
    for start in range(0, qry.shape[0], chunk):
        d = _sq_dists(qry[start:start + chunk], ref)
        out[start:start + chunk] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def nearest_neighbor(reference, queries, chunk=1024):
    """``(indices, distances)`` of the single nearest reference point per query."""
    ref = check_cloud(reference, "reference")
    qry = check_cloud(queries, "queries", allow_empty=True)
    idx = np.empty(qry.shape[0], dtype=np.int64)
    dist = np.empty(qry.shape[0])
    for start in range(0, qry.shape[0], chunk):
        d = _sq_dists(qry[start:start + chunk], ref)
        j = np.argmin(d, axis=1)  # first occurrence on ties
        idx[start:start + chunk] = j
        dist[start:start + chunk] = np.sqrt(d[np.arange(d.shape[0]), j])
    return idx, dist


def voxel_downsample(points, voxel_size):
    """Replace the points of every occupied voxel by their centroid.

    Output is ordered by integer cell coordinates, z first, then y, then x.
    """
    pts = check_cloud(points)
    if not voxel_size > 0:
        raise ParameterError("voxel_size must be positive")
    cells = np.floor(pts / voxel_size).astype(np.int64)
    order = np.lexsort((cells[:, 0], cells[:, 1], cells[:, 2]))
    cells, pts = cells[order], pts[order]
    new_group = np.ones(len(cells), dtype=bool)
    new_group[1:] = np.any(cells[1:] != cells[:-1], axis=1)
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    sums = np.zeros((counts.size, 3))
    np.add.at(sums, group, pts)
    return sums / counts[:, None]


def weighted_procrustes(src, dst, weights=None, rank_tol=1e-10):
    """Rigid transform minimising ``sum_i w_i |R src_i + t - dst_i|^2``.

    Raises :class:`DegenerateWeightsError` when the weights sum to zero and
    :class:`RankDeficiencyError` when the weighted points are collinear.
    """
    src = check_cloud(src, "src")
    dst = check_cloud(dst, "dst")
    if src.shape != dst.shape:
        raise ParameterError(f"src/dst size mismatch: {src.shape[0]} vs {dst.shape[0]}")
    if weights is None:
        weights = np.ones(src.shape[0])
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != src.shape[0]:
        raise ParameterError("weights length does not match point count")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("sum of weights is zero")
    w = w / total
    mu_s = w @ src
    mu_d = w @ dst
    xs = src - mu_s
    xd = dst - mu_d
    H = (xs * w[:, None]).T @ xd
    U, S, Vt = np.linalg.svd(H)
    scale = max(np.sum(w * np.sum(xs * xs, axis=1)), np.sum(w * np.sum(xd * xd, axis=1)))
    if scale <= 0 or S[1] <= rank_tol * scale:
        raise RankDeficiencyError("weighted correspondences are collinear or coincident")
    V = Vt.T
    if np.linalg.det(V @ U.T) < 0:
        V[:, -1] *= -1
    R = V @ U.T
    t = mu_d - R @ mu_s
    return RigidTransform(R, t)


def rotation_error(R_est, R_gt):
    """Geodesic angle in radians between two rotations."""
    R_est = np.asarray(R_est, dtype=np.float64)
    R_gt = np.asarray(R_gt, dtype=np.float64)
    # elementwise form of trace(R_gt^T R_est): exactly symmetric in its arguments
    cos = (np.sum(R_gt * R_est) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def translation_error(t_est, t_gt):
    return float(np.linalg.norm(np.asarray(t_est, dtype=np.float64) - np.asarray(t_gt, dtype=np.float64)))
