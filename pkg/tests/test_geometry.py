import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcam.exceptions import DegenerateWeightsError, ParameterError, RankDeficiencyError
from pcam.geometry import (
    RigidTransform,
    axis_angle_matrix,
    check_cloud,
    knn,
    nearest_neighbor,
    random_rotation,
    rotation_error,
    translation_error,
    voxel_downsample,
    weighted_procrustes,
)

from conftest import brute_knn, random_transform


def test_rigid_transform_validation():
    with pytest.raises(ParameterError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ParameterError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))
    T = RigidTransform.identity()
    assert np.array_equal(T.as_matrix(), np.eye(4))


def test_transform_is_read_only(rng):
    T = random_transform(rng)
    with pytest.raises(ValueError):
        T.R[0, 0] = 5.0


def test_compose_and_inverse(rng):
    A, B = random_transform(rng), random_transform(rng)
    pts = rng.normal(size=(10, 3))
    assert np.allclose(A.compose(B).apply(pts), A.apply(B.apply(pts)), atol=1e-12)
    assert np.allclose(A.inverse().apply(A.apply(pts)), pts, atol=1e-12)


def test_list_roundtrip(rng):
    T = random_transform(rng)
    back = RigidTransform.from_list(T.to_list())
    assert np.array_equal(back.R, T.R) and np.array_equal(back.t, T.t)


def test_check_cloud_rejects_bad_input():
    with pytest.raises(ParameterError):
        check_cloud(np.zeros((4, 2)))
    with pytest.raises(ParameterError):
        check_cloud(np.array([[0.0, np.nan, 1.0]]))
    with pytest.raises(ParameterError):
        check_cloud(np.zeros((0, 3)))


def test_axis_angle_known_case():
    R = axis_angle_matrix([0, 0, 1], math.pi / 2)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


@pytest.mark.parametrize("k", [1, 4, 9])
def test_knn_matches_brute_force(rng, k):
    ref = rng.normal(size=(40, 3))
    qry = rng.normal(size=(15, 3))
    assert np.array_equal(knn(ref, qry, k), brute_knn(ref, qry, k))


def test_knn_tie_break_lowest_index():
    ref = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, 0, 5.0]])
    idx = knn(ref, np.zeros((1, 3)), 3)
    assert idx.tolist() == [[0, 1, 2]]


def test_knn_k_too_large():
    with pytest.raises(ParameterError):
        knn(np.zeros((3, 3)), np.zeros((1, 3)), 4)


def test_knn_self_query_returns_self_first(rng):
    pts = rng.normal(size=(30, 3))
    assert np.array_equal(knn(pts, pts, 1)[:, 0], np.arange(30))


def test_nearest_neighbor(rng):
    ref = rng.normal(size=(25, 3))
    qry = rng.normal(size=(8, 3))
    idx, dist = nearest_neighbor(ref, qry)
    assert np.array_equal(idx, brute_knn(ref, qry, 1)[:, 0])
    assert np.allclose(dist, np.linalg.norm(ref[idx] - qry, axis=1))


def test_voxel_downsample_centroids():
    pts = np.array([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3], [1.5, 0.2, 0.2]])
    out = voxel_downsample(pts, 1.0)
    assert np.allclose(out, [[0.2, 0.2, 0.2], [1.5, 0.2, 0.2]])


def test_procrustes_exact_recovery(rng):
    for _ in range(20):
        T = random_transform(rng)
        src = rng.normal(size=(30, 3))
        w = rng.uniform(0.1, 1.0, size=30)
        est = weighted_procrustes(src, T.apply(src), w)
        # acos resolves angles only to ~1e-8 near zero
        assert rotation_error(est.R, T.R) < 1e-6
        assert np.allclose(est.R, T.R, atol=1e-12)
        assert translation_error(est.t, T.t) < 1e-9


def test_procrustes_reflection_guard(rng):
    # a mirrored target: the best proper rotation must still have det +1
    src = rng.normal(size=(20, 3))
    dst = src * np.array([1.0, 1.0, -1.0])
    est = weighted_procrustes(src, dst)
    assert np.isclose(np.linalg.det(est.R), 1.0)


def test_procrustes_zero_weights_ignored(rng):
    T = random_transform(rng)
    src = rng.normal(size=(20, 3))
    dst = T.apply(src)
    dst[:5] += 10.0  # corrupted pairs get zero weight
    w = np.ones(20)
    w[:5] = 0.0
    est = weighted_procrustes(src, dst, w)
    assert np.allclose(est.R, T.R, atol=1e-12)


def test_procrustes_errors(rng):
    src = rng.normal(size=(5, 3))
    with pytest.raises(DegenerateWeightsError):
        weighted_procrustes(src, src, np.zeros(5))
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(RankDeficiencyError):
        weighted_procrustes(line, line)
    with pytest.raises(ParameterError):
        weighted_procrustes(src, src, -np.ones(5))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_procrustes_weight_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(12, 3))
    dst = src @ random_rotation(rng).T + rng.normal(scale=0.1, size=(12, 3))
    w = rng.uniform(0.01, 1.0, size=12)
    a = weighted_procrustes(src, dst, w)
    b = weighted_procrustes(src, dst, c * w)
    assert np.allclose(a.R, b.R, atol=1e-12) and np.allclose(a.t, b.t, atol=1e-12)


def test_procrustes_uniform_equals_unweighted(rng):
    src = rng.normal(size=(15, 3))
    dst = rng.normal(size=(15, 3))
    a = weighted_procrustes(src, dst)
    b = weighted_procrustes(src, dst, np.full(15, 0.3))
    assert np.allclose(a.R, b.R, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rotation_error_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    A, B = random_rotation(rng), random_rotation(rng)
    e = rotation_error(A, B)
    assert e == rotation_error(B, A)
    assert 0.0 <= e <= math.pi
    assert rotation_error(A, A) < 1e-7


def test_rotation_error_known_angle():
    R = axis_angle_matrix([1, 1, 0], 0.3)
    assert math.isclose(rotation_error(R, np.eye(3)), 0.3, abs_tol=1e-9)
