import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustermatch.errors import DetectionError, EmptyFrame, InvalidIntrinsics, InvalidPose, NonPositiveDepth
from clustermatch.geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelDetection,
    frame_to_cluster,
    lift_pixel,
    to_world,
)

from .conftest import random_rotation

K = CameraIntrinsics(fx=615.0, fy=612.5, cx=320.0, cy=240.0)


def test_principal_point_lifts_to_optical_axis():
    np.testing.assert_allclose(lift_pixel(PixelDetection(320.0, 240.0, 0.5), K), [0, 0, 0.5], atol=1e-15)


def test_lift_unit_intrinsics():
    k = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    p = lift_pixel(PixelDetection(1.0, 0.0, math.sqrt(2)), k)
    np.testing.assert_allclose(p, [1.0, 0.0, 1.0], rtol=1e-15)


def test_lift_rejects_bad_depth():
    with pytest.raises(NonPositiveDepth):
        lift_pixel(PixelDetection(320.0, 240.0, -0.1), K)
    with pytest.raises(NonPositiveDepth):
        lift_pixel(PixelDetection(320.0, 240.0, 0.0), K)


@pytest.mark.parametrize("fx,fy", [(0.0, 1.0), (1.0, -2.0)])
def test_invalid_intrinsics(fx, fy):
    with pytest.raises(InvalidIntrinsics):
        CameraIntrinsics(fx, fy, 0.0, 0.0)


def test_intrinsics_from_matrix_requires_zero_skew():
    assert CameraIntrinsics.from_matrix(K.matrix()) == K
    m = K.matrix()
    m[0, 1] = 0.3
    with pytest.raises(InvalidIntrinsics):
        CameraIntrinsics.from_matrix(m)


def test_z_axis_depth_model():
    det = PixelDetection(400.0, 100.0, 0.8)
    p = lift_pixel(det, K, depth_model="z-axis")
    assert p[2] == pytest.approx(0.8)
    ray = lift_pixel(det, K)
    np.testing.assert_allclose(p / np.linalg.norm(p), ray / np.linalg.norm(ray), rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(-2000, 2000),
    v=st.floats(-2000, 2000),
    depth=st.floats(1e-3, 50.0),
)
def test_lift_norm_equals_ray_depth(u, v, depth):
    p = lift_pixel(PixelDetection(u, v, depth), K)
    assert np.linalg.norm(p) == pytest.approx(depth, rel=1e-9)


def test_to_world_examples():
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(to_world(p, CameraPose.identity()), p)
    shift = CameraPose.from_rt(np.eye(3), [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(to_world(p, shift), [1.0, 2.0, 4.0])
    rz = CameraPose.from_rt([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], [0, 0, 0])
    np.testing.assert_allclose(to_world([1.0, 0.0, 0.0], rz), [0.0, 1.0, 0.0], atol=1e-12)


def test_pose_validation():
    bad = np.eye(4)
    bad[0, 0] = 1.1
    with pytest.raises(InvalidPose):
        CameraPose(bad)
    reflect = np.diag([1.0, 1.0, -1.0, 1.0])
    with pytest.raises(InvalidPose):
        CameraPose(reflect)
    bottom = np.eye(4)
    bottom[3, 0] = 1e-3
    with pytest.raises(InvalidPose):
        CameraPose(bottom)


def test_pose_accepts_float32_roundoff(rng):
    r = random_rotation(rng).astype(np.float32).astype(float)
    CameraPose.from_rt(r, [0.1, 0.2, 0.3])


def test_rigid_transform_preserves_distances(rng):
    for _ in range(50):
        pose = CameraPose.from_rt(random_rotation(rng), rng.normal(size=3))
        pts = rng.normal(size=(5, 3))
        w = to_world(pts, pose)
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d1 = np.linalg.norm(w[:, None] - w[None], axis=-1)
        np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-12)


def test_frame_to_cluster_single_detection():
    c = frame_to_cluster([PixelDetection(320.0, 240.0, 1.0)], K, CameraPose.identity())
    np.testing.assert_allclose(c.points, [[0.0, 0.0, 1.0]], atol=1e-15)


def test_frame_to_cluster_is_composition(rng):
    pose = CameraPose.from_rt(random_rotation(rng), [0.5, -0.2, 1.0])
    dets = [PixelDetection(300.0, 200.0, 0.4), PixelDetection(350.5, 260.25, 0.45), PixelDetection(10.0, 470.0, 0.6)]
    c = frame_to_cluster(dets, K, pose, frame_id=7)
    assert c.frame_id == 7 and len(c) == 3
    for d, p in zip(dets, c.points):
        np.testing.assert_array_equal(p, to_world(lift_pixel(d, K), pose))


def test_frame_to_cluster_errors():
    with pytest.raises(EmptyFrame):
        frame_to_cluster([], K, CameraPose.identity())
    dets = [PixelDetection(1.0, 1.0, 0.3), PixelDetection(2.0, 2.0, -1.0)]
    with pytest.raises(DetectionError) as info:
        frame_to_cluster(dets, K, CameraPose.identity())
    assert info.value.index == 1
    assert isinstance(info.value.cause, NonPositiveDepth)
