"""Back-projection of pixel detections with depth into world-frame points."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .descriptor import Cluster
from .errors import (
    DetectionError,
    EmptyFrame,
    InvalidIntrinsics,
    InvalidPose,
    NonPositiveDepth,
)

ORTHONORMAL_TOL = 1e-6

DEPTH_MODELS = ("ray", "z-axis")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics without skew, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidIntrinsics(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise InvalidIntrinsics("principal point must be finite")

    @classmethod
    def from_matrix(cls, k) -> "CameraIntrinsics":
        """Build from a 3x3 intrinsic matrix; the skew entry must be zero."""
        k = np.asarray(k, dtype=float)
        if k.shape != (3, 3):
            raise InvalidIntrinsics(f"expected a 3x3 matrix, got shape {k.shape}")
        if k[0, 1] != 0.0:
            raise InvalidIntrinsics(f"non-zero skew {k[0, 1]} is not supported")
        if not np.allclose(k[2], [0.0, 0.0, 1.0]) or k[1, 0] != 0.0:
            raise InvalidIntrinsics("matrix is not an upper-triangular pinhole model")
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]), cx=float(k[0, 2]), cy=float(k[1, 2]))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


class CameraPose:
    """Rigid 4x4 camera-to-world transform."""

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (4, 4):
            raise InvalidPose(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidPose("pose contains non-finite entries")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidPose(f"bottom row must be [0, 0, 0, 1], got {m[3].tolist()}")
        r = m[:3, :3]
        if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOL):
            raise InvalidPose("rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidPose("rotation block has determinant != +1")
        m.setflags(write=False)
        self._m = m

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation, translation) -> "CameraPose":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def rotation(self) -> np.ndarray:
        return self._m[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self._m[:3, 3]

    def __eq__(self, other):
        return isinstance(other, CameraPose) and np.array_equal(self._m, other._m)

    def __repr__(self):
        return f"CameraPose({self._m.tolist()!r})"


@dataclass(frozen=True)
class PixelDetection:
    u: float
    v: float
    depth: float


def lift_pixel(det: PixelDetection, k: CameraIntrinsics, depth_model: str = "ray") -> np.ndarray:
    """Back-project one detection into the camera frame.

    With ``depth_model="ray"`` the depth is the distance along the viewing
    ray, so the returned point has Euclidean norm equal to ``det.depth``.
    ``"z-axis"`` treats depth as the z coordinate instead.
    """
    if not (det.depth > 0):
        raise NonPositiveDepth(f"depth must be positive, got {det.depth}")
    if not (k.fx > 0 and k.fy > 0):
        raise InvalidIntrinsics(f"focal lengths must be positive, got fx={k.fx}, fy={k.fy}")
    ray = np.array([(det.u - k.cx) / k.fx, (det.v - k.cy) / k.fy, 1.0])
    if depth_model == "ray":
        return det.depth * ray / np.linalg.norm(ray)
    if depth_model == "z-axis":
        return det.depth * ray
    raise ValueError(f"unknown depth model {depth_model!r}; expected one of {DEPTH_MODELS}")


def to_world(p, pose: CameraPose) -> np.ndarray:
    """Apply the rigid camera-to-world transform to one point (or an (N, 3) array)."""
    p = np.asarray(p, dtype=float)
    return p @ pose.rotation.T + pose.translation


def frame_to_cluster(
    dets: Sequence[PixelDetection],
    k: CameraIntrinsics,
    pose: CameraPose,
    frame_id: int = 0,
    depth_model: str = "ray",
    source: str | None = None,
) -> Cluster:
    if len(dets) == 0:
        raise EmptyFrame(f"frame {frame_id} has no detections")
    points = []
    for i, det in enumerate(dets):
        try:
            points.append(to_world(lift_pixel(det, k, depth_model), pose))
        except (NonPositiveDepth, InvalidIntrinsics, InvalidPose) as exc:
            raise DetectionError(i, exc) from exc
    return Cluster(np.vstack(points), frame_id=frame_id, source=source)
