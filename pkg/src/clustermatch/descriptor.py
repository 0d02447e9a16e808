"""Centroid-relative cluster descriptor: inertia and mean distance to centroid."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import EmptyCluster, TooFewPoints, ValidationError

MIN_POINTS = 2


class Cluster:
    """The flower-center points observed in one frame.

    Parameters
    ----------
    points : array_like, shape (N, 3)
        Point coordinates in meters. Row order is preserved.
    frame_id : int
        Index of the frame the points came from.
    source : str, optional
        Free-form provenance tag (file name, camera id, ...).
    """

    __slots__ = ("points", "frame_id", "source")

    def __init__(self, points, frame_id: int = 0, source: str | None = None):
        pts = np.array(points, dtype=float)
        if pts.size == 0:
            raise EmptyCluster("cluster has no points")
        pts = pts.reshape(-1, 3) if pts.ndim == 1 else pts
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("cluster contains non-finite coordinates")
        pts.setflags(write=False)
        self.points = pts
        self.frame_id = int(frame_id)
        self.source = source

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, Cluster)
            and self.frame_id == other.frame_id
            and self.source == other.source
            and np.array_equal(self.points, other.points)
        )

    def __repr__(self):
        return f"Cluster(frame_id={self.frame_id}, n={len(self)}, source={self.source!r})"

    def translated(self, t) -> "Cluster":
        return Cluster(self.points + np.asarray(t, dtype=float), self.frame_id, self.source)

    def with_points(self, points) -> "Cluster":
        return Cluster(points, self.frame_id, self.source)


class Descriptor(NamedTuple):
    inertia: float
    avg_distance: float


def centroid(c: Cluster) -> np.ndarray:
    if len(c) == 0:
        raise EmptyCluster("cluster has no points")
    return c.points.mean(axis=0)


def descriptor_array(points) -> np.ndarray:
    """Vectorised descriptor for a stack of clusters.

    ``points`` has shape ``(..., N, 3)``; the result has shape ``(..., 2)``
    holding ``(inertia, avg_distance)`` per cluster.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[-2] < MIN_POINTS:
        raise TooFewPoints(f"descriptor needs at least {MIN_POINTS} points, got {pts.shape[-2]}")
    rel = pts - pts.mean(axis=-2, keepdims=True)
    sq = np.einsum("...ij,...ij->...i", rel, rel)
    inertia = sq.sum(axis=-1)
    avg = np.sqrt(sq).mean(axis=-1)
    return np.stack([inertia, avg], axis=-1)


def compute_descriptor(c: Cluster) -> Descriptor:
    if len(c) < MIN_POINTS:
        raise TooFewPoints(f"descriptor needs at least {MIN_POINTS} points, got {len(c)}")
    inertia, avg = descriptor_array(c.points)
    return Descriptor(float(inertia), float(avg))
