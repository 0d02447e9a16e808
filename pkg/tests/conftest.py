import math

import numpy as np
import pytest

from clustermatch.descriptor import Cluster


@pytest.fixture
def triangle():
    """Equilateral triangle with unit side in the z=0 plane."""
    return Cluster([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, math.sqrt(3) / 2, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def brute_descriptor(points):
    """Plain-Python inertia and mean centroid distance."""
    n = len(points)
    c = [sum(p[k] for p in points) / n for k in range(3)]
    dists = [math.dist(p, c) for p in points]
    return sum(d * d for d in dists), sum(dists) / n
