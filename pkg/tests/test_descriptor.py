import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clustermatch.descriptor import Cluster, Descriptor, centroid, compute_descriptor, descriptor_array
from clustermatch.errors import EmptyCluster, TooFewPoints

from .conftest import brute_descriptor, random_rotation

coords = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
clusters = st.integers(2, 8).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coords))


def test_centroid_examples(triangle):
    np.testing.assert_allclose(centroid(Cluster([[0, 0, 0], [2, 0, 0]])), [1, 0, 0])
    np.testing.assert_array_equal(centroid(Cluster([[0.3, -1.0, 2.0]])), [0.3, -1.0, 2.0])
    np.testing.assert_allclose(centroid(triangle), [0.5, math.sqrt(3) / 6, 0.0], atol=1e-15)


def test_empty_cluster_rejected():
    with pytest.raises(EmptyCluster):
        Cluster(np.empty((0, 3)))


def test_triangle_descriptor(triangle):
    d = compute_descriptor(triangle)
    assert isinstance(d, Descriptor)
    assert d.inertia == pytest.approx(1.0, rel=1e-14)
    assert d.avg_distance == pytest.approx(1 / math.sqrt(3), rel=1e-14)


def test_coincident_points():
    assert compute_descriptor(Cluster([[1.0, 2.0, 3.0]] * 4)) == (0.0, 0.0)


def test_single_point_rejected():
    with pytest.raises(TooFewPoints):
        compute_descriptor(Cluster([[1.0, 2.0, 3.0]]))


def test_translation_example(triangle):
    d0 = compute_descriptor(triangle)
    d1 = compute_descriptor(triangle.translated([5.0, -3.0, 0.25]))
    np.testing.assert_allclose(d1, d0, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(clusters)
def test_matches_brute_force(pts):
    inertia, avg = brute_descriptor(pts.tolist())
    got = compute_descriptor(Cluster(pts))
    assert got.inertia == pytest.approx(inertia, rel=1e-9, abs=1e-9)
    assert got.avg_distance == pytest.approx(avg, rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(clusters, st.data())
def test_invariances(pts, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    d = descriptor_array(pts)
    t = rng.uniform(-100, 100, size=3)
    np.testing.assert_allclose(descriptor_array(pts + t), d, atol=1e-9)
    r = random_rotation(rng)
    np.testing.assert_allclose(descriptor_array(pts @ r.T), d, atol=1e-9)
    np.testing.assert_allclose(descriptor_array(rng.permutation(pts)), d, atol=1e-9)
    s = rng.uniform(0.1, 10)
    np.testing.assert_allclose(descriptor_array(s * pts), [s * s * d[0], s * d[1]], rtol=1e-9, atol=1e-12)
    n = pts.shape[0]
    assert d[0] >= n * d[1] ** 2 - 1e-9 * max(1.0, d[0])
    assert (d[0] == 0) == (d[1] == 0)


def test_batch_shape(rng):
    pts = rng.random((4, 5, 3, 3))
    out = descriptor_array(pts)
    assert out.shape == (4, 5, 2)
    np.testing.assert_allclose(out[2, 3], descriptor_array(pts[2, 3]))
