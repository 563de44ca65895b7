import math

import numpy as np
import pytest

from rlab.geometry.core import (
    AffinePlane,
    Ball,
    SpatialIndex,
    check_ambient_dim,
    dist_to_plane,
    orthonormalize,
    plane_local_hausdorff,
    project_to_plane,
    range_query,
    tangent_basis,
    unit,
)
from rlab.utils.errors import DegenerateNormal, EmptyIntersection, PreconditionViolated


def sampled_local_hausdorff(P, Q, x, r, angles=7200):
    """Brute-force sup over the rim of each disk P ∩ B̄_r(x)."""

    def directed(A, B):
        h = float((x - A.base) @ A.normal)
        foot = x - h * A.normal
        rho = math.sqrt(max(r * r - h * h, 0.0))
        e1, e2 = tangent_basis(A.normal)
        phi = np.linspace(0, 2 * np.pi, angles, endpoint=False)
        rim = foot + rho * (np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2))
        return float(np.max(dist_to_plane(rim, B)))

    return max(directed(P, Q), directed(Q, P)) / r


def test_parallel_planes_distance_is_offset_over_radius():
    P = AffinePlane([0, 0, 0], [0, 0, 1])
    Q = AffinePlane([0, 0, 0.03], [0, 0, 1])
    assert plane_local_hausdorff(P, Q, [0, 0, 0], 0.5) == pytest.approx(0.06)


def test_tilted_planes_through_centre():
    theta = 0.2
    P = AffinePlane([0, 0, 0], [0, 0, 1])
    Q = AffinePlane([0, 0, 0], [math.sin(theta), 0, math.cos(theta)])
    assert plane_local_hausdorff(P, Q, [0, 0, 0], 1.0) == pytest.approx(math.sin(theta), abs=1e-12)


def test_local_hausdorff_matches_sampled_sup():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.normal(size=3) * 0.1
        r = rng.uniform(0.5, 1.5)
        P = AffinePlane.through(x + rng.normal(size=3) * 0.05, rng.normal(size=3))
        Q = AffinePlane.through(x + rng.normal(size=3) * 0.05, rng.normal(size=3))
        closed = plane_local_hausdorff(P, Q, x, r)
        assert closed == pytest.approx(sampled_local_hausdorff(P, Q, x, r), abs=1e-6)


def test_local_hausdorff_symmetric():
    rng = np.random.default_rng(12)
    P = AffinePlane.through(rng.normal(size=4) * 0.1, rng.normal(size=4))
    Q = AffinePlane.through(rng.normal(size=4) * 0.1, rng.normal(size=4))
    x = np.zeros(4)
    assert plane_local_hausdorff(P, Q, x, 2.0) == pytest.approx(plane_local_hausdorff(Q, P, x, 2.0))


def test_plane_outside_ball_raises():
    P = AffinePlane([0, 0, 0], [0, 0, 1])
    Q = AffinePlane([0, 0, 2], [0, 0, 1])
    with pytest.raises(EmptyIntersection):
        plane_local_hausdorff(P, Q, [0, 0, 0], 1.0)


def test_tangent_plane_is_accepted():
    P = AffinePlane([0, 0, 0], [0, 0, 1])
    Q = AffinePlane([0, 0, 1], [0, 0, 1])
    assert plane_local_hausdorff(P, Q, [0, 0, 0], 1.0) == pytest.approx(1.0)


def test_plane_rejects_non_unit_normal():
    with pytest.raises(PreconditionViolated):
        AffinePlane([0, 0, 0], [0, 0, 2])
    assert np.allclose(AffinePlane.through([0, 0, 0], [0, 0, 2]).normal, [0, 0, 1])


def test_unit_of_zero_vector():
    with pytest.raises(DegenerateNormal):
        unit([0.0, 0.0, 0.0])


def test_projection_lands_on_plane():
    rng = np.random.default_rng(3)
    P = AffinePlane.through(rng.normal(size=3), rng.normal(size=3))
    y = rng.normal(size=(50, 3))
    assert np.max(dist_to_plane(project_to_plane(y, P), P)) < 1e-12


def test_ball_needs_positive_radius():
    with pytest.raises(PreconditionViolated):
        Ball([0, 0, 0], 0.0)


def test_range_query_matches_linear_scan():
    rng = np.random.default_rng(5)
    points = rng.uniform(-1, 1, size=(2_000, 3))
    index = SpatialIndex(points)
    for center in rng.uniform(-1, 1, size=(25, 3)):
        r = rng.uniform(0.05, 0.6)
        expected = np.flatnonzero(np.linalg.norm(points - center, axis=1) < r)
        np.testing.assert_array_equal(range_query(index, Ball(center, r)), expected)


def test_range_query_is_open_ball():
    index = SpatialIndex(np.array([[0.0, 0.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(index.range_query([0.0, 0.0], 1.0), [0])
    assert index.range_query([0.0, 0.0], 0.0).size == 0


def test_pairs_within_is_closed():
    index = SpatialIndex(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(index.pairs_within(1.0), [[0, 1]])


def test_ambient_dimension_bounds():
    with pytest.raises(PreconditionViolated):
        check_ambient_dim(9)
    assert check_ambient_dim(3) == 3


def test_orthonormalize_rows():
    basis = orthonormalize([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]], 3)
    np.testing.assert_allclose(basis @ basis.T, np.eye(2), atol=1e-12)
