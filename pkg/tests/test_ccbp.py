import math

import numpy as np
import pytest

from rlab.construction.ccbp import (
    build_ccbp,
    build_net,
    ccbp_from_document,
    ccbp_to_document,
    check_plane_bound,
    net_conditions,
    plane_radius_for,
    poincare_plane,
    refine_point,
    verify_ccbp,
)
from rlab.geometry.core import AffinePlane
from rlab.geometry.measure import average_normal
from rlab.models.config import ScaleLadder
from rlab.models.reports import CCBPDocument
from rlab.utils.errors import DegenerateNormal, EpsilonExceeded, ResolutionExceeded


@pytest.fixture(scope="module")
def plane_ccbp(plane):
    return build_ccbp(plane, np.zeros(3), 0.4, ScaleLadder(r0=0.2, ratio=2.0, depth=2))


def test_plane_ccbp_is_exact(plane_ccbp):
    assert plane_ccbp.achieved_eps <= 1e-8
    assert plane_ccbp.depth == 2
    for normals in plane_ccbp.normals:
        np.testing.assert_allclose(np.abs(normals[:, 2]), 1.0, atol=1e-12)


def test_plane_ccbp_verifies(plane, plane_ccbp):
    result = verify_ccbp(plane_ccbp, plane)
    assert result.passed, result.failures
    names = {c.name for c in result.conditions}
    assert {"separation", "refinement", "nesting", "coverage", "same_scale", "adjacent_scale"} <= names


def test_net_invariants(plane, ladder):
    net = build_net(plane, np.zeros(3), 0.4, ladder)
    assert all(c.passed for c in net_conditions(net, plane))
    # the point nearest the centre heads every level
    assert all(level.net[0] == net.origin_index for level in net.levels)
    assert [level.k for level in net.levels] == [0, 1, 2]


def test_tilted_plane_breaks_compatibility(plane, plane_ccbp):
    theta = 0.1
    tilted = plane_ccbp.with_plane(1, 0, normal=[0.0, math.sin(theta), math.cos(theta)])
    result = verify_ccbp(tilted, plane)
    assert not result.passed
    assert result.achieved_eps > 0.05
    assert result.worst["level"] in (0, 1)


def test_shifted_base_plane_moves_sigma0(plane_ccbp):
    moved = plane_ccbp.with_plane(0, plane_ccbp.base_index, shift=0.01)
    assert moved.sigma0.base[2] == pytest.approx(0.01 * plane_ccbp.normals[0][0][2])


def test_rough_surface_exceeds_target(rough):
    with pytest.raises(EpsilonExceeded) as info:
        build_ccbp(rough, np.zeros(3), 0.4, ScaleLadder(r0=0.2, ratio=2.0, depth=2))
    assert info.value.exit_code == 4
    assert info.value.achieved_eps > 0.05
    assert info.value.to_dict()["worst_pair"]["condition"]


def test_depth_below_resolution(plane):
    with pytest.raises(ResolutionExceeded):
        build_ccbp(plane, np.zeros(3), 0.4, ScaleLadder(r0=0.2, ratio=2.0, depth=6))


def test_document_round_trip(plane, plane_ccbp):
    doc = CCBPDocument.model_validate_json(ccbp_to_document(plane_ccbp).model_dump_json())
    restored = ccbp_from_document(doc)
    assert restored.depth == plane_ccbp.depth
    assert restored.plane_radius == plane_ccbp.plane_radius
    assert verify_ccbp(restored, plane).passed
    np.testing.assert_array_equal(restored.level(2).refined, plane_ccbp.level(2).refined)


def test_plane_radius_clamp():
    assert plane_radius_for(0.001, 1.0) == (pytest.approx(0.12), False)
    assert plane_radius_for(0.1, 0.4) == (0.2, True)


def test_plane_bound_on_plane(plane, plane_ccbp):
    report = check_plane_bound(plane, plane_ccbp, C_P=1.0)
    assert report.fraction_passed == 1.0
    assert report.unflagged_failures == 0
    assert len(report.records) == sum(level.net.size for level in plane_ccbp.net.levels)


def test_clamped_plane_radius_keeps_normal_ball_in_region(plane):
    rho, clamped = plane_radius_for(0.2, 0.4)
    assert clamped
    # ν is averaged over B_{2ρ}, which is exactly the region ball once clamped
    assert 2 * rho == pytest.approx(0.4)
    nu = average_normal(plane, np.zeros(3), 2 * rho)
    np.testing.assert_allclose(poincare_plane(plane, np.zeros(3), rho)[0].normal, nu / np.linalg.norm(nu))


def test_refine_point_keeps_a_sample_on_the_plane(wavy):
    i = int(np.argmin(np.linalg.norm(wavy.points, axis=1)))
    x_tilde = wavy.points[i]
    x, P = refine_point(wavy, x_tilde, 0.06, AffinePlane(x_tilde, [0.0, 0.0, 1.0]))
    np.testing.assert_array_equal(x, x_tilde)
    np.testing.assert_array_equal(P.base, x_tilde)


def test_refine_point_matches_scan(wavy):
    x_tilde = np.array([0.013, -0.021, 0.0])
    r_k = 0.06
    P_prime = AffinePlane.through([0.0, 0.0, 0.001], [0.05, 0.0, 1.0])
    x, P = refine_point(wavy, x_tilde, r_k, P_prime)
    inside = np.flatnonzero(np.linalg.norm(wavy.points - x_tilde, axis=1) < r_k / 6)
    dist = np.abs((wavy.points[inside] - P_prime.base) @ P_prime.normal)
    np.testing.assert_array_equal(x, wavy.points[inside[np.argmin(dist)]])
    np.testing.assert_array_equal(P.normal, P_prime.normal)
    assert abs((x - P.base) @ P.normal) == 0.0


def test_poincare_plane_between_two_sheets(two_sheet):
    with pytest.raises(DegenerateNormal) as info:
        poincare_plane(two_sheet, np.zeros(3), 0.2)
    assert info.value.to_dict()["norm"] <= 0.1
