import math

import numpy as np
import pytest

from od_enclosure.core.geometry import (
    Direction,
    GeometryError,
    HalfSpaceSlice,
    InsufficientDataError,
    PolygonalDomain,
    SupportEstimate,
    cross_section,
    equispaced_directions,
    hausdorff_distance,
    hull_from_support,
    orthonormal_frame,
    polygon_from_json,
    polygon_to_json,
    rectangle,
    regular_polygon,
    slice_polygon,
    support_function_true,
)


@pytest.mark.parametrize("angle", np.linspace(0, 2 * np.pi, 7))
def test_orthonormal_frame(angle):
    frame = orthonormal_frame((3 * math.cos(angle), 3 * math.sin(angle)))
    omega, eta = np.array(frame.omega), np.array(frame.eta)
    assert np.linalg.norm(omega) == pytest.approx(1.0)
    assert omega @ eta == pytest.approx(0.0, abs=1e-15)
    # eta is omega rotated by +90 degrees
    assert omega[0] * eta[1] - omega[1] * eta[0] == pytest.approx(1.0)


@pytest.mark.parametrize("omega", [(0.0, 0.0), (math.nan, 1.0), (1.0, 2.0, 3.0)])
def test_orthonormal_frame_invalid(omega):
    with pytest.raises(GeometryError, match="invalid direction"):
        orthonormal_frame(omega)


def test_direction_rejects_skew_frame():
    with pytest.raises(GeometryError, match="orthonormal"):
        Direction(omega=(1.0, 0.0), eta=(0.6, 0.8))


def test_coordinates_round_trip(rng):
    frame = orthonormal_frame((1.0, 2.0))
    points = rng.uniform(-1, 1, (20, 2))
    y, s = frame.coordinates(points, t=0.3)
    np.testing.assert_allclose(frame.point(y, s, t=0.3), points, atol=1e-14)


def test_equispaced_directions():
    directions = equispaced_directions(8)
    assert len(directions) == 8
    np.testing.assert_allclose(directions[0].omega, (0.0, 1.0), atol=1e-15)
    np.testing.assert_allclose(directions[4].omega, (0.0, -1.0), atol=1e-15)
    angles = np.unwrap([direction.angle for direction in directions])
    np.testing.assert_allclose(np.diff(angles), 2 * np.pi / 8)


def test_polygon_orientation_and_closing_vertex():
    clockwise = PolygonalDomain(((0, 0), (0, 1), (1, 1), (1, 0), (0, 0)))
    assert len(clockwise.vertices) == 4
    assert clockwise.polygon.exterior.is_ccw
    assert clockwise.area == pytest.approx(1.0)


@pytest.mark.parametrize(
    "vertices,message",
    [
        (((0, 0), (1, 0)), "at least 3 vertices"),
        (((0, 0), (1, 1), (1, 0), (0, 1)), "not simple"),
        (((0, 0), (1, 0), (2, 0)), "not simple"),
    ],
)
def test_polygon_invalid(vertices, message):
    with pytest.raises(GeometryError, match=message):
        PolygonalDomain(vertices)


def test_polygon_properties(unit_square):
    assert unit_square.diameter == pytest.approx(math.sqrt(2))
    assert unit_square.centroid == pytest.approx((0.5, 0.5))
    assert unit_square.boundary_edges == [(0, 1), (1, 2), (2, 3), (3, 0)]
    center, radius = unit_square.circumcircle()
    assert center == pytest.approx((0.5, 0.5))
    assert radius == pytest.approx(math.sqrt(2) / 2)
    # boundary points belong to the closed polygon
    inside = unit_square.contains(np.array([[0.5, 0.5], [1.0, 0.5], [1.5, 0.5]]))
    assert inside.tolist() == [True, True, False]


def test_empty_polygon():
    empty = PolygonalDomain.empty()
    assert empty.is_empty
    assert empty.area == 0.0
    assert not empty.contains(np.zeros((3, 2))).any()
    with pytest.raises(GeometryError, match="empty"):
        empty.diameter
    with pytest.raises(GeometryError, match="empty"):
        support_function_true(empty, orthonormal_frame((0, 1)))


def test_polygon_json():
    assert polygon_from_json(None).is_empty
    assert polygon_from_json([]).is_empty
    square = polygon_from_json([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert square.area == pytest.approx(1.0)
    assert len(polygon_to_json(square)) == 4
    assert polygon_from_json(polygon_to_json(square)) == square
    with pytest.raises(GeometryError, match="invalid polygon data"):
        polygon_from_json([[0, 0], [1]])


def test_convex_hull_of_lshape():
    lshape = PolygonalDomain(((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)))
    hull = lshape.convex_hull()
    assert len(hull.vertices) == 5
    assert hull.area == pytest.approx(3.5)


def test_support_function_of_disk(disk):
    up = orthonormal_frame((0.0, 1.0))
    down = orthonormal_frame((0.0, -1.0))
    # vertex 8 of the 32-gon sits at the top of the circle
    assert support_function_true(disk, up) == pytest.approx(0.45)
    assert support_function_true(disk, down) == pytest.approx(-0.75)


def test_support_function_of_square(unit_square):
    diagonal = orthonormal_frame((1.0, 1.0))
    assert support_function_true(unit_square, diagonal) == pytest.approx(0.0)
    anti = orthonormal_frame((-1.0, -1.0))
    assert support_function_true(unit_square, anti) == pytest.approx(-math.sqrt(2))


def test_slice_polygon(unit_square):
    up = orthonormal_frame((0.0, 1.0))
    assert slice_polygon(unit_square, up, 0.25).area == pytest.approx(0.75)
    assert slice_polygon(unit_square, up, 0.25, depth=0.5).area == pytest.approx(0.5)
    assert slice_polygon(unit_square, up, 1.5).is_empty
    assert slice_polygon(unit_square, up, -math.inf).area == pytest.approx(1.0)
    with pytest.raises(GeometryError, match="invalid slice level"):
        slice_polygon(unit_square, up, math.inf)


def test_diagonal_slice(unit_square):
    diagonal = orthonormal_frame((1.0, 1.0))
    region = slice_polygon(unit_square, diagonal, math.sqrt(2) / 2)
    assert region.area == pytest.approx(0.5)


def test_half_space_slice_contains(unit_square):
    piece = HalfSpaceSlice(unit_square, orthonormal_frame((1.0, 0.0)), 0.5)
    inside = piece.contains(np.array([[0.75, 0.5], [0.25, 0.5], [1.25, 0.5], [0.5, 0.5]]))
    # the slice is open on its flat side
    assert inside.tolist() == [True, False, False, False]
    assert piece.region.area == pytest.approx(0.5)


def test_cross_section(unit_square):
    up = orthonormal_frame((0.0, 1.0))
    # eta = (-1, 0), so y = -x runs over [-1, 0]
    assert cross_section(unit_square, up, 0.5) == pytest.approx((-1.0, 0.0))
    with pytest.raises(GeometryError, match="misses"):
        cross_section(unit_square, up, 2.0)


def _estimate(shape, count):
    directions = equispaced_directions(count)
    return SupportEstimate(
        directions=directions,
        h_values=[support_function_true(shape, direction) for direction in directions],
    )


def test_hull_from_exact_support(disk):
    hull = hull_from_support(_estimate(disk, 64))
    assert hull.polygon.covers(disk.polygon.buffer(-1e-9))
    # every edge normal of the 32-gon is among the 64 directions
    assert hausdorff_distance(hull, disk.convex_hull()) < 1e-8


def test_hull_of_square_is_exact():
    square = rectangle((0.2, 0.3), (0.6, 0.5))
    hull = hull_from_support(_estimate(square, 4))
    assert hull.area == pytest.approx(0.08)
    assert hausdorff_distance(hull, square) == pytest.approx(0.0, abs=1e-9)


def test_hull_from_contradicting_support():
    estimate = SupportEstimate(directions=equispaced_directions(3), h_values=[1.0, 1.0, 1.0])
    assert hull_from_support(estimate).is_empty


def test_hull_needs_three_directions():
    directions = equispaced_directions(4)[:2]
    with pytest.raises(InsufficientDataError, match="at least 3"):
        hull_from_support(SupportEstimate(directions=directions, h_values=[0.0, 0.0]))


def test_hull_needs_spanning_directions():
    directions = [orthonormal_frame((math.cos(a), math.sin(a))) for a in (0.0, 0.5, 1.0)]
    with pytest.raises(InsufficientDataError, match="span"):
        hull_from_support(SupportEstimate(directions=directions, h_values=[0.0, 0.0, 0.0]))


def test_hausdorff_distance():
    a = rectangle((0, 0), (1, 1))
    b = rectangle((0, 0), (1, 1.5))
    assert hausdorff_distance(a, b) == pytest.approx(0.5)
    assert hausdorff_distance(b, a) == pytest.approx(0.5)
    assert hausdorff_distance(a, a.translated((0.1, 0.0))) == pytest.approx(0.1)
    with pytest.raises(GeometryError):
        hausdorff_distance(a, PolygonalDomain.empty())


def test_hausdorff_distance_mesh_spacing():
    fine = regular_polygon((0.5, 0.6), 0.15, 64)
    coarse = regular_polygon((0.5, 0.6), 0.15, 8)
    expected = 0.15 * (1 - math.cos(math.pi / 8))
    assert hausdorff_distance(fine, coarse, 1 / 128) == pytest.approx(expected, abs=1e-5)
    assert hausdorff_distance(coarse, fine, 1 / 16) == pytest.approx(expected, abs=1e-4)
    with pytest.raises(GeometryError, match="spacing"):
        hausdorff_distance(fine, coarse, 0.0)


def test_regular_polygon():
    hexagon = regular_polygon((1.0, 2.0), 0.5, 6, phase=0.1)
    assert len(hexagon.vertices) == 6
    assert hexagon.area == pytest.approx(3 * math.sqrt(3) / 2 * 0.25)
    first = (1.0 + 0.5 * math.cos(0.1), 2.0 + 0.5 * math.sin(0.1))
    np.testing.assert_allclose(hexagon.vertices[0], first)
    with pytest.raises(GeometryError, match="invalid regular polygon"):
        regular_polygon((0.0, 0.0), 1.0, 2)
