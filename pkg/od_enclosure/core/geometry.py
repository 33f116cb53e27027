"""Polygons, direction frames, half-plane slices and support functions.

All values are immutable after construction and may be shared between workers.
"""
from __future__ import annotations

import dataclasses as dc
from functools import cached_property
import math
from typing import Any, Sequence

import numpy as np
from scipy.spatial.distance import pdist
import shapely
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient

Point = Sequence[float]

FRAME_TOLERANCE = 1e-12


class GeometryError(ValueError):
    """An invalid or empty geometric input."""


class InsufficientDataError(GeometryError):
    """Too few support samples to bound a hull."""


@dc.dataclass(frozen=True)
class Direction:
    """An orthonormal frame ``{eta, omega}`` with ``eta = (-omega_2, omega_1)``."""

    omega: tuple[float, float]
    eta: tuple[float, float]

    def __post_init__(self):
        omega, eta = np.asarray(self.omega), np.asarray(self.eta)
        if (
            abs(np.linalg.norm(omega) - 1) > FRAME_TOLERANCE
            or abs(np.linalg.norm(eta) - 1) > FRAME_TOLERANCE
            or abs(float(omega @ eta)) > FRAME_TOLERANCE
        ):
            raise GeometryError(f"not an orthonormal frame: omega={self.omega}, eta={self.eta}")

    @property
    def angle(self) -> float:
        return math.atan2(self.omega[1], self.omega[0])

    def coordinates(self, points: np.ndarray, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Return the tangential coordinate ``y = x.eta`` and the depth ``s = x.omega - t``."""
        points = np.asarray(points, dtype=float)
        return points @ np.asarray(self.eta), points @ np.asarray(self.omega) - t

    def point(self, y: np.ndarray, s: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Map frame coordinates back to points, the inverse of ``coordinates``."""
        y, s = np.asarray(y, dtype=float), np.asarray(s, dtype=float)
        return np.multiply.outer(y, self.eta) + np.multiply.outer(s + t, self.omega)


def orthonormal_frame(omega: Point) -> Direction:
    """Return the frame of a direction, with ``eta`` the +90 degree rotation of ``omega``.

    :raises GeometryError: for a zero or non-finite direction
    """
    vector = np.asarray(omega, dtype=float)
    norm = float(np.linalg.norm(vector)) if vector.shape == (2,) else 0.0
    if not math.isfinite(norm) or norm < 1e-14:
        raise GeometryError(f"invalid direction: {omega!r}")
    w1, w2 = vector / norm
    return Direction(omega=(float(w1), float(w2)), eta=(float(-w2), float(w1)))


def equispaced_directions(count: int) -> list[Direction]:
    """Directions at angles ``pi/2 + 2 pi j / count``, so index 0 is ``(0, 1)``."""
    angles = math.pi / 2 + 2 * math.pi * np.arange(count) / count
    return [orthonormal_frame((math.cos(a), math.sin(a))) for a in angles]


@dc.dataclass(frozen=True)
class PolygonalDomain:
    """A simple, positively oriented polygon, or the empty polygon (no vertices)."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(vertices) > 1 and vertices[0] == vertices[-1]:
            vertices = vertices[:-1]
        if vertices:
            if len(vertices) < 3:
                raise GeometryError(f"a polygon needs at least 3 vertices, got {len(vertices)}")
            polygon = Polygon(vertices)
            if not polygon.is_valid or polygon.area <= 0:
                raise GeometryError(f"polygon is not simple: {shapely.is_valid_reason(polygon)}")
            if not polygon.exterior.is_ccw:
                vertices = tuple(reversed(vertices))
        object.__setattr__(self, "vertices", vertices)

    @classmethod
    def empty(cls) -> PolygonalDomain:
        return cls(())

    @classmethod
    def from_shapely(cls, geometry: BaseGeometry) -> PolygonalDomain:
        """Convert a shapely polygon, dropping collinear vertices."""
        if geometry.is_empty or geometry.area <= 0:
            return cls.empty()
        if isinstance(geometry, MultiPolygon):
            geometry = max(geometry.geoms, key=lambda part: part.area)
        if not isinstance(geometry, Polygon):
            raise GeometryError(f"expected a polygon, got {geometry.geom_type}")
        geometry = orient(geometry.simplify(0), sign=1.0)
        return cls(tuple(geometry.exterior.coords)[:-1])

    @classmethod
    def from_json(cls, data: Any) -> PolygonalDomain:
        """Read a JSON array of ``[x, y]`` vertex pairs."""
        try:
            return cls(tuple((float(x), float(y)) for x, y in data))
        except (TypeError, ValueError) as exc:
            raise GeometryError(f"invalid polygon data: {exc}") from exc

    def to_json(self) -> list[list[float]]:
        return [[x, y] for x, y in self.vertices]

    @property
    def is_empty(self) -> bool:
        return not self.vertices

    def _require(self) -> None:
        if self.is_empty:
            raise GeometryError("operation on an empty polygon")

    @cached_property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    @property
    def boundary_edges(self) -> list[tuple[int, int]]:
        count = len(self.vertices)
        return [(i, (i + 1) % count) for i in range(count)]

    @property
    def area(self) -> float:
        return 0.0 if self.is_empty else float(self.polygon.area)

    @property
    def diameter(self) -> float:
        self._require()
        return float(pdist(self.array).max())

    @property
    def centroid(self) -> tuple[float, float]:
        self._require()
        center = self.polygon.centroid
        return (center.x, center.y)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorised point membership of the closed polygon."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if self.is_empty:
            return np.zeros(len(points), dtype=bool)
        return shapely.intersects_xy(self.polygon, points[:, 0], points[:, 1])

    def convex_hull(self) -> PolygonalDomain:
        self._require()
        return PolygonalDomain.from_shapely(self.polygon.convex_hull)

    def translated(self, offset: Point) -> PolygonalDomain:
        dx, dy = offset
        return PolygonalDomain(tuple((x + dx, y + dy) for x, y in self.vertices))

    def circumcircle(self) -> tuple[tuple[float, float], float]:
        """Return a (center, radius) enclosing circle, centred on the bounding box."""
        self._require()
        xmin, ymin, xmax, ymax = self.polygon.bounds
        center = np.array([(xmin + xmax) / 2, (ymin + ymax) / 2])
        radius = float(np.linalg.norm(self.array - center, axis=1).max())
        return (float(center[0]), float(center[1])), radius


def regular_polygon(
    center: Point, radius: float, count: int, phase: float = 0.0
) -> PolygonalDomain:
    """A regular polygon inscribed in a circle; vertex ``j`` at angle ``phase + 2 pi j / count``."""
    if radius <= 0 or count < 3:
        raise GeometryError(f"invalid regular polygon: radius={radius}, count={count}")
    angles = phase + 2 * np.pi * np.arange(count) / count
    cx, cy = center
    return PolygonalDomain(
        tuple((cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles)
    )


def polygon_from_json(data: Any) -> PolygonalDomain:
    """Read a polygon from a JSON vertex list; ``None`` and ``[]`` give the empty polygon."""
    if not data:
        return PolygonalDomain.empty()
    return PolygonalDomain.from_json(data)


def polygon_to_json(polygon: PolygonalDomain) -> list[list[float]]:
    return polygon.to_json()


def rectangle(lower: Point, upper: Point) -> PolygonalDomain:
    (x0, y0), (x1, y1) = lower, upper
    return PolygonalDomain(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def support_function_true(shape: PolygonalDomain, omega: Direction) -> float:
    """Return ``min x.omega`` over the polygon, exact at its vertices.

    :raises GeometryError: for an empty polygon
    """
    if shape.is_empty:
        raise GeometryError("support function of an empty polygon")
    return float((shape.array @ np.asarray(omega.omega)).min())


def half_plane(
    omega: Direction, level: float, radius: float, upper: float | None = None
) -> Polygon:
    """The band ``level <= x.omega <= upper``, clipped to a box covering the disk of ``radius``.

    Without ``upper`` this is the half-plane ``x.omega >= level`` within that disk.
    """
    top = max(level, -2 * radius) + 4 * radius if upper is None else upper
    corners = [(-2 * radius, level), (2 * radius, level), (2 * radius, top), (-2 * radius, top)]
    return Polygon([tuple(omega.point(y, s)) for y, s in corners])


def _reach(*shapes: PolygonalDomain) -> float:
    return max(float(np.abs(shape.array).max()) for shape in shapes if not shape.is_empty) + 1.0


@dc.dataclass(frozen=True)
class HalfSpaceSlice:
    """The slice ``{x in domain : x.omega > t}``."""

    domain: PolygonalDomain
    omega: Direction
    t: float

    @cached_property
    def region(self) -> BaseGeometry:
        return slice_polygon(self.domain, self.omega, self.t)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        _, s = self.omega.coordinates(points, self.t)
        return (s > 0) & self.domain.contains(points)


def slice_polygon(
    domain: PolygonalDomain, omega: Direction, t: float, depth: float | None = None
) -> BaseGeometry:
    """Clip a domain to ``t < x.omega`` (and ``x.omega < t + depth``); may be empty."""
    domain._require()
    if not math.isfinite(t):
        if t < 0 and depth is None:
            return domain.polygon
        raise GeometryError(f"invalid slice level: {t}")
    radius = _reach(domain)
    upper = None if depth is None else t + depth
    return domain.polygon.intersection(half_plane(omega, t, radius, upper))


def cross_section(domain: PolygonalDomain, omega: Direction, t: float) -> tuple[float, float]:
    """Return the interval of ``y = x.eta`` covered by the chord ``x.omega = t`` of the domain.

    :raises GeometryError: if the line misses the domain
    """
    domain._require()
    radius = _reach(domain)
    ends = omega.point(np.array([-2 * radius, 2 * radius]), np.zeros(2), t)
    line = LineString(ends)
    chord = domain.polygon.intersection(line)
    if chord.is_empty or chord.length <= 0:
        raise GeometryError(f"the line x.omega = {t} misses the domain")
    coords = np.asarray(
        [c for part in getattr(chord, "geoms", [chord]) for c in part.coords], dtype=float
    )
    y, _ = omega.coordinates(coords)
    return float(y.min()), float(y.max())


@dc.dataclass
class SupportEstimate:
    """Estimated support values per direction and the hull they bound."""

    directions: list[Direction]
    h_values: list[float]
    hull: PolygonalDomain = dc.field(default_factory=PolygonalDomain.empty)
    flagged: list[bool] = dc.field(default_factory=list)
    no_inclusion: bool = False
    degraded: bool = False
    """too many directions were flagged"""
    diagnostics: list[dict[str, Any]] = dc.field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.hull.is_empty


def _spans_circle(directions: Sequence[Direction]) -> bool:
    angles = np.sort([direction.angle for direction in directions])
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    return bool(gaps.max() < np.pi - 1e-12)


def hull_from_support(estimates: SupportEstimate) -> PolygonalDomain:
    """Intersect the half-planes ``x.omega >= h(omega)``.

    The result is convex; it is empty (``PolygonalDomain.empty()``) if the half-planes
    do not intersect.

    :raises InsufficientDataError: with fewer than 3 distinct directions,
        or directions that leave the intersection unbounded
    """
    pairs = {
        direction.omega: (direction, h)
        for direction, h in zip(estimates.directions, estimates.h_values)
    }
    if len(pairs) < 3:
        raise InsufficientDataError(f"need at least 3 distinct directions, got {len(pairs)}")
    directions = [direction for direction, _ in pairs.values()]
    if not _spans_circle(directions):
        raise InsufficientDataError("directions do not span the circle")
    radius = 10.0 * (1.0 + max(abs(h) for _, h in pairs.values()))
    region: BaseGeometry = Polygon(
        [(-radius, -radius), (radius, -radius), (radius, radius), (-radius, radius)]
    )
    for direction, h in pairs.values():
        region = region.intersection(half_plane(direction, h, radius))
        if region.is_empty:
            return PolygonalDomain.empty()
    hull = PolygonalDomain.from_shapely(region.simplify(1e-12))
    return hull


def hausdorff_distance(
    a: PolygonalDomain, b: PolygonalDomain, h_mesh: float | None = None
) -> float:
    """Symmetric Hausdorff distance of two boundary polylines.

    Both boundaries are sampled with at most ``h_mesh / 4`` between samples
    (without a mesh size, 1/512 of the smaller diameter).

    :raises GeometryError: if either polygon is empty
    """
    if a.is_empty or b.is_empty:
        raise GeometryError("Hausdorff distance of an empty polygon")
    spacing = min(a.diameter, b.diameter) / 512 if h_mesh is None else h_mesh / 4
    if not spacing > 0:
        raise GeometryError(f"invalid sampling spacing {spacing!r}")
    ring_a = shapely.segmentize(a.polygon.exterior, spacing)
    ring_b = shapely.segmentize(b.polygon.exterior, spacing)
    return float(
        max(shapely.hausdorff_distance(ring_a, ring_b), shapely.hausdorff_distance(ring_b, ring_a))
    )
