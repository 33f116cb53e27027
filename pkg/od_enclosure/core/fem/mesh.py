"""Interface-fitted P1 triangulations of polygonal regions."""
from __future__ import annotations

import dataclasses as dc
from functools import cached_property
import json
import logging
import math
from pathlib import Path
from typing import Any, Union

import numpy as np
from scipy.spatial import Delaunay, cKDTree
import shapely
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from od_enclosure.core.geometry import PolygonalDomain

logger = logging.getLogger(__name__)

RegionLike = Union[PolygonalDomain, BaseGeometry]

# symmetric triangle rules in barycentric coordinates, weights sum to one
_QUADRATURE: dict[int, tuple[np.ndarray, np.ndarray]] = {
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    5: (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [0.059715871789770, 0.470142064105115, 0.470142064105115],
                [0.470142064105115, 0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.470142064105115, 0.059715871789770],
                [0.797426985353087, 0.101286507323456, 0.101286507323456],
                [0.101286507323456, 0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.101286507323456, 0.797426985353087],
            ]
        ),
        np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
    ),
}


class MeshError(ValueError):
    """A mesh that is inverted, non-conforming or inconsistent with its region."""


def quadrature_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(barycentric points, weights)`` of a rule exact to the given degree."""
    for available in sorted(_QUADRATURE):
        if available >= degree:
            return _QUADRATURE[available]
    raise ValueError(f"no triangle quadrature of degree {degree}")


@dc.dataclass(eq=False)
class Mesh:
    """A conforming P1 triangulation.

    Triangles are positively oriented; ``inclusion_flags`` attributes every
    element wholly to the inclusion or to the background.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    inclusion_flags: np.ndarray = dc.field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.inclusion_flags is None:
            self.inclusion_flags = np.zeros(len(self.triangles), dtype=bool)
        self.inclusion_flags = np.asarray(self.inclusion_flags, dtype=bool)
        if len(self.inclusion_flags) != len(self.triangles):
            raise MeshError("one inclusion flag per triangle is required")
        if not len(self.triangles):
            raise MeshError("mesh without triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes):
            raise MeshError("triangle refers to a missing node")
        if np.any(self.signed_areas <= 0):
            bad = int(np.sum(self.signed_areas <= 0))
            raise MeshError(f"{bad} inverted or degenerate elements")

    def __getstate__(self) -> dict[str, Any]:
        keep = ("nodes", "triangles", "inclusion_flags")
        return {key: value for key, value in self.__dict__.items() if key in keep}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def gradients(self) -> np.ndarray:
        """Gradients of the three barycentric basis functions, shape ``(m, 3, 2)``."""
        p = self.nodes[self.triangles]
        # rotate the opposite edge of each vertex by +90 degrees
        edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        normals = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
        return normals / (2 * self.signed_areas)[:, None, None]

    @cached_property
    def h_mesh(self) -> float:
        """The largest element diameter."""
        p = self.nodes[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=-1)
        return float(lengths.max())

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges belonging to exactly one triangle, oriented along the triangles."""
        edges = np.concatenate(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        keys = np.sort(edges, axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two triangles")
        return edges[counts[inverse] == 1]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary nodes, ordered by walking the boundary loops."""
        successor = dict(self.boundary_edges.tolist())
        if len(successor) != len(self.boundary_edges):
            raise MeshError("boundary is not a union of simple loops")
        order: list[int] = []
        remaining = dict(successor)
        while remaining:
            start = min(remaining)
            node = start
            while True:
                order.append(node)
                node = remaining.pop(node)
                if node == start:
                    break
                if node not in remaining:
                    raise MeshError("open boundary loop")
        return np.asarray(order, dtype=np.int64)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def quadrature(self, degree: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return quadrature points ``(m, q, 2)``, area weights ``(m, q)`` and barycentrics."""
        barycentric, weights = quadrature_rule(degree)
        points = np.einsum("qk,mkd->mqd", barycentric, self.nodes[self.triangles])
        return points, self.areas[:, None] * weights[None, :], barycentric

    @cached_property
    def _locator(self) -> cKDTree:
        return cKDTree(self.centroids)

    def locate(
        self, points: np.ndarray, tolerance: float = 1e-10
    ) -> tuple[np.ndarray, np.ndarray]:
        """Find the containing element and barycentric coordinates of each point.

        Candidates are the 16 elements with the nearest centroids;
        points outside all of them get element ``-1``.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        count = min(16, self.n_elements)
        _, candidates = self._locator.query(points, k=count)
        candidates = np.asarray(candidates).reshape(len(points), count)
        element = np.full(len(points), -1, dtype=np.int64)
        barycentric = np.zeros((len(points), 3))
        pending = np.arange(len(points))
        for column in range(count):
            if not len(pending):
                break
            tri = candidates[pending, column]
            local = self._barycentric(tri, points[pending])
            hit = np.all(local >= -tolerance, axis=1)
            element[pending[hit]] = tri[hit]
            barycentric[pending[hit]] = local[hit]
            pending = pending[~hit]
        return element, barycentric

    def _barycentric(self, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        first = self.nodes[self.triangles[tri, 0]]
        local = np.einsum("nkd,nd->nk", self.gradients[tri], points - first)
        local[:, 0] += 1.0
        return local

    def interpolate(self, values: np.ndarray, points: np.ndarray, fill_value: complex = 0.0):
        """Evaluate a P1 field at points; points outside the mesh get ``fill_value``."""
        element, barycentric = self.locate(points)
        values = np.asarray(values)
        found = element >= 0
        out = np.full(len(element), fill_value, dtype=np.result_type(values, type(fill_value)))
        corners = values[self.triangles[element[found]]]
        out[found] = np.einsum("nk,nk->n", corners, barycentric[found])
        return out

    def submesh(self, element_mask: np.ndarray) -> tuple[Mesh, np.ndarray]:
        """Restrict to a subset of elements; returns the submesh and its node indices."""
        triangles = self.triangles[element_mask]
        used, local = np.unique(triangles, return_inverse=True)
        return (
            Mesh(self.nodes[used], local.reshape(-1, 3), self.inclusion_flags[element_mask]),
            used,
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_nodes": self.boundary_nodes.tolist(),
            "inclusion_flags": self.inclusion_flags.astype(int).tolist(),
            "h_mesh": self.h_mesh,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> Mesh:
        """Read the flat JSON layout of ``to_json``; the boundary loop is re-derived and checked."""
        try:
            mesh = cls(
                np.asarray(data["nodes"], dtype=float),
                np.asarray(data["triangles"], dtype=np.int64),
                np.asarray(data.get("inclusion_flags", [0] * len(data["triangles"])), dtype=bool),
            )
        except (KeyError, TypeError) as exc:
            raise MeshError(f"invalid mesh data: {exc}") from exc
        if "boundary_nodes" in data and set(data["boundary_nodes"]) != set(
            mesh.boundary_nodes.tolist()
        ):
            raise MeshError("boundary loop does not match the triangles")
        return mesh

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf8")

    @classmethod
    def read(cls, path: str | Path) -> Mesh:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf8")))


def as_geometry(region: RegionLike) -> BaseGeometry:
    if isinstance(region, PolygonalDomain):
        return region.polygon
    return region


def _polygons(geometry: BaseGeometry) -> list[Polygon]:
    if isinstance(geometry, Polygon):
        return [geometry]
    if isinstance(geometry, MultiPolygon):
        return list(geometry.geoms)
    return [part for part in getattr(geometry, "geoms", []) if isinstance(part, Polygon)]


def _sample_ring(coords: np.ndarray, h: float) -> np.ndarray:
    """Points along a closed ring, vertices included, with spacing at most ``h``."""
    samples = []
    for start, end in zip(coords[:-1], coords[1:]):
        pieces = max(1, math.ceil(np.linalg.norm(end - start) / h - 1e-9))
        fractions = np.arange(pieces)[:, None] / pieces
        samples.append(start + fractions * (end - start))
    return np.concatenate(samples)


def _ring_segments(samples: np.ndarray) -> np.ndarray:
    return np.stack([samples, np.roll(samples, -1, axis=0)], axis=1)


def _lattice(bounds: tuple[float, float, float, float], h: float) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    dy = h * math.sqrt(3) / 2
    rows = np.arange(ymin, ymax + dy, dy)
    points = []
    for row, y in enumerate(rows):
        offset = 0.5 * h if row % 2 else 0.0
        xs = np.arange(xmin + offset, xmax + h, h)
        points.append(np.column_stack([xs, np.full(len(xs), y)]))
    return np.concatenate(points)


def generate_mesh(
    region: RegionLike, h: float, inclusion: PolygonalDomain | None = None
) -> Mesh:
    """Triangulate a polygonal region with elements of diameter about ``h``.

    An equilateral lattice fills the interior; the region boundary and the inclusion
    boundary are sampled at spacing ``h`` and lattice points closer than ``0.6 h``
    to them are dropped, so that every boundary segment is a Delaunay edge.

    :raises MeshError: if the triangulation does not conform to either boundary
    """
    geometry = as_geometry(region)
    polygons = _polygons(geometry)
    if not polygons or geometry.area <= 0:
        raise MeshError("cannot mesh an empty region")
    if not h > 0:
        raise MeshError(f"invalid mesh size {h}")

    rings = [
        np.asarray(ring.coords) for poly in polygons for ring in [poly.exterior, *poly.interiors]
    ]
    inner = None
    if inclusion is not None and not inclusion.is_empty:
        clipped = inclusion.polygon.intersection(geometry)
        if not clipped.equals(inclusion.polygon):
            raise MeshError("the inclusion must lie inside the meshed region")
        inner = np.asarray(inclusion.polygon.exterior.coords)

    ring_samples = [_sample_ring(ring, h) for ring in rings]
    inner_samples = _sample_ring(inner, h) if inner is not None else np.empty((0, 2))

    lattice = _lattice(geometry.bounds, h)
    lines: BaseGeometry = geometry.boundary
    if inclusion is not None and not inclusion.is_empty:
        lines = lines.union(inclusion.polygon.exterior)
    keep = shapely.contains_xy(geometry, lattice[:, 0], lattice[:, 1])
    lattice = lattice[keep]
    distance = shapely.distance(lines, shapely.points(lattice))
    lattice = lattice[distance > 0.6 * h]

    points = np.concatenate([*ring_samples, inner_samples, lattice])
    points = np.unique(np.round(points, 14), axis=0)
    triangulation = Delaunay(points)
    triangles = triangulation.simplices
    centroids = points[triangles].mean(axis=1)
    inside = shapely.contains_xy(geometry, centroids[:, 0], centroids[:, 1])
    triangles = triangles[inside]

    # orient positively, drop slivers of collinear boundary samples
    p = points[triangles]
    area = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )
    triangles = np.where((area < 0)[:, None], triangles[:, [0, 2, 1]], triangles)
    triangles = triangles[np.abs(area) > 1e-10 * h * h]

    used, local = np.unique(triangles, return_inverse=True)
    nodes, triangles = points[used], local.reshape(-1, 3)
    flags = None
    if inclusion is not None and not inclusion.is_empty:
        centroids = nodes[triangles].mean(axis=1)
        flags = shapely.contains_xy(inclusion.polygon, centroids[:, 0], centroids[:, 1])
    mesh = Mesh(nodes, triangles, flags)

    _check_conforming(mesh, [_ring_segments(samples) for samples in ring_samples], "region")
    if inner is not None:
        _check_conforming(mesh, [_ring_segments(inner_samples)], "inclusion")
        _check_interface(mesh, inclusion)  # type: ignore[arg-type]
    logger.debug(
        "meshed region: %d nodes, %d elements, h=%.4g", mesh.n_nodes, mesh.n_elements, mesh.h_mesh
    )
    return mesh


def _edge_keys(nodes: np.ndarray, segments: np.ndarray) -> set[tuple[int, int]]:
    tree = cKDTree(nodes)
    distance, index = tree.query(segments.reshape(-1, 2))
    if distance.max() > 1e-9:
        raise MeshError("a boundary sample is missing from the mesh")
    pairs = np.sort(index.reshape(-1, 2), axis=1)
    return {tuple(pair) for pair in pairs.tolist()}


def _check_conforming(mesh: Mesh, rings: list[np.ndarray], name: str) -> None:
    edges = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    mesh_edges = {tuple(edge) for edge in np.sort(edges, axis=1).tolist()}
    for segments in rings:
        missing = _edge_keys(mesh.nodes, segments) - mesh_edges
        if missing:
            raise MeshError(f"mesh does not conform to the {name} boundary ({len(missing)} edges)")


def _check_interface(mesh: Mesh, inclusion: PolygonalDomain) -> None:
    """Every element lies wholly inside or outside the inclusion."""
    vertices = mesh.nodes[mesh.triangles].reshape(-1, 2)
    gap = shapely.distance(inclusion.polygon.exterior, shapely.points(vertices)).reshape(-1, 3)
    inside = shapely.contains_xy(inclusion.polygon, vertices[:, 0], vertices[:, 1]).reshape(-1, 3)
    on_interface = gap < 1e-9 * max(1.0, mesh.h_mesh)
    mixed = ((inside & ~on_interface) & ~mesh.inclusion_flags[:, None]).any(axis=1) | (
        (~inside & ~on_interface) & mesh.inclusion_flags[:, None]
    ).any(axis=1)
    if mixed.any():
        raise MeshError(f"{int(mixed.sum())} elements straddle the inclusion boundary")
