"""Coefficient fields of the background and the inclusion, and hypothesis checks.

Tensor fields are closed-form descriptors (constant, affine or rotated-diagonal),
evaluated vectorised at arrays of points of shape ``(n, 2)`` into ``(n, 2, 2)`` arrays.
"""
from __future__ import annotations

import dataclasses as dc
import math
from typing import Any, Mapping, Optional, Union

import numpy as np
import shapely
from typing_extensions import Protocol, TypedDict

from od_enclosure.core.geometry import GeometryError, PolygonalDomain

SYMMETRY_TOLERANCE = 1e-12
BOUND_NAMES = ("lambda0", "Lambda0", "lambda_tilde", "Lambda_tilde", "lambda_hat", "Lambda_hat")


class MediumError(ValueError):
    """An invalid medium description."""


class HypothesisError(MediumError):
    """A medium violates ellipticity, the jump condition or its declared bounds."""

    def __init__(self, message: str, report: HypothesisReport | None = None):
        super().__init__(message)
        self.report = report


class TensorField(Protocol):
    """A symmetric 2x2 tensor field."""

    @property
    def is_constant(self) -> bool: ...

    def evaluate(self, points: np.ndarray) -> np.ndarray: ...

    def divergence(self, points: np.ndarray) -> np.ndarray: ...

    def to_json(self) -> dict[str, Any]: ...


def _symmetric(matrix: Any, name: str) -> np.ndarray:
    array = np.asarray(matrix, dtype=float)
    if array.shape == ():
        array = float(array) * np.eye(2)
    if array.shape != (2, 2) or not np.all(np.isfinite(array)):
        raise MediumError(f"{name} must be a finite 2x2 matrix, got {matrix!r}")
    if abs(array[0, 1] - array[1, 0]) > SYMMETRY_TOLERANCE * max(1.0, np.abs(array).max()):
        raise MediumError(f"{name} is not symmetric: {array.tolist()}")
    return (array + array.T) / 2


def _points(points: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


@dc.dataclass(frozen=True)
class ConstantTensor:
    """A constant tensor."""

    matrix: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        array = _symmetric(self.matrix, "constant tensor")
        object.__setattr__(self, "matrix", tuple(map(tuple, array.tolist())))

    @property
    def is_constant(self) -> bool:
        return True

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.array, (len(_points(points)), 2, 2)).copy()

    def divergence(self, points: np.ndarray) -> np.ndarray:
        return np.zeros((len(_points(points)), 2))

    def to_json(self) -> dict[str, Any]:
        return {"constant": [list(row) for row in self.matrix]}


@dc.dataclass(frozen=True)
class AffineTensor:
    """``A(x) = value + x_1 * gradient[0] + x_2 * gradient[1]``."""

    value: tuple[tuple[float, float], tuple[float, float]]
    gradient: tuple[Any, Any]

    def __post_init__(self):
        value = _symmetric(self.value, "affine tensor value")
        if len(self.gradient) != 2:
            raise MediumError("affine tensor gradient needs two matrices")
        gradient = [_symmetric(g, "affine tensor gradient") for g in self.gradient]
        object.__setattr__(self, "value", tuple(map(tuple, value.tolist())))
        object.__setattr__(self, "gradient", tuple(tuple(map(tuple, g.tolist())) for g in gradient))

    @property
    def is_constant(self) -> bool:
        return not np.any(np.asarray(self.gradient))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = _points(points)
        gradient = np.asarray(self.gradient)
        return np.asarray(self.value) + np.einsum("ni,ijk->njk", points, gradient)

    def divergence(self, points: np.ndarray) -> np.ndarray:
        # d_j = sum_i d(a_ij)/dx_i
        gradient = np.asarray(self.gradient)
        column = np.array(
            [gradient[0, 0, 0] + gradient[1, 1, 0], gradient[0, 0, 1] + gradient[1, 1, 1]]
        )
        return np.broadcast_to(column, (len(_points(points)), 2)).copy()

    def to_json(self) -> dict[str, Any]:
        return {
            "affine": {
                "value": [list(row) for row in self.value],
                "gradient": [[list(row) for row in g] for g in self.gradient],
            }
        }


@dc.dataclass(frozen=True)
class RotatedTensor:
    """``R(theta) diag(eigenvalues) R(theta)^T`` with ``theta(x) = angle + angle_gradient.x``."""

    eigenvalues: tuple[float, float]
    angle: float = 0.0
    angle_gradient: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        eigenvalues = tuple(float(v) for v in self.eigenvalues)
        if len(eigenvalues) != 2 or not all(math.isfinite(v) for v in eigenvalues):
            raise MediumError(f"rotated tensor needs two finite eigenvalues: {self.eigenvalues!r}")
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "angle_gradient", tuple(float(g) for g in self.angle_gradient))

    @property
    def is_constant(self) -> bool:
        return self.angle_gradient == (0.0, 0.0) or self.eigenvalues[0] == self.eigenvalues[1]

    def _angles(self, points: np.ndarray) -> np.ndarray:
        return self.angle + _points(points) @ np.asarray(self.angle_gradient)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        theta = self._angles(points)
        c, s = np.cos(theta), np.sin(theta)
        mu1, mu2 = self.eigenvalues
        out = np.empty((len(theta), 2, 2))
        out[:, 0, 0] = mu1 * c**2 + mu2 * s**2
        out[:, 1, 1] = mu1 * s**2 + mu2 * c**2
        out[:, 0, 1] = out[:, 1, 0] = (mu1 - mu2) * c * s
        return out

    def divergence(self, points: np.ndarray) -> np.ndarray:
        theta = self._angles(points)
        mu1, mu2 = self.eigenvalues
        c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
        # dA/dtheta = (mu1 - mu2) [[-sin 2t, cos 2t], [cos 2t, sin 2t]]
        g1, g2 = self.angle_gradient
        scale = mu1 - mu2
        return np.stack([scale * (-s2 * g1 + c2 * g2), scale * (c2 * g1 + s2 * g2)], axis=-1)

    def to_json(self) -> dict[str, Any]:
        return {
            "rotated": {
                "eigenvalues": list(self.eigenvalues),
                "angle": self.angle,
                "angle_gradient": list(self.angle_gradient),
            }
        }


AnyTensor = Union[ConstantTensor, AffineTensor, RotatedTensor]


def tensor_from_json(data: Any) -> AnyTensor:
    """Read a tensor descriptor.

    Accepted forms are a number (multiple of the identity), a 2x2 nested list,
    ``{"constant": ...}``, ``{"affine": {"value", "gradient"}}`` and
    ``{"rotated": {"eigenvalues", "angle", "angle_gradient"}}``.

    :raises MediumError: for an unknown or malformed descriptor
    """
    if isinstance(data, (int, float, list, tuple)):
        return ConstantTensor(_symmetric(data, "tensor").tolist())
    if not isinstance(data, Mapping) or len(data) != 1:
        raise MediumError(f"tensor descriptor must have exactly one key: {data!r}")
    (kind, body), = data.items()
    try:
        if kind == "constant":
            return ConstantTensor(_symmetric(body, "constant tensor").tolist())
        if kind == "affine":
            return AffineTensor(body["value"], tuple(body["gradient"]))
        if kind == "rotated":
            return RotatedTensor(
                tuple(body["eigenvalues"]),
                body.get("angle", 0.0),
                tuple(body.get("angle_gradient", (0.0, 0.0))),
            )
    except (KeyError, TypeError) as exc:
        raise MediumError(f"malformed {kind!r} tensor descriptor: {exc}") from exc
    raise MediumError(f"unknown tensor kind {kind!r}")


@dc.dataclass(frozen=True)
class MediumSpec:
    """Background tensor on the domain, inclusion tensor on ``inclusion``, and wavenumber.

    ``bounds`` holds the declared ellipticity and jump bounds, keyed by ``BOUND_NAMES``;
    missing bounds are only checked for positivity.
    """

    domain: PolygonalDomain
    a0: AnyTensor
    a_tilde: Optional[AnyTensor]
    inclusion: PolygonalDomain
    k: float = 0.0
    bounds: Mapping[str, float] = dc.field(default_factory=dict)

    def __post_init__(self):
        if self.domain.is_empty:
            raise MediumError("the domain is empty")
        if not math.isfinite(self.k) or self.k < 0:
            raise MediumError(f"the wavenumber must be finite and non-negative: {self.k}")
        unknown = set(self.bounds) - set(BOUND_NAMES)
        if unknown:
            raise MediumError(f"unknown bound name(s): {sorted(unknown)}")
        object.__setattr__(self, "bounds", dict(self.bounds))
        if not self.inclusion.is_empty:
            if self.a_tilde is None:
                raise MediumError("an inclusion needs an inclusion tensor")
            if not self.domain.polygon.contains(self.inclusion.polygon) or (
                self.domain.polygon.exterior.distance(self.inclusion.polygon) <= 0
            ):
                raise MediumError("the inclusion closure must lie inside the domain")

    def __hash__(self) -> int:
        return hash((self.domain, self.a0, self.a_tilde, self.inclusion, self.k))

    @property
    def is_null(self) -> bool:
        """No inclusion, or an inclusion tensor equal to the background."""
        return self.inclusion.is_empty or self.a_tilde is None or self.a_tilde == self.a0

    @property
    def constant_background(self) -> bool:
        return self.a0.is_constant

    def without_inclusion(self) -> MediumSpec:
        return dc.replace(self, a_tilde=None, inclusion=PolygonalDomain.empty())

    def in_inclusion(self, points: np.ndarray) -> np.ndarray:
        """Points strictly inside the inclusion."""
        points = _points(points)
        if self.inclusion.is_empty:
            return np.zeros(len(points), dtype=bool)
        return shapely.contains_xy(self.inclusion.polygon, points[:, 0], points[:, 1])


def effective_tensor(
    spec: MediumSpec, x: np.ndarray, in_inclusion: np.ndarray | None = None
) -> np.ndarray:
    """Return ``A~(x)`` inside the inclusion and ``A0(x)`` elsewhere.

    :param x: a point or an ``(n, 2)`` array of points in the domain
    :param in_inclusion: membership flags overriding the geometric test,
        used by meshes to attribute whole elements
    :raises GeometryError: if a point lies outside the domain
    """
    single = np.ndim(x) == 1
    points = _points(x)
    if not np.all(spec.domain.contains(points)):
        raise GeometryError("point(s) outside the domain")
    inside = spec.in_inclusion(points) if in_inclusion is None else np.asarray(in_inclusion, bool)
    tensors = spec.a0.evaluate(points)
    if spec.a_tilde is not None and inside.any():
        tensors[inside] = spec.a_tilde.evaluate(points[inside])
    return tensors[0] if single else tensors


class HypothesisReport(TypedDict):
    """Empirical bounds of a medium and their comparison with the declared bounds."""

    empirical: dict[str, float]
    """Tightest bounds found on the samples, keyed by ``BOUND_NAMES``."""
    declared: dict[str, float]
    symmetric: bool
    samples: int
    inclusion_samples: int
    passed: bool
    failures: list[str]


def _eigen_bounds(tensors: np.ndarray, directions: np.ndarray) -> tuple[float, float]:
    """Min/max over eigenvalues, cross-checked by Rayleigh quotients of unit directions."""
    eigenvalues = np.linalg.eigvalsh(tensors)
    rayleigh = np.einsum("ki,nij,kj->nk", directions, tensors, directions)
    low, high = float(eigenvalues.min()), float(eigenvalues.max())
    if rayleigh.min() < low - 1e-10 or rayleigh.max() > high + 1e-10:  # pragma: no cover
        raise MediumError("Rayleigh quotients exceed the eigenvalue range")
    return low, high


def verify_hypotheses(
    spec: MediumSpec,
    sample_points: np.ndarray,
    *,
    seed: int = 0,
    n_directions: int = 64,
) -> HypothesisReport:
    """Measure ellipticity and jump bounds on sample points, and compare with the declared ones.

    Samples inside the inclusion contribute to the inclusion and jump bounds,
    all samples contribute to the background bounds.
    Failures are reported, never raised.
    """
    points = _points(sample_points)
    if not len(points):
        raise MediumError("no sample points")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0, 2 * np.pi, n_directions)
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    background = spec.a0.evaluate(points)
    empirical: dict[str, float] = {}
    empirical["lambda0"], empirical["Lambda0"] = _eigen_bounds(background, directions)
    symmetric = bool(np.allclose(background, background.transpose(0, 2, 1), atol=1e-14))

    inside = spec.in_inclusion(points)
    if spec.a_tilde is not None and inside.any():
        tilde = spec.a_tilde.evaluate(points[inside])
        jump = tilde - background[inside]
        symmetric = symmetric and bool(np.allclose(tilde, tilde.transpose(0, 2, 1), atol=1e-14))
        empirical["lambda_tilde"], empirical["Lambda_tilde"] = _eigen_bounds(tilde, directions)
        empirical["lambda_hat"], empirical["Lambda_hat"] = _eigen_bounds(jump, directions)

    failures: list[str] = []
    if not symmetric:
        failures.append("tensor field is not symmetric")
    for name in ("lambda0", "lambda_tilde", "lambda_hat"):
        if name == "lambda_hat" and spec.is_null:
            # null media have no jump
            continue
        if name in empirical and empirical[name] <= 0:
            failures.append(f"{name} = {empirical[name]:.6g} is not positive")
    for name, declared in spec.bounds.items():
        if name not in empirical:
            continue
        lower = name[0] == "l"
        value = empirical[name]
        if (lower and value < declared - 1e-12) or (not lower and value > declared + 1e-12):
            failures.append(f"{name}: empirical {value:.6g} violates declared {declared:.6g}")
    if not spec.inclusion.is_empty and not inside.any():
        failures.append("no sample point lies inside the inclusion")

    return HypothesisReport(
        empirical=empirical,
        declared=dict(spec.bounds),
        symmetric=symmetric,
        samples=len(points),
        inclusion_samples=int(inside.sum()),
        passed=not failures,
        failures=failures,
    )


def jump_constant(background: np.ndarray, tilde: np.ndarray) -> float:
    """Smallest eigenvalue of ``(A~ - A0) A~^-1 A0`` over stacked tensor samples.

    This symmetric matrix equals ``A0 - A0 A~^-1 A0``, the pointwise minimum of
    ``A0 z.z + (A~ - A0)(p + z).(p + z)`` over ``z`` for unit ``p``.
    """
    background = np.asarray(background).reshape(-1, 2, 2)
    tilde = np.asarray(tilde).reshape(-1, 2, 2)
    if not len(background):
        return math.nan
    product = background - background @ np.linalg.solve(tilde, background)
    product = (product + product.transpose(0, 2, 1)) / 2
    return float(np.linalg.eigvalsh(product).min())
