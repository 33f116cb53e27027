"""Extension of oscillating-decaying probes to solutions on the whole domain.

A probe only lives on its slice. Its extension is a regularized least-squares fit, in
``H1(K)`` on a region ``K`` of the slice, by a combination of exact solutions of the
constant background equation. The trace of the fit on the domain boundary is the
Dirichlet datum of the indicator.

Basis families, with ``S = A0^(1/2)`` and ``y = S^-1 x`` (so that the background operator
becomes ``Laplace_y + k^2``):

- ``plane-wave``: ``exp(i k d.y)`` at equispaced unit ``d``; harmonic polynomials for ``k = 0``
- ``fundamental-solution``: harmonic polynomials and ``log|y - p|`` for ``k = 0``,
  ``H0(k |y - p|)`` for ``k > 0``, poles ``p`` on a circle around the ball
- ``evanescent``: ``exp(i kappa x.eta + i beta (x.omega - t))`` on a band of ``kappa``
  around the probe frequency, ``beta`` the decaying root of the dispersion relation
"""
from __future__ import annotations

import dataclasses as dc
import math
from typing import Literal, Sequence

import numpy as np
from scipy import linalg as dense_linalg
from scipy import special
from shapely.geometry import Polygon
from shapely.geometry.base import BaseGeometry

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem.assemble import boundary_mass_matrix, laplace_matrix, mass_matrix
from od_enclosure.core.fem.mesh import Mesh, MeshError, generate_mesh
from od_enclosure.core.geometry import Direction, slice_polygon
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.core.medium import MediumSpec
from od_enclosure.core.od.profile import ODParams
from od_enclosure.core.od.solution import ODSolution
from od_enclosure.core.od.symbol import frame_components

BasisKind = Literal["evanescent", "plane-wave", "fundamental-solution"]

#: relative Tikhonov parameters tried, as multiples of the largest Gram eigenvalue
ALPHA_GRID = tuple(10.0**e for e in range(-16, 0, 2))
#: below this the L-curve has no corner and the smallest parameter is used
CORNER_CURVATURE = 1e-2
#: admissible boundary trace over peak probe value, sqrt(perimeter) and growth across the domain
TRACE_SLACK = 10.0
#: cap of the growth exponent, below the overflow of exp
MAX_GROWTH_EXPONENT = 600.0
#: relative tolerance of the background equation for basis elements
BASIS_RESIDUAL_TOLERANCE = 1e-6
BALL_INFLATION = 1.5


class UnsupportedBackgroundError(ValueError):
    """Exact global solution families need a constant background."""


class ConditioningError(RuntimeError):
    """The regularized fit is ill-conditioned beyond repair."""


class ApproximationError(RuntimeError):
    """The fit misses its target misfit."""

    def __init__(self, message: str, fit_error: float, extension: RungeExtension | None = None):
        super().__init__(message)
        self.fit_error = fit_error
        self.extension = extension


# basis families


def _matrix_root(tensor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(A^(1/2), A^(-1/2))`` of a symmetric positive definite matrix."""
    values, vectors = np.linalg.eigh(tensor)
    return (vectors * np.sqrt(values)) @ vectors.T, (vectors / np.sqrt(values)) @ vectors.T


class _Family:
    """Exact solutions evaluated with their gradients and Hessians in ``x``."""

    size: int

    def evaluate(self, points: np.ndarray, order: int = 0) -> list[np.ndarray]:
        raise NotImplementedError


class _StretchedFamily(_Family):
    """A family of solutions of ``Laplace_y + k^2`` pulled back by ``y = R x``."""

    def __init__(self, inverse_root: np.ndarray):
        self.inverse_root = inverse_root

    def evaluate(self, points: np.ndarray, order: int = 0) -> list[np.ndarray]:
        R = self.inverse_root
        out = self.evaluate_y(np.asarray(points, dtype=float) @ R.T, order)
        if order >= 1:
            out[1] = out[1] @ R
        if order >= 2:
            out[2] = np.einsum("ai,nmij,jb->nmab", R, out[2], R)
        return out

    def evaluate_y(self, y: np.ndarray, order: int) -> list[np.ndarray]:
        raise NotImplementedError


class _PlaneWaves(_StretchedFamily):
    def __init__(self, inverse_root: np.ndarray, k: float, count: int):
        super().__init__(inverse_root)
        angles = 2 * np.pi * np.arange(count) / count
        self.wavevectors = k * np.column_stack([np.cos(angles), np.sin(angles)])
        self.size = count

    def evaluate_y(self, y: np.ndarray, order: int) -> list[np.ndarray]:
        values = np.exp(1j * y @ self.wavevectors.T)
        out = [values]
        if order >= 1:
            out.append(1j * values[..., None] * self.wavevectors)
        if order >= 2:
            outer = np.einsum("mi,mj->mij", self.wavevectors, self.wavevectors)
            out.append(-values[..., None, None] * outer)
        return out


class _HarmonicPolynomials(_StretchedFamily):
    """``z^n`` and ``conj(z)^n`` with ``z = ((y - c)_1 + i (y - c)_2) / radius``."""

    def __init__(self, inverse_root: np.ndarray, center: np.ndarray, radius: float, degree: int):
        super().__init__(inverse_root)
        self.center, self.radius = center, radius
        self.powers = np.array([0] + [n for n in range(1, degree + 1) for _ in (0, 1)])
        self.conjugate = np.array([False] + [c for _ in range(degree) for c in (False, True)])
        self.size = len(self.powers)

    def evaluate_y(self, y: np.ndarray, order: int) -> list[np.ndarray]:
        z = ((y[:, 0] - self.center[0]) + 1j * (y[:, 1] - self.center[1])) / self.radius
        z = np.where(self.conjugate, np.conj(z)[:, None], z[:, None])
        n = self.powers
        # d/dy2 of conj(z) is -i
        unit = np.where(self.conjugate, -1j, 1j)

        def power(p):
            return np.where(p >= 0, z ** np.maximum(p, 0), 0)

        out = [power(n).astype(complex)]
        if order >= 1:
            first = n * power(n - 1) / self.radius
            out.append(np.stack([first, unit * first], axis=-1))
        if order >= 2:
            second = n * (n - 1) * power(n - 2) / self.radius**2
            hessian = np.empty(second.shape + (2, 2), dtype=complex)
            hessian[..., 0, 0] = second
            hessian[..., 0, 1] = hessian[..., 1, 0] = unit * second
            hessian[..., 1, 1] = -second
            out.append(hessian)
        return out


class _PointSources(_StretchedFamily):
    """``log|y - p|`` for ``k = 0``, ``H0(k |y - p|)`` otherwise."""

    def __init__(
        self, inverse_root: np.ndarray, k: float, center: np.ndarray, radius: float, count: int
    ):
        super().__init__(inverse_root)
        self.k = k
        angles = 2 * np.pi * (np.arange(count) + 0.5) / count
        self.poles = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
        self.size = count

    def evaluate_y(self, y: np.ndarray, order: int) -> list[np.ndarray]:
        offset = y[:, None, :] - self.poles[None, :, :]
        r = np.linalg.norm(offset, axis=-1)
        unit = offset / r[..., None]
        eye = np.eye(2)
        outer = np.einsum("nmi,nmj->nmij", unit, unit)
        if self.k == 0:
            out = [np.log(r).astype(complex)]
            if order >= 1:
                out.append((unit / r[..., None]).astype(complex))
            if order >= 2:
                out.append(((eye - 2 * outer) / (r**2)[..., None, None]).astype(complex))
            return out
        kr = self.k * r
        h0, h1 = special.hankel1(0, kr), special.hankel1(1, kr)
        out = [h0]
        if order >= 1:
            out.append(-self.k * h1[..., None] * unit)
        if order >= 2:
            dh1 = h0 - h1 / kr
            out.append(
                -self.k
                * (
                    self.k * dh1[..., None, None] * outer
                    + (h1 / r)[..., None, None] * (eye - outer)
                )
            )
        return out


class _Evanescent(_Family):
    """``exp(i kappa y + i beta s)`` in the frame of a slice."""

    def __init__(self, direction: Direction, t: float, kappa: np.ndarray, beta: np.ndarray):
        self.direction, self.t = direction, t
        self.kappa, self.beta = kappa, beta
        eta, omega = np.asarray(direction.eta), np.asarray(direction.omega)
        self.wavevectors = np.outer(kappa, eta) + np.outer(beta, omega)
        self.size = len(kappa)

    def evaluate(self, points: np.ndarray, order: int = 0) -> list[np.ndarray]:
        y, s = self.direction.coordinates(np.asarray(points, dtype=float), self.t)
        with np.errstate(over="ignore"):
            values = np.exp(1j * (np.outer(y, self.kappa) + np.outer(s, self.beta)))
        out = [values]
        if order >= 1:
            out.append(1j * values[..., None] * self.wavevectors)
        if order >= 2:
            outer = np.einsum("mi,mj->mij", self.wavevectors, self.wavevectors)
            out.append(-values[..., None, None] * outer)
        return out


def dispersion_root(
    tensor: np.ndarray, direction: Direction, kappa: np.ndarray, k: float
) -> np.ndarray:
    """The root ``beta`` of ``c_ss beta^2 + 2 kappa c_ys beta + kappa^2 c_yy - k^2 = 0``
    with ``Im beta >= 0`` (the larger real root when both are real)."""
    c_yy, c_ys, c_ss = (float(c) for c in frame_components(tensor[None], direction))
    kappa = np.asarray(kappa, dtype=float)
    discriminant = (kappa * c_ys) ** 2 - c_ss * (kappa**2 * c_yy - k**2)
    return (-kappa * c_ys + np.sqrt(discriminant.astype(complex))) / c_ss


@dc.dataclass(frozen=True)
class GlobalBasis:
    """Exact solutions of the constant background equation on the ball around the domain."""

    kind: BasisKind
    count: int
    k: float
    tensor: np.ndarray = dc.field(repr=False)
    families: tuple[_Family, ...] = dc.field(repr=False)

    def evaluate(self, points: np.ndarray, order: int = 0) -> list[np.ndarray]:
        """Values ``(n, count)`` and, up to ``order``, gradients and Hessians."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        parts = [family.evaluate(points, order) for family in self.families]
        return [np.concatenate([part[i] for part in parts], axis=1) for i in range(order + 1)]

    def values(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(points)[0]

    def gradients(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(points, 1)[1]

    def residuals(self, points: np.ndarray) -> np.ndarray:
        """Relative pointwise residual ``|tr(A0 H) + k^2 u|`` per element, shape ``(count,)``."""
        values, _, hessians = self.evaluate(points, 2)
        applied = np.einsum("ij,nmji->nm", self.tensor, hessians) + self.k**2 * values
        curvature = np.linalg.norm(self.tensor) * np.linalg.norm(hessians, axis=(2, 3))
        scale = curvature + self.k**2 * np.abs(values)
        return (np.abs(applied) / np.maximum(scale, 1e-300)).max(axis=0)

    def weak_residuals(self, mesh: Mesh) -> np.ndarray:
        """Relative P1 weak residual per element, shape ``(count,)``.

        ``integral A0 grad(u) . grad(phi) - k^2 u phi`` against the interior hat functions
        vanishes for exact solutions; it is taken relative to the largest nodal sum of the
        absolute element contributions.
        """
        points, weights, barycentric = mesh.quadrature(5)
        m, q = weights.shape
        values, gradients = self.evaluate(points.reshape(-1, 2), 1)
        values = values.reshape(m, q, -1)
        gradients = gradients.reshape(m, q, -1, 2)
        flux = np.einsum("mq,mqnd,de->mne", weights, gradients, self.tensor)
        stiffness = np.einsum("mne,mje->mjn", flux, mesh.gradients)
        mass = self.k**2 * np.einsum("mq,mqn,qj->mjn", weights, values, barycentric)
        residual = np.zeros((mesh.n_nodes, values.shape[-1]), dtype=complex)
        scale = np.zeros(residual.shape)
        np.add.at(residual, mesh.triangles, stiffness - mass)
        np.add.at(scale, mesh.triangles, np.abs(stiffness) + np.abs(mass))
        interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes)
        worst = np.abs(residual[interior]).max(axis=0)
        return worst / np.maximum(scale[interior].max(axis=0), 1e-300)


def ball_around(medium: MediumSpec) -> tuple[np.ndarray, float]:
    """The circumscribed circle of the domain, radius inflated by 50%."""
    center, radius = medium.domain.circumcircle()
    return np.asarray(center), BALL_INFLATION * radius


def build_basis(
    medium: MediumSpec,
    kind: BasisKind,
    count: int,
    k: float | None = None,
    *,
    probe: ODParams | None = None,
) -> GlobalBasis:
    """Build ``count`` exact solutions of the background equation.

    :param probe: the probe an ``evanescent`` basis is centred on
    :raises UnsupportedBackgroundError: for a variable background
    """
    if count < 16:
        raise ValueError(f"a global basis needs at least 16 elements, got {count}")
    if not medium.a0.is_constant:
        raise UnsupportedBackgroundError(
            "extension to the whole domain needs a constant background tensor"
        )
    k = medium.k if k is None else float(k)
    tensor = np.asarray(medium.a0.evaluate(np.zeros((1, 2)))[0], dtype=float)
    _, inverse_root = _matrix_root(tensor)
    center, radius = ball_around(medium)
    center_y = inverse_root @ center
    # radius of a disk in y containing the image of the ball
    radius_y = radius * float(np.linalg.norm(inverse_root, 2))

    families: list[_Family]
    if kind == "evanescent":
        if probe is None:
            raise ValueError("an evanescent basis needs the probe it approximates")
        period = 4 * radius
        kappa = probe.sigma * probe.tau + 2 * np.pi * (np.arange(count) - count // 2) / period
        beta = dispersion_root(tensor, probe.omega, kappa, k)
        families = [_Evanescent(probe.omega, probe.t, kappa, beta)]
    elif kind == "plane-wave":
        if k > 0:
            families = [_PlaneWaves(inverse_root, k, count)]
        else:
            families = [_HarmonicPolynomials(inverse_root, center_y, radius_y, (count - 1) // 2)]
    elif kind == "fundamental-solution":
        if k > 0:
            families = [_PointSources(inverse_root, k, center_y, 2 * radius_y, count)]
        else:
            degree = count // 4
            families = [
                _HarmonicPolynomials(inverse_root, center_y, radius_y, degree),
                _PointSources(inverse_root, 0.0, center_y, 2 * radius_y, count - 2 * degree - 1),
            ]
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    return GlobalBasis(kind, count, k, tensor, tuple(families))


def check_basis(
    basis: GlobalBasis, sample: Mesh | np.ndarray, tolerance: float = BASIS_RESIDUAL_TOLERANCE
) -> float:
    """The largest relative residual of the basis elements.

    :param sample: a mesh for the weak residual, or points for the pointwise one
    :raises ValueError: if it exceeds ``tolerance``
    """
    if isinstance(sample, Mesh):
        worst = float(basis.weak_residuals(sample).max())
    else:
        worst = float(basis.residuals(sample).max())
    if not worst <= tolerance:
        raise ValueError(f"basis residual {worst:.3g} exceeds {tolerance:.3g}")
    return worst


# fitting


@dc.dataclass
class RungeExtension:
    """A global solution close to a probe on ``K``, with its Dirichlet trace."""

    basis: GlobalBasis = dc.field(repr=False)
    coefficients: np.ndarray = dc.field(repr=False)
    fit_error: float
    """relative ``H1(K)`` misfit, recomputed after solving"""
    trace_on_boundary: np.ndarray = dc.field(repr=False)
    conditioning: float
    """the Tikhonov parameter used"""
    trace_norm: float = math.nan
    """``L2`` norm of the trace on the domain boundary"""
    probe_norm: float = math.nan
    """``H1(K)`` norm of the probe"""
    alphas: tuple[float, ...] = ()
    fit_errors: tuple[float, ...] = ()
    trace_norms: tuple[float, ...] = ()
    trace_bound: float = math.inf
    """largest admissible ``trace_norm``, see :func:`growth_bound`"""

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.basis.values(points) @ self.coefficients

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.einsum("nmd,m->nd", self.basis.gradients(points), self.coefficients)


def default_k_region(
    solution: ODSolution, medium: MediumSpec, config: EnclosureConfig | None = None
) -> BaseGeometry:
    """The fit region: the slice layer of depth ``k_region_depth / (tau a)``.

    With an inclusion, the layer is narrowed to the tangential extent of its bounding box,
    widened by ``k_region_inflation``.
    """
    config = config or EnclosureConfig()
    params = solution.params
    depth = config.k_region_depth / (params.tau * solution.a_decay)
    layer = slice_polygon(medium.domain, params.omega, params.t, depth)
    if medium.inclusion.is_empty:
        return layer
    y, _ = params.omega.coordinates(medium.inclusion.array)
    margin = config.k_region_inflation * (y.max() - y.min())
    lower, upper = y.min() - margin, y.max() + margin
    reach = 4 * (medium.domain.diameter + abs(params.t))
    corners = [(lower, -reach), (upper, -reach), (upper, reach), (lower, reach)]
    strip = Polygon([tuple(params.omega.point(y, s)) for y, s in corners])
    narrowed = layer.intersection(strip)
    return layer if narrowed.is_empty or narrowed.area <= 0 else narrowed


def _l_curve_corner(residuals: np.ndarray, norms: np.ndarray) -> int | None:
    """Index of the largest signed curvature of ``(log residual, log norm)``."""
    x = np.log(np.maximum(residuals, 1e-300))
    y = np.log(np.maximum(norms, 1e-300))
    best, index = CORNER_CURVATURE, None
    for i in range(1, len(x) - 1):
        a = np.array([x[i] - x[i - 1], y[i] - y[i - 1]])
        b = np.array([x[i + 1] - x[i], y[i + 1] - y[i]])
        c = np.array([x[i + 1] - x[i - 1], y[i + 1] - y[i - 1]])
        denominator = np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
        if denominator <= 0:
            continue
        curvature = 2 * (a[0] * b[1] - a[1] * b[0]) / denominator
        if curvature > best:
            best, index = curvature, i
    return index


def growth_bound(
    peak: float, perimeter: float, tau: float, a_decay: float, reach: float
) -> float:
    """The largest admissible ``L2`` norm of an extension trace.

    An exact solution matching a probe of peak value ``peak`` grows at most like
    ``exp(tau a_decay reach)`` over the distance ``reach`` from the level to the far side
    of the domain; ``TRACE_SLACK`` times that, spread over the whole boundary, is allowed.
    """
    exponent = min(tau * a_decay * max(reach, 0.0), MAX_GROWTH_EXPONENT)
    return TRACE_SLACK * peak * math.sqrt(max(perimeter, 0.0)) * math.exp(exponent)


def _select_alpha(
    errors: np.ndarray, norms: np.ndarray, trace_norms: np.ndarray, bound: float
) -> int | None:
    """The L-curve corner among the candidates whose trace is within ``bound``.

    Without a corner, the admissible candidate with the smallest misfit; ``None`` if no
    candidate is admissible.
    """
    admissible = np.flatnonzero(np.isfinite(trace_norms) & (trace_norms <= bound))
    if not len(admissible):
        return None
    corner = _l_curve_corner(errors[admissible], norms[admissible])
    if corner is not None:
        return int(admissible[corner])
    return int(admissible[np.argmin(errors[admissible])])


def extend(
    solution: ODSolution,
    k_region: BaseGeometry | Mesh | None,
    basis: GlobalBasis,
    epsilon_target: float | None = None,
    *,
    mesh: Mesh,
    config: EnclosureConfig | None = None,
    alphas: Sequence[float] = ALPHA_GRID,
    logger: RunLogger | None = None,
) -> RungeExtension:
    """Fit ``basis`` to the probe in ``H1(K)`` and take the trace on ``mesh``'s boundary.

    Columns are scaled to unit boundary norm, so the Tikhonov term bounds the trace.
    Candidates over ``alphas`` (relative to the largest Gram eigenvalue) whose trace
    exceeds :func:`growth_bound` are dropped; of the others the L-curve corner is used,
    or the smallest misfit if the curve has no corner.

    :raises ApproximationError: if the misfit exceeds ``epsilon_target``
    :raises ConditioningError: if no parameter gives a trace within the growth bound
    """
    config = config or EnclosureConfig()
    logger = logger or get_run_logger(__name__, "runge")
    epsilon_target = config.epsilon_target if epsilon_target is None else epsilon_target
    if k_region is None:
        k_region = default_k_region(solution, solution.medium, config)
    if isinstance(k_region, Mesh):
        k_mesh = k_region
    else:
        try:
            k_mesh = generate_mesh(k_region, solution.mesh.h_mesh)
        except MeshError:
            k_mesh = generate_mesh(k_region, solution.mesh.h_mesh / 2)

    boundary = mesh.boundary_nodes
    boundary_mass = boundary_mass_matrix(mesh)[boundary][:, boundary]
    boundary_values = basis.values(mesh.nodes[boundary])
    scale = np.sqrt(np.einsum("bm,bm->m", boundary_values.conj(), boundary_mass @ boundary_values))
    scale = np.where(scale.real > 0, scale.real, 1.0)

    gram = (laplace_matrix(k_mesh) + mass_matrix(k_mesh)).tocsr()
    design = basis.values(k_mesh.nodes) / scale
    target = solution.evaluate(k_mesh.nodes)
    probe_norm = math.sqrt(max(float(np.vdot(target, gram @ target).real), 0.0))
    if not probe_norm > 0 or not np.all(np.isfinite(design)):
        raise ConditioningError("the probe or the basis is not finite on K")

    weighted = gram @ design
    normal = design.conj().T @ weighted
    rhs = weighted.conj().T @ target
    eigenvalues, vectors = dense_linalg.eigh(normal)
    top = float(eigenvalues.max())
    if not top > 0:
        raise ConditioningError("the basis vanishes on K")
    projected = vectors.conj().T @ rhs

    params = solution.params
    _, depth = params.omega.coordinates(mesh.nodes[boundary], params.t)
    perimeter = float(np.sum(boundary_mass @ np.ones(len(boundary))))
    bound = growth_bound(
        float(np.abs(target).max()), perimeter, params.tau, solution.a_decay, -float(depth.min())
    )

    def boundary_norm(values: np.ndarray) -> float:
        return math.sqrt(max(float(np.vdot(values, boundary_mass @ values).real), 0.0))

    candidates = []
    for relative in alphas:
        alpha = relative * top
        scaled = vectors @ (projected / (np.maximum(eigenvalues, 0.0) + alpha))
        misfit = design @ scaled - target
        error = math.sqrt(max(float(np.vdot(misfit, gram @ misfit).real), 0.0)) / probe_norm
        with np.errstate(over="ignore", invalid="ignore"):
            trace_norm = boundary_norm(boundary_values @ (scaled / scale))
        candidates.append((alpha, scaled, error, float(np.linalg.norm(scaled)), trace_norm))
    errors = np.array([c[2] for c in candidates])
    norms = np.array([c[3] for c in candidates])
    trace_norms = np.array([c[4] for c in candidates])
    chosen = _select_alpha(errors, norms, trace_norms, bound)
    if chosen is None:
        raise ConditioningError(
            f"every extension trace exceeds {bound:.3g} (smallest {np.nanmin(trace_norms):.3g}) "
            f"for a probe of norm {probe_norm:.3g}"
        )
    alpha, scaled, fit_error, coefficient_norm, trace_norm = candidates[chosen]

    coefficients = scaled / scale
    trace = boundary_values @ coefficients
    extension = RungeExtension(
        basis=basis,
        coefficients=coefficients,
        fit_error=fit_error,
        trace_on_boundary=trace,
        conditioning=alpha,
        trace_norm=trace_norm,
        probe_norm=probe_norm,
        alphas=tuple(c[0] for c in candidates),
        fit_errors=tuple(errors.tolist()),
        trace_norms=tuple(trace_norms.tolist()),
        trace_bound=bound,
    )
    logger.info(
        "extension t=%.6g tau=%.6g: fit error %.3g, alpha %.3g, trace norm %.3g",
        solution.params.t,
        solution.params.tau,
        fit_error,
        alpha,
        trace_norm,
        subtype="runge",
        stats={
            "event": "extend",
            "t": solution.params.t,
            "tau": solution.params.tau,
            "kind": basis.kind,
            "count": basis.count,
            "alpha": alpha,
            "fit_error": fit_error,
            "coefficient_norm": coefficient_norm,
            "trace_norm": trace_norm,
            "trace_bound": bound,
            "k_nodes": k_mesh.n_nodes,
        },
    )
    if fit_error > epsilon_target:
        raise ApproximationError(
            f"fit error {fit_error:.3g} exceeds the target {epsilon_target:.3g} "
            f"with {basis.count} {basis.kind} elements",
            fit_error,
            extension,
        )
    return extension
