"""Oscillating-decaying solutions ``u = w + r`` on a slice of the domain.

``w`` is the explicit part built by the transport chain; ``r`` is the finite element
corrector with zero trace on the slice layer ``t < x.omega < t + depth``, which removes
the residual ``(div(A0 grad) + k^2) w``.
"""
from __future__ import annotations

import csv
from functools import cached_property
import math
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg
from shapely.geometry.base import BaseGeometry
from typing_extensions import TypedDict

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem.assemble import (
    element_gradients,
    laplace_matrix,
    load_vector,
    mass_matrix,
)
from od_enclosure.core.fem.mesh import Mesh, MeshError, as_geometry, generate_mesh
from od_enclosure.core.fem.solve import DirichletSolver, GuardReport
from od_enclosure.core.geometry import PolygonalDomain, slice_polygon
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.core.medium import MediumSpec
from od_enclosure.core.od.profile import ODParams
from od_enclosure.core.od.symbol import frame_components, frame_divergence
from od_enclosure.core.od.transport import LAYER_DEPTH, ResolutionError, TransportChain, build_chain


def slice_mesh_size(tau: float, config: EnclosureConfig) -> float:
    """Element size resolving the wavelength ``2 pi / tau`` with the configured node count."""
    return min(config.h_mesh, 2 * math.pi / (config.slice_nodes_per_wavelength * tau))


def build_slice_mesh(
    domain: PolygonalDomain, params: ODParams, a_decay: float, config: EnclosureConfig
) -> Mesh:
    """Mesh the slice layer of depth ``LAYER_DEPTH / (tau a_decay)``."""
    depth = LAYER_DEPTH / (params.tau * a_decay)
    region = slice_polygon(domain, params.omega, params.t, depth)
    return generate_mesh(region, slice_mesh_size(params.tau, config))


class RegionIntegrals(TypedDict):
    """Integrals of a probe over a region."""

    l2: float
    """``integral |u|^2``"""
    h1_semi: float
    """``integral |grad u|^2``"""
    area: float


class ODSolution:
    """An oscillating-decaying solution of the background equation on a slice.

    ``w_eval`` and ``grad_w_eval`` evaluate the explicit part at arbitrary points of the
    slice; ``r`` holds the nodal values of the corrector on ``mesh``.
    """

    def __init__(
        self,
        params: ODParams,
        medium: MediumSpec,
        chain: TransportChain,
        mesh: Mesh,
        r: np.ndarray,
        *,
        residual_norm: float,
        r_h1_norm: float,
        guard: GuardReport,
    ):
        self.params = params
        self.medium = medium
        self.chain = chain
        self.mesh = mesh
        self.r = r
        self.residual_norm = residual_norm
        self.r_h1_norm = r_h1_norm
        self.guard = guard

    @property
    def a_decay(self) -> float:
        return self.chain.a_decay

    @property
    def symbol(self):
        return self.chain.symbol

    @cached_property
    def _splines(self) -> dict[str, Any]:
        derivatives = self.chain.derivatives(self.chain.total)
        return {
            name: (poly, self.chain.splines(poly))
            for name, poly in derivatives.items()
            if name in ("v", "v_y", "v_s")
        }

    def _phase(self, y: np.ndarray) -> np.ndarray:
        return np.exp(1j * self.params.tau * self.params.sigma * y)

    def _field(self, name: str, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        poly, spline = self._splines[name]
        return self.chain.evaluate(poly, y, s, spline)

    def w_eval(self, points: np.ndarray) -> np.ndarray:
        """The explicit part ``w`` at points of the slice.

        :raises GeometryError: for points below the slice level
        """
        y, s = self.params.coordinates(points)
        return self._phase(y) * self._field("v", y, s)

    def grad_w_eval(self, points: np.ndarray) -> np.ndarray:
        """``grad w`` at points of the slice, shape ``(n, 2)``."""
        y, s = self.params.coordinates(points)
        v = self._field("v", y, s)
        along = self._field("v_y", y, s) + 1j * self.params.tau * self.params.sigma * v
        across = self._field("v_s", y, s)
        eta, omega = np.asarray(self.params.omega.eta), np.asarray(self.params.omega.omega)
        phase = self._phase(y)[:, None]
        return phase * (along[:, None] * eta + across[:, None] * omega)

    def r_eval(self, points: np.ndarray) -> np.ndarray:
        """The corrector, zero outside the slice layer."""
        return self.mesh.interpolate(self.r, np.asarray(points).reshape(-1, 2), 0.0)

    def grad_r_eval(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        element, _ = self.mesh.locate(points)
        out = np.zeros((len(points), 2), dtype=complex)
        found = element >= 0
        out[found] = self._grad_r[element[found]]
        return out

    @cached_property
    def _grad_r(self) -> np.ndarray:
        return element_gradients(self.mesh, self.r)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """``u = w + r``."""
        return self.w_eval(points) + self.r_eval(points)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self.grad_w_eval(points) + self.grad_r_eval(points)

    def nodal_values(self) -> np.ndarray:
        """``u`` at the nodes of the slice mesh."""
        return self.w_eval(self.mesh.nodes) + self.r

    def operator_residual(self, points: np.ndarray) -> np.ndarray:
        """``(div(A0 grad) + k^2) w`` at points of the slice.

        The residual of the expanded coefficients is interpolated from the chain grid;
        for variable backgrounds the difference to the exact coefficients is added.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        y, s = self.params.coordinates(points)
        chain = self.chain
        out = chain.evaluate(chain.residual, y, s)
        if not self.medium.a0.is_constant:
            out += self._coefficient_defect(points, y, s)
        return self._phase(y) * out

    def _coefficient_defect(self, points: np.ndarray, y: np.ndarray, s: np.ndarray):
        chain, tau, sigma = self.chain, self.params.tau, self.params.sigma
        derivatives = chain.derivatives(chain.total)
        f = {name: chain.evaluate(poly, y, s) for name, poly in derivatives.items()}
        exact = frame_components(self.medium.a0.evaluate(points), self.params.omega)
        exact_div = frame_divergence(self.medium.a0, self.params.omega, points)
        c = chain.coefficients
        expanded = [
            self._expanded(poly, y, s) for poly in (c.c_yy, c.c_ys, c.c_ss, c.d_y, c.d_s)
        ]
        d_yy, d_ys, d_ss = (e - x for e, x in zip(exact, expanded[:3]))
        dd_y, dd_s = (e - x for e, x in zip(exact_div, expanded[3:]))
        ts = 1j * tau * sigma
        return (
            d_yy * (f["v_yy"] + 2 * ts * f["v_y"] - tau**2 * f["v"])
            + 2 * d_ys * (f["v_ys"] + ts * f["v_s"])
            + d_ss * f["v_ss"]
            + dd_y * (f["v_y"] + ts * f["v"])
            + dd_s * f["v_s"]
        )

    def _expanded(self, poly: np.ndarray, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        rows = np.stack([np.interp(y, self.chain.y, row.real) for row in poly])
        return np.polynomial.polynomial.polyval(s, rows, tensor=False)


def _h1_matrix(mesh: Mesh) -> sparse.csr_matrix:
    return (laplace_matrix(mesh) + mass_matrix(mesh)).tocsr()


def assemble_od_solution(
    params: ODParams,
    medium: MediumSpec,
    mesh: Mesh | None = None,
    config: EnclosureConfig | None = None,
    *,
    logger: RunLogger | None = None,
) -> ODSolution:
    """Build ``w`` from the transport chain and solve for the corrector ``r``.

    Without ``mesh`` the slice layer is meshed at the resolution of ``tau``.

    :raises EigenvalueGuardError: if ``k^2`` is close to a Dirichlet eigenvalue of the slice
    :raises ResolutionError: if ``mesh`` does not resolve the wavelength ``2 pi / tau``
    """
    config = config or EnclosureConfig()
    logger = logger or get_run_logger(__name__, "probe")
    chain = build_chain(params, medium, config.chain_points)
    if mesh is None:
        mesh = build_slice_mesh(medium.domain, params, chain.a_decay, config)
    elif mesh.h_mesh > 2 * math.pi / (10 * params.tau) * (1 + 1e-9):
        raise ResolutionError(
            f"slice mesh size {mesh.h_mesh:.3g} does not resolve the wavelength "
            f"2pi/tau = {2 * math.pi / params.tau:.3g} with 10 nodes; "
            f"use h <= {2 * math.pi / (10 * params.tau):.3g}"
        )

    background = medium.without_inclusion()
    solver = DirichletSolver(
        background, mesh, False, guard_tolerance=config.guard_tolerance, logger=logger
    )
    guard = solver.check_guard()

    points, _, _ = mesh.quadrature(5)
    unsolved = ODSolution(
        params,
        medium,
        chain,
        mesh,
        np.zeros(mesh.n_nodes, complex),
        residual_norm=math.nan,
        r_h1_norm=math.nan,
        guard=guard,
    )
    residual = unsolved.operator_residual(points.reshape(-1, 2))
    load = load_vector(mesh, residual.reshape(points.shape[:2]), degree=5)
    r = solver.solve_load(load)

    h1 = _h1_matrix(mesh)
    interior = mesh.interior_nodes
    block = h1[interior][:, interior].tocsc()
    dual = sparse_linalg.splu(block)
    load_i = load[interior]
    riesz = dual.solve(load_i.real.copy()) + 1j * dual.solve(load_i.imag.copy())
    residual_norm = math.sqrt(max(float(np.vdot(load_i, riesz).real), 0.0))
    r_h1_norm = math.sqrt(max(float(np.vdot(r, h1 @ r).real), 0.0))

    logger.info(
        "probe t=%.6g tau=%.6g: residual %.3g, |r|_H1 %.3g",
        params.t,
        params.tau,
        residual_norm,
        r_h1_norm,
        subtype="probe",
        stats={
            "event": "probe",
            "t": params.t,
            "tau": params.tau,
            "order": params.order,
            "a_decay": chain.a_decay,
            "chain_points": chain.points,
            "n_dof": int(len(interior)),
            "residual_norm": residual_norm,
            "r_h1_norm": r_h1_norm,
        },
    )
    return ODSolution(
        params,
        medium,
        chain,
        mesh,
        r,
        residual_norm=residual_norm,
        r_h1_norm=r_h1_norm,
        guard=guard,
    )


def region_integrals(
    solution: ODSolution, region: PolygonalDomain | BaseGeometry, h: float | None = None
) -> RegionIntegrals:
    """``integral |u|^2`` and ``integral |grad u|^2`` over the part of ``region`` in the slice."""
    params = solution.params
    inside = as_geometry(region).intersection(
        slice_polygon(solution.medium.domain, params.omega, params.t)
    )
    if inside.is_empty or inside.area <= 0:
        return RegionIntegrals(l2=0.0, h1_semi=0.0, area=0.0)
    try:
        mesh = generate_mesh(inside, h or solution.mesh.h_mesh)
    except MeshError:
        mesh = generate_mesh(inside, (h or solution.mesh.h_mesh) / 2)
    points, weights, _ = mesh.quadrature(5)
    flat = points.reshape(-1, 2)
    values = solution.evaluate(flat).reshape(weights.shape)
    gradients = solution.gradient(flat).reshape(weights.shape + (2,))
    return RegionIntegrals(
        l2=float(np.sum(weights * np.abs(values) ** 2)),
        h1_semi=float(np.sum(weights * np.sum(np.abs(gradients) ** 2, axis=-1))),
        area=float(weights.sum()),
    )


def layer_integrals(solution: ODSolution, region: PolygonalDomain) -> RegionIntegrals:
    """The integrals of ``u`` over ``region``, e.g. the inclusion."""
    return region_integrals(solution, region)


def depth_ratio(solution: ODSolution, depth: float) -> float:
    """``||u||_{L2(slice at t + depth)} / ||u||_{L2(slice at t)}``.

    Both norms are taken over layers deep enough for the probe to have decayed.
    """
    params = solution.params
    reach = depth + LAYER_DEPTH / (params.tau * solution.a_decay)
    domain = solution.medium.domain
    whole = slice_polygon(domain, params.omega, params.t, reach)
    deep = slice_polygon(domain, params.omega, params.t + depth, reach - depth)
    total = region_integrals(solution, whole)["l2"]
    if total <= 0:
        return math.nan
    return math.sqrt(region_integrals(solution, deep)["l2"] / total)


def trace_defect(solution: ODSolution, samples: int = 1024) -> float:
    """``|| u - exp(i tau x.xi) chi Q b ||`` in L2 of the chord ``x.omega = t``."""
    params = solution.params
    chi = params.chi
    y = chi.lower + chi.width * (np.arange(samples) + 0.5) / samples
    points = params.omega.point(y, np.zeros_like(y), params.t)
    target = np.exp(1j * params.tau * params.sigma * y) * chi(y) * params.b
    defect = np.abs(solution.evaluate(points) - target) ** 2
    return math.sqrt(float(defect.sum()) * chi.width / samples)


def write_debug_csv(solution: ODSolution, path: str | Path, rows: int = 1024) -> Path:
    """Dump the symbol and the chain norms along the slice boundary.

    Columns: ``x_prime``, ``re_lambda_plus``, ``im_lambda_plus``, ``abs_q_plus`` and
    ``norm_v<j>``, the L2 norm in depth of each chain term.
    """
    chain = solution.chain
    stride = max(1, chain.points // rows)
    index = np.arange(0, chain.points, stride)
    norms = [np.sqrt(np.maximum(chain.profile_norms(poly), 0.0)) for poly in chain.corrections]
    symbol = chain.symbol
    path = Path(path)
    with path.open("w", newline="", encoding="utf8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["x_prime", "re_lambda_plus", "im_lambda_plus", "abs_q_plus"]
            + [f"norm_v{j}" for j in range(len(norms))]
        )
        for i in index:
            values = [
                symbol.x_prime[i],
                symbol.lambda_plus[i].real,
                symbol.lambda_plus[i].imag,
                np.linalg.norm(symbol.q_plus[i]),
            ] + [norm[i] for norm in norms]
            writer.writerow([format(float(value), ".17g") for value in values])
    return path


__all__ = (
    "ODSolution",
    "RegionIntegrals",
    "assemble_od_solution",
    "build_slice_mesh",
    "depth_ratio",
    "layer_integrals",
    "region_integrals",
    "slice_mesh_size",
    "trace_defect",
    "write_debug_csv",
)
