"""Dirichlet solves, weak Neumann data and the Dirichlet-to-Neumann pairing.

Boundary traces are arrays over ``mesh.boundary_nodes`` (the ordered boundary loop).
Interior fields are arrays over all mesh nodes.
"""
from __future__ import annotations

from functools import cached_property
import math
import time
from typing import Any, NamedTuple

import numpy as np
from scipy import linalg as dense_linalg
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg
from typing_extensions import TypedDict

from od_enclosure.core.fem.assemble import (
    boundary_mass_matrix,
    element_gradients,
    element_tensors,
    energy_form,
    helmholtz_matrix,
    mass_matrix,
    stiffness_matrix,
)
from od_enclosure.core.fem.mesh import Mesh, MeshError
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.core.medium import MediumSpec

#: dense eigen-solves below this many unknowns
DENSE_LIMIT = 400


class EigenvalueGuardError(RuntimeError):
    """``k^2`` is too close to a discrete Dirichlet eigenvalue."""


class GuardReport(TypedDict):
    """Result of the Dirichlet eigenvalue guard."""

    passed: bool
    margin: float
    """``|lambda_h - k^2| / max(k^2, lambda_h)`` for the eigenvalue nearest ``k^2``"""
    eigenvalue: float
    """the discrete Dirichlet eigenvalue nearest to ``k^2``"""
    k2: float
    tolerance: float
    n_dof: int


def eigenvalue_guard(
    medium: MediumSpec,
    include_inclusion: bool,
    mesh: Mesh,
    tolerance: float = 1e-3,
) -> GuardReport:
    """Check that ``k^2`` is not (close to) a Dirichlet eigenvalue of the discrete operator.

    The eigenvalue of ``K u = lambda M u`` nearest ``k^2`` is found by shift-invert
    (inverse power) iteration; the guard passes if its relative distance to ``k^2``
    exceeds ``tolerance``. With ``k = 0`` the stiffness is coercive and the guard passes.
    """
    return DirichletSolver(medium, mesh, include_inclusion, guard_tolerance=tolerance).guard


class DirichletSolver:
    """Solve ``div(A grad u) + k^2 u = 0`` with Dirichlet data, for many traces.

    The interior block of ``K - k^2 M`` is factorized once (sparse LU) and reused.
    The factorization is dropped when pickled and rebuilt on first use.
    """

    def __init__(
        self,
        medium: MediumSpec,
        mesh: Mesh,
        include_inclusion: bool = True,
        *,
        guard_tolerance: float = 1e-3,
        logger: RunLogger | None = None,
    ):
        self.medium = medium
        self.mesh = mesh
        self.include_inclusion = include_inclusion and not medium.inclusion.is_empty
        self.guard_tolerance = guard_tolerance
        self.logger = logger or get_run_logger(__name__, "solver")

    def __getstate__(self) -> dict[str, Any]:
        keep = ("medium", "mesh", "include_inclusion", "guard_tolerance", "logger")
        return {key: value for key, value in self.__dict__.items() if key in keep}

    @property
    def name(self) -> str:
        return "full" if self.include_inclusion else "background"

    @cached_property
    def tensors(self) -> np.ndarray:
        return element_tensors(self.mesh, self.medium, self.include_inclusion)

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        return stiffness_matrix(self.mesh, self.tensors)

    @cached_property
    def mass(self) -> sparse.csr_matrix:
        return mass_matrix(self.mesh)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        return helmholtz_matrix(self.mesh, self.tensors, self.medium.k)

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.mesh.boundary_nodes

    @cached_property
    def interior(self) -> np.ndarray:
        return self.mesh.interior_nodes

    @cached_property
    def boundary_mass(self) -> sparse.csc_matrix:
        mb = boundary_mass_matrix(self.mesh)
        return mb[self.boundary][:, self.boundary].tocsc()

    @cached_property
    def _boundary_mass_lu(self) -> sparse_linalg.SuperLU:
        return sparse_linalg.splu(self.boundary_mass)

    @cached_property
    def guard(self) -> GuardReport:
        k2 = float(self.medium.k) ** 2
        n_dof = len(self.interior)
        if not n_dof:
            raise MeshError("the mesh has no interior nodes")
        if k2 == 0:
            return GuardReport(
                passed=True,
                margin=1.0,
                eigenvalue=math.nan,
                k2=0.0,
                tolerance=self.guard_tolerance,
                n_dof=n_dof,
            )
        interior = self.interior
        stiffness = self.stiffness[interior][:, interior]
        mass = self.mass[interior][:, interior]
        if n_dof <= DENSE_LIMIT:
            values = dense_linalg.eigh(stiffness.toarray(), mass.toarray(), eigvals_only=True)
            nearest = float(values[np.argmin(np.abs(values - k2))])
        else:
            values = sparse_linalg.eigsh(
                stiffness.tocsc(), k=1, M=mass.tocsc(), sigma=k2, which="LM",
                return_eigenvectors=False,
            )
            nearest = float(values[0])
        margin = abs(nearest - k2) / max(k2, abs(nearest))
        report = GuardReport(
            passed=margin > self.guard_tolerance,
            margin=margin,
            eigenvalue=nearest,
            k2=k2,
            tolerance=self.guard_tolerance,
            n_dof=n_dof,
        )
        self.logger.info(
            "eigenvalue guard (%s): nearest eigenvalue %.6g, margin %.3g",
            self.name,
            nearest,
            margin,
            subtype="guard",
            stats={"event": "guard", "medium": self.name, **report},
        )
        return report

    def check_guard(self) -> GuardReport:
        """Return the guard report, raising if it failed.

        :raises EigenvalueGuardError: if ``k^2`` is within the tolerance of an eigenvalue
        """
        report = self.guard
        if not report["passed"]:
            raise EigenvalueGuardError(
                f"k^2 = {report['k2']:.6g} is within relative {report['margin']:.3g} "
                f"of the Dirichlet eigenvalue {report['eigenvalue']:.6g} ({self.name} medium)"
            )
        return report

    @cached_property
    def _lu(self) -> sparse_linalg.SuperLU:
        self.check_guard()
        start = time.perf_counter()
        block = self.matrix[self.interior][:, self.interior].tocsc()
        lu = sparse_linalg.splu(block)
        self.logger.info(
            "factorized %s system with %d unknowns",
            self.name,
            block.shape[0],
            subtype="fem",
            stats={
                "event": "factorize",
                "medium": self.name,
                "n_dof": int(block.shape[0]),
                "nnz": int(block.nnz),
                "fill": int(lu.L.nnz + lu.U.nnz),
                "guard_margin": self.guard["margin"],
                "seconds": time.perf_counter() - start,
            },
        )
        return lu

    def _solve_real(self, rhs: np.ndarray) -> np.ndarray:
        # the matrix is real: solve real and imaginary parts separately
        if np.iscomplexobj(rhs):
            return self._lu.solve(rhs.real.copy()) + 1j * self._lu.solve(rhs.imag.copy())
        return self._lu.solve(rhs)

    def _check_trace(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[0] != len(self.boundary):
            raise MeshError(
                f"trace has {f.shape[0]} values but the mesh has "
                f"{len(self.boundary)} boundary nodes"
            )
        if not np.all(np.isfinite(f)):
            raise ValueError("the Dirichlet trace is not finite")
        return f

    def solve(self, f: np.ndarray) -> np.ndarray:
        """Interior field with trace ``f`` at the boundary nodes (imposed strongly).

        ``f`` may carry extra trailing axes for several traces at once.
        """
        f = self._check_trace(f)
        dtype = np.result_type(f, float)
        u = np.zeros((self.mesh.n_nodes,) + f.shape[1:], dtype=dtype)
        u[self.boundary] = f
        coupling = self.matrix[self.interior][:, self.boundary]
        rhs = -(coupling @ f)
        u[self.interior] = self._solve_real(rhs)
        residual = self.matrix[self.interior] @ u
        scale = max(float(np.abs(rhs).max(initial=0.0)), 1e-300)
        self.logger.debug(
            "solved %s system, relative residual %.3g",
            self.name,
            float(np.abs(residual).max(initial=0.0)) / scale,
            subtype="fem",
        )
        return u

    def solve_load(self, load: np.ndarray) -> np.ndarray:
        """The field with zero trace whose discrete operator ``K - k^2 M`` gives ``load``
        at the interior nodes."""
        load = np.asarray(load)
        u = np.zeros(self.mesh.n_nodes, dtype=np.result_type(load, float))
        u[self.interior] = self._solve_real(load[self.interior])
        return u

    def weak_neumann(self, u: np.ndarray) -> np.ndarray:
        """The functional ``integral A grad u . grad phi_i - k^2 u phi_i`` at the boundary nodes."""
        return np.asarray(self.matrix @ u)[self.boundary]

    def neumann(self, u: np.ndarray) -> np.ndarray:
        """Nodal Neumann data: the weak functional inverted with the boundary mass matrix."""
        functional = self.weak_neumann(u)
        if np.iscomplexobj(functional):
            return self._boundary_mass_lu.solve(
                functional.real.copy()
            ) + 1j * self._boundary_mass_lu.solve(functional.imag.copy())
        return self._boundary_mass_lu.solve(functional)

    def dn_apply(self, f: np.ndarray) -> np.ndarray:
        """The discrete Dirichlet-to-Neumann map applied to ``f``."""
        return self.neumann(self.solve(f))


def solve_dirichlet(
    medium: MediumSpec, include_inclusion: bool, f: np.ndarray, mesh: Mesh
) -> np.ndarray:
    """Discrete solution with boundary trace ``f``.

    :raises EigenvalueGuardError: if ``k^2`` is close to a discrete eigenvalue
    """
    return DirichletSolver(medium, mesh, include_inclusion).solve(f)


def dn_apply(medium: MediumSpec, include_inclusion: bool, f: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Weak Neumann response of the solution with trace ``f``."""
    return DirichletSolver(medium, mesh, include_inclusion).dn_apply(f)


def boundary_pairing(g: np.ndarray, f: np.ndarray, mesh: Mesh) -> complex:
    """``integral over the boundary of g conj(f)``, with the boundary mass matrix.

    :raises MeshError: if the traces do not match the boundary of ``mesh``
    """
    boundary = mesh.boundary_nodes
    g, f = np.asarray(g), np.asarray(f)
    if g.shape != (len(boundary),) or f.shape != (len(boundary),):
        raise MeshError(
            f"traces of shape {g.shape} and {f.shape} do not match "
            f"{len(boundary)} boundary nodes"
        )
    mb = boundary_mass_matrix(mesh)[boundary][:, boundary]
    return complex(np.vdot(f, mb @ g))


def boundary_trace(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Restrict nodal values to the ordered boundary loop."""
    return np.asarray(values)[mesh.boundary_nodes]


class DNPair(NamedTuple):
    """Neumann responses of one Dirichlet trace, with and without the inclusion."""

    f: np.ndarray
    lambda_D_f: np.ndarray
    lambda_0_f: np.ndarray
    u_full: np.ndarray
    u_background: np.ndarray


class ForwardModel:
    """Both forward problems of a medium on one mesh: with and without the inclusion."""

    def __init__(
        self,
        medium: MediumSpec,
        mesh: Mesh,
        *,
        guard_tolerance: float = 1e-3,
        logger: RunLogger | None = None,
    ):
        self.medium = medium
        self.mesh = mesh
        self.full = DirichletSolver(
            medium, mesh, True, guard_tolerance=guard_tolerance, logger=logger
        )
        self.background = DirichletSolver(
            medium, mesh, False, guard_tolerance=guard_tolerance, logger=logger
        )

    def check_guards(self) -> tuple[GuardReport, GuardReport]:
        """:raises EigenvalueGuardError: if either medium fails the guard"""
        return self.full.check_guard(), self.background.check_guard()

    @cached_property
    def boundary_points(self) -> np.ndarray:
        return self.mesh.nodes[self.mesh.boundary_nodes]

    def synthesize(self, f: np.ndarray) -> DNPair:
        u_full = self.full.solve(f)
        u_background = self.background.solve(f)
        return DNPair(
            f=np.asarray(f),
            lambda_D_f=self.full.neumann(u_full),
            lambda_0_f=self.background.neumann(u_background),
            u_full=u_full,
            u_background=u_background,
        )

    def pairing(self, pair: DNPair) -> complex:
        """``integral (Lambda_D - Lambda_0) f conj(f)`` over the boundary.

        Evaluated from the weak functionals, in which the boundary mass matrix cancels.
        """
        difference = self.full.weak_neumann(pair.u_full) - self.background.weak_neumann(
            pair.u_background
        )
        return complex(np.vdot(pair.f, difference))


def synthesize_dn_pair(medium: MediumSpec, mesh: Mesh, f: np.ndarray) -> DNPair:
    """Solve both forward problems for the trace ``f``."""
    return ForwardModel(medium, mesh).synthesize(f)


class EnergyTerms(TypedDict):
    """Interior integrals entering the energy identities of a trace."""

    boundary: complex
    """``integral (Lambda_D - Lambda_0) f conj(f)``"""
    oracle: float
    """``Re integral_D (A~ - A0) grad u . conj(grad u0)``"""
    energy_w: float
    """``integral A grad w . conj(grad w)`` with ``w = u - u0``"""
    background_energy_w: float
    """``integral A0 grad w . conj(grad w)``"""
    mass_w: float
    """``integral |w|^2``"""
    gradient_w: float
    """``integral |grad w|^2``"""
    gradient_u0_inclusion: float
    """``integral_D |grad u0|^2``"""
    jump_u0: float
    """``integral_D (A~ - A0) grad u0 . conj(grad u0)``"""
    jump_u: float
    """``integral_D (A~ - A0) grad u . conj(grad u)``"""


def interior_energy_terms(model: ForwardModel, pair: DNPair) -> EnergyTerms:
    """Evaluate the interior integrals of one synthesized pair on the mesh."""
    mesh = model.mesh
    u, u0 = pair.u_full, pair.u_background
    w = u - u0
    jump = model.full.tensors - model.background.tensors
    identity = np.broadcast_to(np.eye(2), jump.shape)
    inside = mesh.inclusion_flags
    gradients_u0 = element_gradients(mesh, u0)
    return EnergyTerms(
        boundary=model.pairing(pair),
        oracle=energy_form(mesh, jump, u, u0, inside).real,
        energy_w=energy_form(mesh, model.full.tensors, w, w).real,
        background_energy_w=energy_form(mesh, model.background.tensors, w, w).real,
        mass_w=float(np.real(np.vdot(w, model.full.mass @ w))),
        gradient_w=energy_form(mesh, identity, w, w).real,
        gradient_u0_inclusion=float(
            np.sum(np.sum(np.abs(gradients_u0) ** 2, axis=1)[inside] * mesh.areas[inside])
        ),
        jump_u0=energy_form(mesh, jump, u0, u0, inside).real,
        jump_u=energy_form(mesh, jump, u, u, inside).real,
    )
