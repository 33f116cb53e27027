"""Vectorised assembly of P1 matrices and load vectors."""
from __future__ import annotations

import numpy as np
from scipy import sparse

from od_enclosure.core.fem.mesh import Mesh
from od_enclosure.core.medium import MediumSpec

_MASS_TEMPLATE = (np.ones((3, 3)) + np.eye(3)) / 12
_EDGE_MASS_TEMPLATE = (np.ones((2, 2)) + np.eye(2)) / 6


def _scatter(mesh: Mesh, local: np.ndarray, size: int | None = None) -> sparse.csr_matrix:
    """Sum element matrices ``(m, 3, 3)`` into a global sparse matrix."""
    size = mesh.n_nodes if size is None else size
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def element_tensors(mesh: Mesh, medium: MediumSpec, include_inclusion: bool = True) -> np.ndarray:
    """Element averages of the coefficient tensor, shape ``(m, 2, 2)``.

    Each element uses the background or the inclusion tensor as a whole,
    following ``mesh.inclusion_flags``.
    """
    points, weights, _ = mesh.quadrature(2)
    flat = points.reshape(-1, 2)
    values = medium.a0.evaluate(flat).reshape(*points.shape[:2], 2, 2)
    if include_inclusion and medium.a_tilde is not None and mesh.inclusion_flags.any():
        inside = mesh.inclusion_flags
        values[inside] = medium.a_tilde.evaluate(points[inside].reshape(-1, 2)).reshape(
            -1, points.shape[1], 2, 2
        )
    return np.einsum("mq,mqij->mij", weights, values) / mesh.areas[:, None, None]


def stiffness_matrix(mesh: Mesh, tensors: np.ndarray) -> sparse.csr_matrix:
    """``K_ij = sum_T |T| grad(phi_i) . A_T grad(phi_j)``."""
    grads = mesh.gradients
    local = np.einsum("mid,mde,mje->mij", grads, tensors, grads) * mesh.areas[:, None, None]
    return _scatter(mesh, local)


def laplace_matrix(mesh: Mesh) -> sparse.csr_matrix:
    return stiffness_matrix(mesh, np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2)))


def mass_matrix(mesh: Mesh) -> sparse.csr_matrix:
    """The consistent P1 mass matrix."""
    local = mesh.areas[:, None, None] * _MASS_TEMPLATE[None, :, :]
    return _scatter(mesh, local)


def boundary_mass_matrix(mesh: Mesh) -> sparse.csr_matrix:
    """Consistent mass matrix of the boundary edges, as a full-size sparse matrix."""
    edges = mesh.boundary_edges
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    local = lengths[:, None, None] * _EDGE_MASS_TEMPLATE[None, :, :]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    shape = (mesh.n_nodes, mesh.n_nodes)
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def helmholtz_matrix(mesh: Mesh, tensors: np.ndarray, k: float) -> sparse.csr_matrix:
    """``K - k^2 M``, the matrix of ``-(div(A grad u) + k^2 u)``."""
    matrix = stiffness_matrix(mesh, tensors)
    if k:
        matrix = matrix - k**2 * mass_matrix(mesh)
    return matrix.tocsr()


def load_vector(mesh: Mesh, values: np.ndarray, degree: int = 5) -> np.ndarray:
    """``b_i = integral of f phi_i`` from values of ``f`` at the quadrature points of ``degree``."""
    _, weights, barycentric = mesh.quadrature(degree)
    local = np.einsum("mq,mq,qk->mk", np.asarray(values), weights, barycentric)
    out = np.zeros(mesh.n_nodes, dtype=local.dtype)
    np.add.at(out, mesh.triangles, local)
    return out


def element_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Constant gradient of a P1 field on every element, shape ``(m, 2)``."""
    return np.einsum("mk,mkd->md", np.asarray(values)[mesh.triangles], mesh.gradients)


def energy_form(
    mesh: Mesh, tensors: np.ndarray, u: np.ndarray, v: np.ndarray, mask: np.ndarray | None = None
) -> complex:
    """``integral of A grad(u) . conj(grad(v))``, optionally over a subset of elements."""
    gu, gv = element_gradients(mesh, u), element_gradients(mesh, v)
    density = np.einsum("md,mde,me->m", gu, tensors, np.conj(gv)) * mesh.areas
    if mask is not None:
        density = density[mask]
    return complex(density.sum())
