"""The principal symbol of the background operator in the frame of a slice.

In the frame ``y = x.eta``, ``s = x.omega - t`` the tensor has the components
``c_yy = eta.A eta``, ``c_ys = eta.A omega`` and ``c_ss = omega.A omega``.
Writing ``W = (v, D_s v / tau)`` with ``D_s = -i d/ds``, the principal part of
``div(A grad(e^{i tau sigma y} v))`` becomes ``D_s W = tau K W`` with the
companion matrix

    K = [[0, 1], [-c_yy / c_ss, -2 sigma c_ys / c_ss]]

whose eigenvalues solve ``lambda^2 + 2 sigma (c_ys / c_ss) lambda + c_yy / c_ss = 0``.
"""
from __future__ import annotations

import dataclasses as dc

import numpy as np

from od_enclosure.core.geometry import Direction, GeometryError
from od_enclosure.core.medium import AnyTensor, MediumSpec

#: relative tolerance of the eigenpair check ``K q = lambda q``
EIGEN_TOLERANCE = 1e-10


class SymbolDegeneracyError(RuntimeError):
    """The symbol quadratic has real roots: the background is not elliptic there."""


def frame_components(tensors: np.ndarray, direction: Direction) -> tuple[np.ndarray, ...]:
    """Return ``(c_yy, c_ys, c_ss)`` of stacked tensors ``(n, 2, 2)``."""
    eta, omega = np.asarray(direction.eta), np.asarray(direction.omega)
    a_eta = tensors @ eta
    return a_eta @ eta, a_eta @ omega, (tensors @ omega) @ omega


def frame_divergence(tensor: AnyTensor, direction: Direction, points: np.ndarray):
    """Return the row divergence of the tensor field in the frame, ``(d.eta, d.omega)``."""
    divergence = tensor.divergence(points)
    return divergence @ np.asarray(direction.eta), divergence @ np.asarray(direction.omega)


def xi_sign(direction: Direction, xi: np.ndarray | tuple[float, float] | int) -> int:
    """The sign ``sigma`` with ``xi = sigma eta``.

    :raises GeometryError: if ``xi`` is not a unit vector orthogonal to ``omega``
    """
    if isinstance(xi, (int, np.integer)):
        if xi not in (1, -1):
            raise GeometryError(f"xi sign must be +1 or -1, got {xi}")
        return int(xi)
    vector = np.asarray(xi, dtype=float)
    along = float(vector @ np.asarray(direction.eta))
    if abs(abs(along) - 1) > 1e-12 or abs(float(vector @ np.asarray(direction.omega))) > 1e-12:
        raise GeometryError(f"xi = {tuple(vector)} is not a unit vector along eta")
    return 1 if along > 0 else -1


@dc.dataclass(frozen=True)
class SymbolData:
    """Symbol fields along the slice boundary, sampled at ``x_prime``."""

    x_prime: np.ndarray
    K: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    q_plus: np.ndarray
    a_decay: float
    """the smallest ``Im lambda_plus`` over the samples"""
    sigma: int
    c_yy: np.ndarray
    c_ys: np.ndarray
    c_ss: np.ndarray

    @property
    def decay_rates(self) -> np.ndarray:
        """``Re A_t = Im lambda_plus``, the transversal decay rate per unit ``tau``."""
        return self.lambda_plus.imag


def symbol_roots(
    c_yy: np.ndarray, c_ys: np.ndarray, c_ss: np.ndarray, sigma: int
) -> tuple[np.ndarray, np.ndarray]:
    """Roots ``(lambda_plus, lambda_minus)`` with ``Im lambda_plus > 0``.

    :raises SymbolDegeneracyError: if ``c_ss <= 0`` or the roots are real
    """
    c_yy, c_ys, c_ss = (np.asarray(c, dtype=float) for c in (c_yy, c_ys, c_ss))
    determinant = c_yy * c_ss - c_ys**2
    bad = (c_ss <= 0) | ~(determinant > 0)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise SymbolDegeneracyError(
            f"real symbol roots at sample {index}: c_yy={c_yy.flat[index]:.6g}, "
            f"c_ys={c_ys.flat[index]:.6g}, c_ss={c_ss.flat[index]:.6g}"
        )
    real = -sigma * c_ys / c_ss
    imag = np.sqrt(determinant) / c_ss
    return real + 1j * imag, real - 1j * imag


def build_symbol(
    medium: MediumSpec,
    omega: Direction,
    xi: np.ndarray | tuple[float, float] | int,
    t: float,
    x_prime: float | np.ndarray,
) -> SymbolData:
    """Evaluate ``K``, its eigenvalues and the eigenvector ``q_plus = (1, lambda_plus)``.

    The background tensor is evaluated at the points ``x' eta + t omega``.

    :raises SymbolDegeneracyError: where the background is not elliptic
    """
    sigma = xi_sign(omega, xi)
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    points = omega.point(x_prime, np.zeros_like(x_prime), t)
    c_yy, c_ys, c_ss = frame_components(medium.a0.evaluate(points), omega)
    lambda_plus, lambda_minus = symbol_roots(c_yy, c_ys, c_ss, sigma)

    K = np.zeros((len(x_prime), 2, 2), dtype=complex)
    K[:, 0, 1] = 1.0
    K[:, 1, 0] = -c_yy / c_ss
    K[:, 1, 1] = -2 * sigma * c_ys / c_ss
    q_plus = np.stack([np.ones_like(lambda_plus), lambda_plus], axis=-1)

    image = np.einsum("nij,nj->ni", K, q_plus)
    defect = np.linalg.norm(image - lambda_plus[:, None] * q_plus, axis=1)
    scale = np.linalg.norm(K, axis=(1, 2)) * np.linalg.norm(q_plus, axis=1)
    if np.any(defect > EIGEN_TOLERANCE * scale):  # pragma: no cover
        raise SymbolDegeneracyError("eigenvector check failed")
    return SymbolData(
        x_prime=x_prime,
        K=K,
        lambda_plus=lambda_plus,
        lambda_minus=lambda_minus,
        q_plus=q_plus,
        a_decay=float(lambda_plus.imag.min()),
        sigma=sigma,
        c_yy=c_yy,
        c_ys=c_ys,
        c_ss=c_ss,
    )
