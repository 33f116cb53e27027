"""Correction terms of the oscillating-decaying ansatz.

A probe is written ``u = exp(i tau sigma y) v(y, s)`` in the frame of its slice, and
``v`` is conjugated to ``M v = 0`` with

    M v = c_yy (v_yy + 2 i tau sigma v_y - tau^2 v) + 2 c_ys (v_ys + i tau sigma v_s)
          + c_ss v_ss + d_y (v_y + i tau sigma v) + d_s v_s + k^2 v.

Freezing the coefficients at ``s = 0`` and keeping the ``tau``-principal part gives
``P2 = -c_ss (D_s - tau lambda+)(D_s - tau lambda-)``; the remainder ``R = M - P2`` is one
order lower in ``tau``. The chain ``v_0 = exp(i tau lambda+ s) chi b`` and
``P2 v_j = -R v_{j-1}``, each ``v_j`` with zero trace at ``s = 0``, leaves ``M sum v_j = R v_J``.

Every field has the form ``E(y, s) P(y, s)`` with ``E = exp(i tau lambda+(y) s)`` and
``P`` a polynomial in ``s``. Coefficients of ``P`` are sampled on a periodic grid
over the cutoff support (all fields vanish to all orders at its ends), tangential
derivatives are spectral, and the transversal problem is solved in closed form.
"""
from __future__ import annotations

import dataclasses as dc
from functools import cached_property
import logging
import math
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline

from od_enclosure.core.geometry import Direction
from od_enclosure.core.medium import AnyTensor, MediumSpec
from od_enclosure.core.od.profile import ODParams
from od_enclosure.core.od.symbol import (
    SymbolData,
    build_symbol,
    frame_components,
    frame_divergence,
)

logger = logging.getLogger(__name__)

#: depth of the slice layer in units of ``1 / (tau a_decay)``
LAYER_DEPTH = 8.0
#: largest relative spectral amplitude of the cutoff above two thirds of the band
SPECTRAL_TAIL = 1e-12
#: largest tangential grid tried before giving up
MAX_CHAIN_POINTS = 2**17


class ResolutionError(RuntimeError):
    """A grid too coarse for the requested ``tau`` or correction order."""

    def __init__(self, message: str, suggested_points: int | None = None):
        super().__init__(message)
        self.suggested_points = suggested_points


def _pad(poly: np.ndarray, rows: int) -> np.ndarray:
    if len(poly) >= rows:
        return poly
    return np.concatenate([poly, np.zeros((rows - len(poly),) + poly.shape[1:], poly.dtype)])


def poly_add(*polys: np.ndarray) -> np.ndarray:
    """Sum polynomials in ``s`` with coefficient rows of possibly different length."""
    rows = max(len(p) for p in polys)
    out = _pad(np.array(polys[0], dtype=complex), rows)
    for poly in polys[1:]:
        out[: len(poly)] += poly
    return out


def poly_shift(poly: np.ndarray) -> np.ndarray:
    """Multiply by ``s``."""
    return np.concatenate([np.zeros((1,) + poly.shape[1:], poly.dtype), poly])


def poly_ds(poly: np.ndarray) -> np.ndarray:
    """Differentiate in ``s``."""
    if len(poly) == 1:
        return np.zeros_like(poly)
    return poly[1:] * np.arange(1, len(poly))[:, None]


def poly_multiply(coefficient: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Multiply two polynomials in ``s`` whose coefficients are tangential samples."""
    out = np.zeros((len(coefficient) + len(poly) - 1,) + poly.shape[1:], dtype=complex)
    for i, row in enumerate(coefficient):
        out[i : i + len(poly)] += row * poly
    return out


def poly_trim(poly: np.ndarray) -> np.ndarray:
    """Drop trailing rows that vanish identically."""
    norms = np.abs(poly).max(axis=1)
    keep = len(poly)
    while keep > 1 and norms[keep - 1] == 0:
        keep -= 1
    return poly[:keep]


def transversal_solve(rhs: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Solve ``P'' + mu P' = rhs`` for the polynomial ``P`` with ``P(0) = 0``.

    ``mu < 0``, so ``exp(-mu s)`` is excluded and ``P' = sum_l (-1)^l rhs^(l) / mu^(l+1)``.
    """
    degree = len(rhs) - 1
    slope = np.zeros_like(rhs, dtype=complex)
    inverse = 1 / mu
    for m in range(degree + 1):
        factor = inverse.astype(complex)
        for l in range(m + 1):
            slope[m - l] += (-1) ** l * math.perm(m, l) * factor * rhs[m]
            factor = factor * inverse
    # integrate from 0
    out = np.zeros((degree + 2,) + rhs.shape[1:], dtype=complex)
    out[1:] = slope / np.arange(1, degree + 2)[:, None]
    return out


@dc.dataclass(frozen=True)
class FrameCoefficients:
    """Polynomial expansions in ``s`` of the frame components and the divergence."""

    c_yy: np.ndarray
    c_ys: np.ndarray
    c_ss: np.ndarray
    d_y: np.ndarray
    d_s: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.c_yy) - 1


def expand_coefficients(
    tensor: AnyTensor,
    direction: Direction,
    t: float,
    y: np.ndarray,
    degree: int,
    depth: float,
) -> FrameCoefficients:
    """Fit the coefficients over ``0 <= s <= depth`` with polynomials of ``degree``.

    Constant tensors give degree 0; the fit is a least-squares fit at Chebyshev nodes.
    """
    if tensor.is_constant:
        degree, nodes = 0, np.zeros(1)
    else:
        count = degree + 4
        nodes = depth * (1 - np.cos(np.pi * (np.arange(count) + 0.5) / count)) / 2
    points = direction.point(np.repeat(y[None, :], len(nodes), 0), nodes[:, None] + 0 * y, t)
    flat = points.reshape(-1, 2)
    c_yy, c_ys, c_ss = frame_components(tensor.evaluate(flat), direction)
    d_y, d_s = frame_divergence(tensor, direction, flat)
    fields = [c.reshape(len(nodes), len(y)) for c in (c_yy, c_ys, c_ss, d_y, d_s)]
    if degree == 0:
        return FrameCoefficients(*(field[:1].astype(complex) for field in fields))
    fitted = [npoly.polyfit(nodes, field, degree).astype(complex) for field in fields]
    return FrameCoefficients(*fitted)


class TransportChain:
    """The correction chain of one probe on a periodic tangential grid."""

    def __init__(self, params: ODParams, medium: MediumSpec, points: int = 2048):
        self.params = params
        self.medium = medium
        self.points = int(points)
        chi = params.chi
        self.spacing = chi.width / self.points
        self.y = chi.lower + self.spacing * np.arange(self.points)
        self.tau = params.tau
        self.sigma = params.sigma
        self.symbol: SymbolData = build_symbol(
            medium, params.omega, params.sigma, params.t, self.y
        )
        support = chi(self.y) > 0
        self.a_decay = float(self.symbol.lambda_plus.imag[support].min())
        self.lam = self.symbol.lambda_plus
        self.dlam = np.gradient(self.lam, self.spacing, edge_order=2)
        self.mu = -2 * self.tau * self.lam.imag
        self.depth = LAYER_DEPTH / (self.tau * self.a_decay)
        self.coefficients = expand_coefficients(
            medium.a0, params.omega, params.t, self.y, params.order + 1, self.depth
        )
        self.wavenumbers = 2 * np.pi * np.fft.fftfreq(self.points, self.spacing)
        band = np.abs(np.fft.fftfreq(self.points)) / 0.5
        # exponential filter against the growth of roundoff under repeated differentiation
        self._filter = np.exp(-36.0 * band**36)
        spectrum = np.abs(np.fft.fft(chi(self.y)))
        self.spectral_tail = float(spectrum[band > 2 / 3].max() / spectrum.max())

    # tangential derivatives

    def _spectral(self, poly: np.ndarray) -> np.ndarray:
        spectrum = np.fft.fft(poly, axis=1)
        return np.fft.ifft(1j * self.wavenumbers * self._filter * spectrum, axis=1)

    def dy(self, poly: np.ndarray) -> np.ndarray:
        """``d/dy (E P) = E (P_y + i tau s lambda' P)``."""
        return poly_add(self._spectral(poly), poly_shift(1j * self.tau * self.dlam * poly))

    def ds(self, poly: np.ndarray) -> np.ndarray:
        """``d/ds (E P) = E (P_s + i tau lambda P)``."""
        return poly_add(poly_ds(poly), 1j * self.tau * self.lam * poly)

    def derivatives(self, poly: np.ndarray) -> dict[str, np.ndarray]:
        """Polynomial parts of ``v``, its first and second derivatives."""
        fy, fs = self.dy(poly), self.ds(poly)
        return {
            "v": poly,
            "v_y": fy,
            "v_s": fs,
            "v_yy": self.dy(fy),
            "v_ys": self.dy(fs),
            "v_ss": self.ds(fs),
        }

    # operators

    def operator(self, poly: np.ndarray) -> np.ndarray:
        """``M (E P) = E Q``, returning ``Q`` with the expanded coefficients."""
        c, ts, k2 = self.coefficients, self.tau * self.sigma, self.medium.k**2
        f = self.derivatives(poly)
        terms = [
            poly_multiply(c.c_yy, poly_add(f["v_yy"], 2j * ts * f["v_y"], -self.tau**2 * poly)),
            poly_multiply(2 * c.c_ys, poly_add(f["v_ys"], 1j * ts * f["v_s"])),
            poly_multiply(c.c_ss, f["v_ss"]),
            poly_multiply(c.d_y, poly_add(f["v_y"], 1j * ts * poly)),
            poly_multiply(c.d_s, f["v_s"]),
            k2 * poly,
        ]
        return poly_add(*terms)

    def principal(self, poly: np.ndarray) -> np.ndarray:
        """``P2 (E P) = E c_ss(0) (P_ss + mu P_s)``."""
        slope = poly_ds(poly)
        return self.coefficients.c_ss[0] * poly_add(poly_ds(slope), self.mu * slope)

    def remainder(self, poly: np.ndarray) -> np.ndarray:
        return poly_add(self.operator(poly), -self.principal(poly))

    def step(self, poly: np.ndarray) -> np.ndarray:
        """The next term: ``P2 v_j = -R v_{j-1}`` with zero trace."""
        rhs = -self.remainder(poly) / self.coefficients.c_ss[0]
        return poly_trim(transversal_solve(rhs, self.mu))

    @cached_property
    def corrections(self) -> list[np.ndarray]:
        """Polynomial parts of ``v_0 .. v_{N+1}``.

        :raises ResolutionError: if the tangential grid does not resolve the chain
        """
        self.check_resolution()
        params = self.params
        chain = [(params.chi(self.y) * params.b)[None, :].astype(complex)]
        for _ in range(params.order + 1):
            chain.append(self.step(chain[-1]))
        self._total = poly_add(*chain)
        # M applied to the sum, on the grid, where the tau^2 terms cancel exactly
        self._residual = poly_trim(self.operator(self._total))
        return chain

    @property
    def total(self) -> np.ndarray:
        """Polynomial part of ``v = v_0 + ... + v_{N+1}``."""
        self.corrections
        return self._total

    @property
    def residual(self) -> np.ndarray:
        """Polynomial part of ``M v``, which equals ``R v_{N+1}``."""
        self.corrections
        return self._residual

    def check_resolution(self) -> None:
        if self.spectral_tail > SPECTRAL_TAIL:
            raise ResolutionError(
                f"tangential grid of {self.points} points leaves a relative spectral tail of "
                f"{self.spectral_tail:.2g}; use at least {2 * self.points} points",
                suggested_points=2 * self.points,
            )

    # evaluation

    def splines(self, poly: np.ndarray) -> CubicSpline:
        """A periodic spline through the coefficient rows of ``poly``."""
        values = np.concatenate([poly, poly[:, :1]], axis=1).T
        grid = np.append(self.y, self.params.chi.upper)
        return CubicSpline(grid, values, bc_type="periodic")

    def evaluate(
        self, poly: np.ndarray, y: np.ndarray, s: np.ndarray, spline: CubicSpline | None = None
    ) -> np.ndarray:
        """Values of ``E P`` at frame coordinates; zero off the cutoff support."""
        y, s = np.asarray(y, dtype=float), np.asarray(s, dtype=float)
        inside = (y > self.params.chi.lower) & (y < self.params.chi.upper)
        out = np.zeros(y.shape, dtype=complex)
        if not inside.any():
            return out
        spline = spline or self.splines(poly)
        yi, si = y[inside], s[inside]
        rows = spline(yi).T
        lam = self.lam_at(yi)
        with np.errstate(under="ignore"):
            out[inside] = np.exp(1j * self.tau * lam * si) * npoly.polyval(si, rows, tensor=False)
        return out

    @cached_property
    def _lam_spline(self) -> CubicSpline:
        grid = np.append(self.y, self.params.chi.upper)
        # lambda is not periodic: extrapolate the last sample with the endpoint value
        end = build_symbol(
            self.medium, self.params.omega, self.sigma, self.params.t, self.params.chi.upper
        ).lambda_plus
        return CubicSpline(grid, np.append(self.lam, end))

    def lam_at(self, y: np.ndarray) -> np.ndarray:
        if self.medium.a0.is_constant:
            return np.full(np.shape(y), self.lam[0])
        return self._lam_spline(y)

    # norms

    def profile_norms(self, poly: np.ndarray) -> np.ndarray:
        """``integral_0^inf |E P|^2 ds`` at every grid point, in closed form."""
        rate = 2 * self.tau * self.lam.imag
        total = np.zeros(self.points)
        for m, row_m in enumerate(poly):
            for n, row_n in enumerate(poly):
                moment = math.factorial(m + n) / rate ** (m + n + 1)
                total += (row_m * np.conj(row_n)).real * moment
        return total

    def l2_norm(self, poly: np.ndarray) -> float:
        """``||E P||`` over the half strip below the cutoff support."""
        return math.sqrt(max(float(self.profile_norms(poly).sum() * self.spacing), 0.0))


def build_chain(
    params: ODParams, medium: MediumSpec, points: int = 2048, max_points: int = MAX_CHAIN_POINTS
) -> TransportChain:
    """Build the chain, doubling the tangential grid until it is resolved.

    :raises ResolutionError: if ``max_points`` is not enough
    """
    while True:
        chain = TransportChain(params, medium, points)
        try:
            chain.corrections
        except ResolutionError as exc:
            if exc.suggested_points is None or exc.suggested_points > max_points:
                raise
            logger.debug("refining the tangential grid to %d points", exc.suggested_points)
            points = exc.suggested_points
            continue
        return chain


def transport_corrections(
    params: ODParams,
    symbol: SymbolData | None,
    medium: MediumSpec,
    *,
    include_last: bool = False,
    points: int = 2048,
) -> list[np.ndarray]:
    """Polynomial parts of the chain terms ``v_0, ..., v_N`` (and ``v_{N+1}`` if requested).

    ``symbol`` is accepted for symmetry with the other constructors; the chain samples
    its own symbol on the tangential grid.

    :raises ResolutionError: if the tangential grid cannot resolve the chain
    """
    chain = build_chain(params, medium, points)
    if symbol is not None and symbol.sigma != params.sigma:
        raise ValueError("symbol and probe use different xi")
    terms = chain.corrections
    return terms if include_last else terms[:-1]


def correction_norms(
    chain: TransportChain, terms: Iterable[np.ndarray] | None = None
) -> list[float]:
    """L2 norms of the chain terms over the half strip."""
    return [chain.l2_norm(poly) for poly in (chain.corrections if terms is None else terms)]
