"""Probe parameters, the cutoff on the slice cross-section and the leading profile."""
from __future__ import annotations

import dataclasses as dc
import math
from typing import Callable

import numpy as np

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.geometry import Direction, GeometryError, PolygonalDomain, cross_section
from od_enclosure.core.od.symbol import SymbolData

#: points this far below the slice level (relative to the chord) still count as inside
SLICE_TOLERANCE = 1e-12


class CutoffError(ValueError):
    """The cutoff vanishes identically on the slice cross-section."""


def smooth_step(x: np.ndarray) -> np.ndarray:
    """A C-infinity step, 0 for ``x <= 0`` and 1 for ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        left = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1)), 0.0)
        right = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1)), 0.0)
    return left / (left + right)


@dc.dataclass(frozen=True)
class Cutoff:
    """A smooth bump on ``[lower, upper]``, equal to 1 on the middle ``plateau`` fraction.

    It is positive on the open interval and vanishes to all orders at its ends.
    """

    lower: float
    upper: float
    plateau: float = 0.8

    def __post_init__(self):
        if not self.upper > self.lower:
            raise CutoffError(f"empty cutoff support [{self.lower}, {self.upper}]")
        if not 0 < self.plateau < 1:
            raise CutoffError(f"plateau fraction must lie in (0, 1), got {self.plateau}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def ramp(self) -> float:
        """Width of each transition zone."""
        return (1 - self.plateau) * self.width / 2

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return smooth_step((y - self.lower) / self.ramp) * smooth_step((self.upper - y) / self.ramp)

    @classmethod
    def for_slice(
        cls,
        domain: PolygonalDomain,
        omega: Direction,
        t: float,
        plateau: float = 0.8,
        min_width: float = 0.0,
    ) -> Cutoff:
        """The cutoff covering the whole chord of ``domain`` on ``x.omega = t``.

        :raises CutoffError: if the chord is missing or shorter than ``min_width``
        """
        try:
            lower, upper = cross_section(domain, omega, t)
        except GeometryError as exc:
            raise CutoffError(f"no cross-section at t = {t:.6g}: {exc}") from exc
        if upper - lower <= max(min_width, 0.0):
            raise CutoffError(
                f"cross-section at t = {t:.6g} has width {upper - lower:.3g}, "
                f"below {min_width:.3g}"
            )
        return cls(lower, upper, plateau)


@dc.dataclass(frozen=True)
class ODParams:
    """Configuration of one oscillating-decaying probe.

    The probe oscillates like ``exp(i tau sigma x.eta)`` along the slice boundary
    ``x.omega = t`` and decays into ``x.omega > t``.
    """

    omega: Direction
    t: float
    tau: float
    chi: Cutoff
    order: int = 2
    """the correction order ``N``"""
    b: complex = 1.0
    sigma: int = 1
    """``xi = sigma eta``"""

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 <= self.order <= 4:
            raise ValueError(f"correction order must lie in 0..4, got {self.order}")
        if self.b == 0:
            raise ValueError("the amplitude b must be nonzero")
        if self.sigma not in (1, -1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")
        object.__setattr__(self, "b", complex(self.b))

    @property
    def xi(self) -> tuple[float, float]:
        return (self.sigma * self.omega.eta[0], self.sigma * self.omega.eta[1])

    @classmethod
    def for_slice(
        cls,
        domain: PolygonalDomain,
        omega: Direction,
        t: float,
        tau: float,
        config: EnclosureConfig | None = None,
    ) -> ODParams:
        """Probe parameters from a run configuration, with the cutoff on the whole chord."""
        config = config or EnclosureConfig()
        return cls(
            omega=omega,
            t=t,
            tau=tau,
            chi=Cutoff.for_slice(domain, omega, t, config.chi_plateau),
            order=config.order,
            b=config.amplitude_b,
            sigma=config.xi_sign,
        )

    def coordinates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Frame coordinates ``(y, s)``, raising for points below the slice level.

        :raises GeometryError: if a point has ``x.omega < t``
        """
        y, s = self.omega.coordinates(np.asarray(points, dtype=float).reshape(-1, 2), self.t)
        if np.any(s < -SLICE_TOLERANCE * max(1.0, self.chi.width)):
            raise GeometryError(f"point(s) below the slice level t = {self.t:.6g}")
        return y, np.maximum(s, 0.0)


def interpolate_symbol(symbol: SymbolData, y: np.ndarray) -> np.ndarray:
    """``lambda_plus`` at tangential coordinates ``y``, linearly interpolated."""
    if len(symbol.x_prime) == 1:
        return np.full(np.shape(y), symbol.lambda_plus[0])
    real = np.interp(y, symbol.x_prime, symbol.lambda_plus.real)
    imag = np.interp(y, symbol.x_prime, symbol.lambda_plus.imag)
    return real + 1j * imag


def leading_profile(params: ODParams, symbol: SymbolData) -> Callable[[np.ndarray], np.ndarray]:
    """The leading term ``chi Q exp(i tau x.xi) exp(i tau lambda_plus (x.omega - t)) b``.

    ``Q`` is the first component of ``q_plus``, which is normalised to 1.
    The returned function raises ``GeometryError`` for points below the slice.
    """

    def profile(points: np.ndarray) -> np.ndarray:
        y, s = params.coordinates(points)
        lam = interpolate_symbol(symbol, y)
        q = np.interp(y, symbol.x_prime, symbol.q_plus[:, 0].real) if len(symbol.x_prime) > 1 else 1
        phase = np.exp(1j * params.tau * params.sigma * y + 1j * params.tau * lam * s)
        return params.chi(y) * q * phase * params.b

    return profile
