"""Support function scans and the reconstruction of the convex hull.

For each direction ``omega`` the probe level ``t`` is raised from the bottom of the
domain on a coarse grid until the indicator stops decaying, then the bracket between
the last decaying and the first persisting level is bisected down to the mesh size.
"""
from __future__ import annotations

import dataclasses as dc
import math
import time
from typing import Any, Sequence

from joblib import Parallel, delayed
import numpy as np

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem.solve import ForwardModel
from od_enclosure.core.geometry import (
    Direction,
    InsufficientDataError,
    PolygonalDomain,
    SupportEstimate,
    equispaced_directions,
    hull_from_support,
    support_function_true,
)
from od_enclosure.core.indicator import (
    Classification,
    IndicatorCurve,
    capped_tau_grid,
    sample_curve,
)
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.warnings_ import OdWarnings, create_warning

#: fraction of flagged directions above which a reconstruction is degraded
DEGRADED_FRACTION = 0.25


@dc.dataclass
class DirectionEstimate:
    """The outcome of one support function scan."""

    omega: Direction
    h: float | None
    """``None`` when no level persisted"""
    flagged: bool = False
    bracket: tuple[float, float] | None = None
    levels: list[dict[str, Any]] = dc.field(default_factory=list)
    """``(t, classification, slope)`` of every sampled level, in scan order"""
    curves: list[IndicatorCurve] = dc.field(default_factory=list, repr=False)
    omega_index: int | None = None

    @property
    def no_inclusion(self) -> bool:
        return self.h is None

    def as_dict(self) -> dict[str, Any]:
        return {
            "omega_index": self.omega_index,
            "omega": list(self.omega.omega),
            "h": self.h,
            "no_inclusion": self.no_inclusion,
            "flagged": self.flagged,
            "bracket": None if self.bracket is None else list(self.bracket),
            "bracket_width": None if self.bracket is None else self.bracket[1] - self.bracket[0],
            "levels": self.levels,
        }


def scan_levels(model: ForwardModel, omega: Direction, config: EnclosureConfig) -> np.ndarray:
    """The coarse grid of levels, strictly inside the extent of the domain along ``omega``.

    The chord at the lowest level degenerates to a point, so the grid starts one step above.
    """
    domain = model.medium.domain
    step = config.coarse_dt if config.coarse_dt is not None else 0.05 * domain.diameter
    step = max(step, config.h_mesh)
    lowest = support_function_true(domain, omega)
    highest = float((domain.array @ np.asarray(omega.omega)).max())
    return np.arange(lowest + step, highest - 0.5 * step, step)


def _widened(grid: np.ndarray) -> np.ndarray:
    """Two more octaves below the capped grid, with two more samples."""
    return np.geomspace(grid[0] / 4, grid[-1], len(grid) + 2)


class _Scanner:
    """Classifies levels for one direction, retrying undecided levels once."""

    def __init__(
        self,
        model: ForwardModel,
        omega: Direction,
        config: EnclosureConfig,
        logger: RunLogger,
        omega_index: int | None,
    ):
        self.model, self.omega, self.config = model, omega, config
        self.logger, self.omega_index = logger, omega_index
        self.estimate = DirectionEstimate(omega=omega, h=None, omega_index=omega_index)

    def classify(self, t: float) -> Classification:
        config, model = self.config, self.model
        curve = sample_curve(
            model, self.omega, t, config, omega_index=self.omega_index, logger=self.logger
        )
        if curve.classification is Classification.UNDECIDED:
            grid = capped_tau_grid(config, model.medium, self.omega, t)
            curve = sample_curve(
                model,
                self.omega,
                t,
                config,
                taus=_widened(grid),
                omega_index=self.omega_index,
                logger=self.logger,
            )
        if curve.classification is Classification.UNDECIDED:
            self.estimate.flagged = True
            create_warning(
                self.logger,
                f"level t={t:.6g} along omega={self.omega.omega} is undecided",
                OdWarnings.UNDECIDED,
                suppress=config.suppress_warnings,
            )
        self.estimate.curves.append(curve)
        self.estimate.levels.append(
            {"t": t, "classification": curve.classification.value, "slope": curve.slope}
        )
        return curve.classification


def estimate_support(
    model: ForwardModel,
    omega: Direction,
    config: EnclosureConfig | None = None,
    *,
    scan: Sequence[float] | None = None,
    omega_index: int | None = None,
    logger: RunLogger | None = None,
) -> DirectionEstimate:
    """Estimate ``h_D(omega)``: the first persisting level of the scan, refined by bisection.

    Undecided levels are retried once with a wider ``tau`` grid and then count as
    persisting, with the estimate flagged. A scan without a persisting level
    detects no inclusion.
    """
    config = config or EnclosureConfig()
    logger = logger or get_run_logger(__name__, "scan")
    levels = scan_levels(model, omega, config) if scan is None else np.asarray(scan, float)
    scanner = _Scanner(model, omega, config, logger, omega_index)
    estimate = scanner.estimate

    lower = None
    upper = None
    for t in levels:
        if scanner.classify(float(t)) is Classification.DECAYS:
            lower = float(t)
            continue
        upper = float(t)
        break
    if upper is None:
        logger.info("no inclusion detected along omega=%s", omega.omega, subtype="scan")
        return estimate
    if lower is None:
        # persists at the first level: nothing below to bracket with
        estimate.h = upper
        estimate.bracket = (upper, upper)
        estimate.flagged = True
        return estimate

    while upper - lower > config.h_mesh:
        middle = (lower + upper) / 2
        if scanner.classify(middle) is Classification.DECAYS:
            lower = middle
        else:
            upper = middle
    estimate.h = upper
    estimate.bracket = (lower, upper)
    logger.info(
        "omega=(%.4f, %.4f): h = %.6g, bracket width %.3g",
        omega.omega[0],
        omega.omega[1],
        upper,
        upper - lower,
        subtype="scan",
        stats={
            "event": "scan",
            "omega": list(omega.omega),
            "h": upper,
            "bracket": [lower, upper],
            "levels": len(estimate.levels),
            "flagged": estimate.flagged,
        },
    )
    return estimate


def _scan_direction(
    model: ForwardModel,
    omega: Direction,
    index: int,
    config: EnclosureConfig,
    scenario: str,
) -> DirectionEstimate:
    estimate = estimate_support(
        model,
        omega,
        config,
        omega_index=index,
        logger=get_run_logger(__name__, scenario),
    )
    estimate.curves = []
    return estimate


def reconstruct_hull(
    model: ForwardModel,
    config: EnclosureConfig | None = None,
    directions: Sequence[Direction] | None = None,
    *,
    logger: RunLogger | None = None,
) -> tuple[SupportEstimate, list[DirectionEstimate]]:
    """Scan ``n_omega`` equispaced directions in parallel and intersect the half-planes.

    Directions without a detected inclusion are left out of the hull. With 25% or more
    directions flagged the estimate is marked degraded.
    """
    config = config or EnclosureConfig()
    logger = logger or get_run_logger(__name__, "reconstruct")
    directions = list(directions or equispaced_directions(config.n_omega))
    if len(directions) < 8:
        raise InsufficientDataError(
            f"a reconstruction needs at least 8 directions, got {len(directions)}"
        )
    start = time.perf_counter()
    scenario = logger.extra.get("scenario", "reconstruct")  # type: ignore[union-attr]
    model.check_guards()
    inner = config.copy(jobs=1)
    estimates: list[DirectionEstimate] = Parallel(n_jobs=config.jobs or -1)(
        delayed(_scan_direction)(model, omega, index, inner, scenario)
        for index, omega in enumerate(directions)
    )

    detected = [e for e in estimates if not e.no_inclusion]
    result = SupportEstimate(
        directions=[e.omega for e in estimates],
        h_values=[math.nan if e.h is None else e.h for e in estimates],
        flagged=[e.flagged for e in estimates],
        no_inclusion=not detected,
        diagnostics=[e.as_dict() for e in estimates],
    )
    if detected:
        try:
            result.hull = hull_from_support(
                SupportEstimate(
                    directions=[e.omega for e in detected],
                    h_values=[float(e.h) for e in detected],  # type: ignore[arg-type]
                )
            )
        except InsufficientDataError as exc:
            result.hull = PolygonalDomain.empty()
            result.degraded = True
            create_warning(
                logger,
                f"cannot bound a hull: {exc}",
                OdWarnings.DEGRADED,
                suppress=config.suppress_warnings,
            )
    if sum(result.flagged) >= DEGRADED_FRACTION * len(estimates):
        result.degraded = True
        create_warning(
            logger,
            f"{sum(result.flagged)} of {len(estimates)} directions are flagged",
            OdWarnings.DEGRADED,
            suppress=config.suppress_warnings,
        )
    logger.info(
        "reconstructed from %d directions (%d detected) in %.1fs",
        len(estimates),
        len(detected),
        time.perf_counter() - start,
        subtype="reconstruct",
        stats={
            "event": "reconstruct",
            "directions": len(estimates),
            "detected": len(detected),
            "flagged": int(sum(result.flagged)),
            "degraded": result.degraded,
            "seconds": time.perf_counter() - start,
        },
    )
    return result, estimates
