"""The indicator function and the classification of its large-``tau`` behaviour.

For a probe at level ``t`` the indicator is the boundary pairing
``I = Re integral (Lambda_D - Lambda_0) f conj(f)`` with ``f`` the trace of the extended
probe. It decays in ``tau`` while the level has not reached the inclusion and stays
bounded away from zero once it has.
"""
from __future__ import annotations

import dataclasses as dc
from enum import Enum
import math
from typing import Any, NamedTuple, Sequence

from joblib import Parallel, delayed
import numpy as np
from typing_extensions import TypedDict

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem.assemble import energy_form
from od_enclosure.core.fem.mesh import Mesh
from od_enclosure.core.fem.solve import ForwardModel
from od_enclosure.core.geometry import Direction, support_function_true
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.core.medium import MediumSpec
from od_enclosure.core.od.profile import Cutoff, ODParams
from od_enclosure.core.od.solution import assemble_od_solution
from od_enclosure.core.od.symbol import build_symbol
from od_enclosure.core.runge import (
    ApproximationError,
    BasisKind,
    RungeExtension,
    build_basis,
    extend,
)
from od_enclosure.warnings_ import OdWarnings, create_warning

#: relative imaginary residue above which a sample is rejected
IMAG_TOLERANCE = 1e-6
#: samples whose magnitude stays within this many roundoff units are treated as zero
NOISE_FACTOR = 16.0
#: slopes above this count as bounded
PERSIST_SLOPE = -0.25
MIN_SAMPLES = 6
MIN_OCTAVES = 4.0
MAX_BASIS_COUNT = 4096


class IndicatorError(RuntimeError):
    """An indicator sample is not real to the expected precision."""


class Classification(str, Enum):
    """Large-``tau`` behaviour of an indicator curve."""

    DECAYS = "DECAYS"
    PERSISTS = "PERSISTS"
    UNDECIDED = "UNDECIDED"


class IndicatorValue(NamedTuple):
    """One evaluated pairing."""

    value: float
    imag_residual: float
    """``|Im I|`` relative to ``sum |f| (|Lambda_D f| + |Lambda_0 f|)``, the scale of the
    cancellation in the difference of the two Neumann data"""
    noise_floor: float
    sample_residual: float = 0.0
    """``|Im I| / max(|Re I|, noise_floor)``"""


@dc.dataclass
class IndicatorCurve:
    """Indicator samples at one probe level over a ``tau`` grid."""

    omega: Direction
    t: float
    taus: np.ndarray
    values: np.ndarray
    slope: float = math.nan
    classification: Classification = Classification.UNDECIDED
    imag_residues: np.ndarray = dc.field(default_factory=lambda: np.zeros(0))
    fit_errors: np.ndarray = dc.field(default_factory=lambda: np.zeros(0))
    trace_norms: np.ndarray = dc.field(default_factory=lambda: np.zeros(0))
    noise_floors: np.ndarray = dc.field(default_factory=lambda: np.zeros(0))
    alphas: np.ndarray = dc.field(default_factory=lambda: np.zeros(0))
    """Tikhonov parameters of the extensions"""
    flagged: np.ndarray = dc.field(default_factory=lambda: np.zeros(0, dtype=bool))
    """samples whose extension missed the target misfit"""
    omega_index: int | None = None
    basis_count: int = 0

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("the tau grid must be increasing")
        n = len(self.taus)
        if len(self.values) != n:
            raise ValueError(f"{len(self.values)} values for {n} tau samples")
        for name in ("imag_residues", "fit_errors", "trace_norms", "noise_floors", "alphas"):
            array = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, array if len(array) else np.zeros(n))
        flagged = np.asarray(self.flagged, dtype=bool)
        self.flagged = flagged if len(flagged) else np.zeros(n, dtype=bool)

    def rows(self) -> list[dict[str, Any]]:
        """One record per sample, in the column order of the indicator CSV."""
        return [
            {
                "omega_index": -1 if self.omega_index is None else self.omega_index,
                "omega_x": self.omega.omega[0],
                "omega_y": self.omega.omega[1],
                "t": self.t,
                "tau": tau,
                "I": value,
                "Im_residual": residue,
                "fit_error": fit_error,
            }
            for tau, value, residue, fit_error in zip(
                self.taus, self.values, self.imag_residues, self.fit_errors
            )
        ]

    def fit_rows(self) -> list[dict[str, Any]]:
        """One record per sample, in the column order of the fit diagnostics CSV."""
        return [
            {
                "omega_index": -1 if self.omega_index is None else self.omega_index,
                "t": self.t,
                "tau": tau,
                "basis_count": self.basis_count,
                "alpha": alpha,
                "fit_error": fit_error,
                "trace_norm": trace_norm,
                "flagged": int(flag),
            }
            for tau, alpha, fit_error, trace_norm, flag in zip(
                self.taus, self.alphas, self.fit_errors, self.trace_norms, self.flagged
            )
        ]

    def as_dict(self) -> dict[str, Any]:
        return {
            "omega": list(self.omega.omega),
            "t": self.t,
            "taus": self.taus.tolist(),
            "values": self.values.tolist(),
            "slope": self.slope,
            "classification": self.classification.value,
            "flagged": self.flagged.tolist(),
        }


# sampling


def _pairing(model: ForwardModel, trace: np.ndarray) -> IndicatorValue:
    pair = model.synthesize(trace)
    full = model.full.weak_neumann(pair.u_full)
    background = model.background.weak_neumann(pair.u_background)
    value = complex(np.vdot(pair.f, full - background))
    magnitude = float(np.sum(np.abs(pair.f) * (np.abs(full) + np.abs(background))))
    floor = NOISE_FACTOR * np.finfo(float).eps * magnitude
    tiny = np.finfo(float).tiny
    return IndicatorValue(
        value.real,
        abs(value.imag) / max(magnitude, tiny),
        floor,
        abs(value.imag) / max(abs(value.real), floor, tiny),
    )


def _check_real(
    sample: IndicatorValue, logger: RunLogger | None, suppress: Sequence[str] = ()
) -> IndicatorValue:
    if sample.imag_residual > IMAG_TOLERANCE:
        raise IndicatorError(
            f"indicator sample {sample.value:.6g} has relative imaginary residue "
            f"{sample.imag_residual:.3g}"
        )
    if logger is not None and sample.sample_residual > 1e-2 * IMAG_TOLERANCE:
        create_warning(
            logger,
            f"imaginary part {sample.sample_residual:.3g} of the indicator sample "
            f"{sample.value:.6g}",
            OdWarnings.IMAG_RESIDUE,
            suppress=suppress,
        )
    return sample


def indicator_sample(
    medium: MediumSpec,
    mesh: Mesh,
    extension: RungeExtension | np.ndarray,
    *,
    model: ForwardModel | None = None,
    logger: RunLogger | None = None,
) -> float:
    """``Re integral (Lambda_D - Lambda_0) f conj(f)`` for the extension trace ``f``.

    :raises EigenvalueGuardError: if either medium fails the guard
    :raises IndicatorError: if the imaginary residue is not negligible
    """
    model = model or ForwardModel(medium, mesh, logger=logger)
    trace = extension.trace_on_boundary if isinstance(extension, RungeExtension) else extension
    sample = _check_real(_pairing(model, np.asarray(trace)), logger)
    if logger is not None:
        logger.debug(
            "indicator %.6g (imaginary residue %.2g)",
            sample.value,
            sample.imag_residual,
            subtype="indicator",
        )
    return sample.value


def indicator_oracle(
    medium: MediumSpec, mesh: Mesh, f: np.ndarray, *, model: ForwardModel | None = None
) -> float:
    """``Re integral_D (A~ - A0) grad u . conj(grad u0)`` from the interior solutions."""
    if medium.inclusion.is_empty:
        return 0.0
    model = model or ForwardModel(medium, mesh)
    pair = model.synthesize(f)
    jump = model.full.tensors - model.background.tensors
    return energy_form(mesh, jump, pair.u_full, pair.u_background, mesh.inclusion_flags).real


# tau grids


def base_tau_grid(config: EnclosureConfig, medium: MediumSpec) -> np.ndarray:
    """The configured grid: explicit, or geometric between ``tau_min`` and ``tau_max``
    scaled by ``1 / diam``."""
    if config.tau_grid is not None:
        return np.asarray(sorted(config.tau_grid), dtype=float)
    diameter = medium.domain.diameter
    return np.geomspace(config.tau_min / diameter, config.tau_max / diameter, config.tau_points)


def chord_decay_rate(medium: MediumSpec, omega: Direction, t: float, sigma: int = 1) -> float:
    """The smallest ``Im lambda_plus`` along the chord ``x.omega = t``."""
    chi = Cutoff.for_slice(medium.domain, omega, t)
    y = np.linspace(chi.lower, chi.upper, 65)
    return build_symbol(medium, omega, sigma, t, y).a_decay


def capped_tau_grid(
    config: EnclosureConfig, medium: MediumSpec, omega: Direction, t: float
) -> np.ndarray:
    """The configured grid, scaled down so that ``tau a L <= amplification_budget``.

    ``L = t - min x.omega`` is the distance over which the extended probe grows;
    the number of points and the ratios are kept.
    """
    grid = base_tau_grid(config, medium)
    reach = t - support_function_true(medium.domain, omega)
    if reach <= 0:
        return grid
    rate = chord_decay_rate(medium, omega, t, config.xi_sign)
    cap = config.amplification_budget / (rate * reach)
    return grid * min(1.0, cap / grid[-1])


# curves


class ProbeTrace(NamedTuple):
    """The boundary trace of one extended probe, with its diagnostics."""

    tau: float
    trace: np.ndarray
    fit_error: float
    trace_norm: float
    alpha: float
    residual_norm: float
    r_h1_norm: float
    flagged: bool


def probe_trace(
    medium: MediumSpec,
    mesh: Mesh,
    omega: Direction,
    t: float,
    tau: float,
    config: EnclosureConfig,
    *,
    scenario: str = "probe",
) -> ProbeTrace:
    """Build, correct and extend the probe at ``(omega, t, tau)``.

    An extension that misses its target misfit is still returned, flagged.
    """
    logger = get_run_logger(__name__, scenario)
    params = ODParams.for_slice(medium.domain, omega, t, tau, config)
    solution = assemble_od_solution(params, medium, config=config, logger=logger)
    basis = build_basis(medium, config.basis_kind, config.basis_count, probe=params)
    flagged = False
    try:
        extension = extend(solution, None, basis, mesh=mesh, config=config, logger=logger)
    except ApproximationError as exc:
        if exc.extension is None:  # pragma: no cover
            raise
        create_warning(logger, str(exc), OdWarnings.FIT, suppress=config.suppress_warnings)
        extension, flagged = exc.extension, True
    return ProbeTrace(
        tau=tau,
        trace=extension.trace_on_boundary,
        fit_error=extension.fit_error,
        trace_norm=extension.trace_norm,
        alpha=extension.conditioning,
        residual_norm=solution.residual_norm,
        r_h1_norm=solution.r_h1_norm,
        flagged=flagged,
    )


def sample_curve(
    model: ForwardModel,
    omega: Direction,
    t: float,
    config: EnclosureConfig | None = None,
    *,
    taus: Sequence[float] | None = None,
    omega_index: int | None = None,
    basis_kind: BasisKind | None = None,
    logger: RunLogger | None = None,
) -> IndicatorCurve:
    """Sample and classify the indicator at level ``t`` over the capped ``tau`` grid.

    Probes are built in parallel over ``tau``; the pairings reuse the factorizations
    of ``model``.
    """
    config = config or EnclosureConfig()
    if basis_kind is not None:
        config = config.copy(basis_kind=basis_kind)
    logger = logger or get_run_logger(__name__, "probe")
    medium = model.medium
    grid = np.asarray(
        capped_tau_grid(config, medium, omega, t) if taus is None else taus, dtype=float
    )
    scenario = logger.extra.get("scenario", "probe")  # type: ignore[union-attr]
    traces: list[ProbeTrace] = Parallel(n_jobs=config.jobs or -1)(
        delayed(probe_trace)(
            medium,
            model.mesh,
            omega,
            t,
            float(tau),
            config,
            scenario=scenario,
        )
        for tau in grid
    )
    samples = [
        _check_real(_pairing(model, trace.trace), logger, config.suppress_warnings)
        for trace in traces
    ]
    curve = IndicatorCurve(
        omega=omega,
        t=t,
        taus=grid,
        values=np.array([sample.value for sample in samples]),
        imag_residues=np.array([sample.imag_residual for sample in samples]),
        fit_errors=np.array([trace.fit_error for trace in traces]),
        trace_norms=np.array([trace.trace_norm for trace in traces]),
        noise_floors=np.array([sample.noise_floor for sample in samples]),
        alphas=np.array([trace.alpha for trace in traces]),
        flagged=np.array([trace.flagged for trace in traces]),
        omega_index=omega_index,
        basis_count=config.basis_count,
    )
    curve.classification = classify_decay(curve, config.slope_threshold, config.floor_threshold)
    logger.info(
        "level t=%.6g: %s (slope %.3g) over tau in [%.4g, %.4g]",
        t,
        curve.classification.value,
        curve.slope,
        grid[0],
        grid[-1],
        subtype="indicator",
        stats={
            "event": "curve",
            "omega": list(omega.omega),
            "t": t,
            "taus": grid.tolist(),
            "values": curve.values.tolist(),
            "slope": curve.slope,
            "classification": curve.classification.value,
        },
    )
    return curve


def fit_slope(taus: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of ``log|I|`` against ``log tau``."""
    if len(taus) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(taus), np.log(np.abs(values)), 1)
    return float(slope)


def classify_decay(
    curve: IndicatorCurve, slope_threshold: float = 1.0, floor_threshold: float = 0.1
) -> Classification:
    """Classify the large-``tau`` behaviour of a curve and store the fitted slope.

    Samples at or below their noise floor count as zero. A curve that ends at zero is
    DECAYS; otherwise the slope is fitted over the nonzero samples and

    - DECAYS if ``slope <= -slope_threshold`` and ``|I(tau_max)| < floor_threshold |I(tau_min)|``
    - PERSISTS if ``slope >= -0.25`` and ``|I(tau_max)| >= floor_threshold |I(tau_min)|``
    - UNDECIDED otherwise, or with fewer than 6 samples over 4 octaves
    """
    taus, values = curve.taus, curve.values
    if len(taus) < MIN_SAMPLES or math.log2(taus[-1] / taus[0]) < MIN_OCTAVES - 1e-9:
        curve.slope = math.nan
        return Classification.UNDECIDED
    floors = np.maximum(curve.noise_floors, np.finfo(float).tiny)
    alive = np.abs(values) > floors
    if not alive[-1]:
        curve.slope = -math.inf
        return Classification.DECAYS
    curve.slope = slope = fit_slope(taus[alive], values[alive])
    first = abs(values[0]) if alive[0] else float(floors[0])
    ratio = abs(values[-1]) / first
    if slope <= -slope_threshold and ratio < floor_threshold:
        return Classification.DECAYS
    if slope >= PERSIST_SLOPE and ratio >= floor_threshold:
        return Classification.PERSISTS
    return Classification.UNDECIDED


# stability of the extension


class ExtensionStability(TypedDict):
    """Indicator samples from a fit and a refit to half its misfit."""

    tau: float
    fit_error_coarse: float
    fit_error_fine: float
    basis_count_fine: int
    halved: bool
    """whether the refit reached half the coarse misfit"""
    value_coarse: float
    value_fine: float
    trace_norm: float
    constant: float
    """``|I_coarse - I_fine| / (fit_error_coarse (trace_norm + 1))``"""


class StabilityReport(TypedDict):
    audits: list[ExtensionStability]
    constant: float
    """the largest constant over the ``tau`` grid"""
    spread: float
    """ratio of the largest to the smallest positive constant"""


def stability_audit(
    model: ForwardModel,
    omega: Direction,
    t: float,
    tau: float,
    config: EnclosureConfig | None = None,
    *,
    max_doublings: int = 3,
) -> ExtensionStability:
    """Refit the probe to half its misfit and compare the indicator samples.

    The refit targets half the misfit of the configured fit and doubles the basis,
    at most ``max_doublings`` times, until it gets there.
    """
    config = config or EnclosureConfig()
    coarse = probe_trace(model.medium, model.mesh, omega, t, tau, config)
    target = max(coarse.fit_error / 2, np.finfo(float).eps)
    fine, count = coarse, config.basis_count
    for _ in range(max_doublings):
        if count >= MAX_BASIS_COUNT:
            break
        count = min(2 * count, MAX_BASIS_COUNT)
        refit = config.copy(basis_count=count, epsilon_target=target)
        fine = probe_trace(model.medium, model.mesh, omega, t, tau, refit)
        if fine.fit_error <= target:
            break
    value_coarse = _pairing(model, coarse.trace).value
    value_fine = _pairing(model, fine.trace).value
    scale = max(coarse.fit_error, np.finfo(float).eps) * (coarse.trace_norm + 1)
    return ExtensionStability(
        tau=tau,
        fit_error_coarse=coarse.fit_error,
        fit_error_fine=fine.fit_error,
        basis_count_fine=count,
        halved=bool(fine.fit_error <= target),
        value_coarse=value_coarse,
        value_fine=value_fine,
        trace_norm=coarse.trace_norm,
        constant=abs(value_coarse - value_fine) / scale,
    )


def stability_study(
    model: ForwardModel,
    omega: Direction,
    t: float,
    taus: Sequence[float],
    config: EnclosureConfig | None = None,
    *,
    logger: RunLogger | None = None,
) -> StabilityReport:
    """Audit the extension over a ``tau`` grid and fit one constant for all of it.

    Only refits that halved the misfit enter the constant and its spread.
    """
    logger = logger or get_run_logger(__name__, "probe")
    audits = [stability_audit(model, omega, t, float(tau), config) for tau in taus]
    constants = np.array([a["constant"] for a in audits if a["halved"]])
    positive = constants[constants > 0]
    constant = float(constants.max()) if len(constants) else math.nan
    spread = float(positive.max() / positive.min()) if len(positive) else math.nan
    logger.info(
        "extension stability at t=%.6g: constant %.3g, spread %.3g over %d of %d tau",
        t,
        constant,
        spread,
        len(constants),
        len(audits),
        subtype="runge",
        stats={"event": "stability", "t": t, "constant": constant, "spread": spread},
    )
    return StabilityReport(audits=audits, constant=constant, spread=spread)
