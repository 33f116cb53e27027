"""Energy identities and bounds linking the boundary pairing to interior integrals.

With ``u`` and ``u0`` the solutions with and without the inclusion for the same trace
``f``, ``w = u - u0`` and ``I = integral (Lambda_D - Lambda_0) f conj(f)``:

- ``I = Re integral_D (A~ - A0) grad u . conj(grad u0)``
- ``I = -integral A grad w . conj(grad w) + k^2 |w|^2``
  ``+ integral_D (A~ - A0) grad u0 . conj(grad u0)``
- ``I = integral A0 grad w . conj(grad w) - k^2 |w|^2``
  ``+ integral_D (A~ - A0) grad u . conj(grad u)``
- ``I <= k^2 |w|^2 + Lambda_hat integral_D |grad u0|^2``
- ``I >= c integral_D |grad u0|^2 - k^2 |w|^2`` with ``c`` the smallest eigenvalue of
  ``(A~ - A0) A~^-1 A0``

The discrete solutions satisfy all of them up to roundoff.
"""
from __future__ import annotations

import numpy as np
from typing_extensions import TypedDict

from od_enclosure.core.fem.mesh import Mesh
from od_enclosure.core.fem.solve import ForwardModel, interior_energy_terms
from od_enclosure.core.loggers import RunLogger, get_run_logger
from od_enclosure.core.medium import MediumSpec, jump_constant


class IdentityReport(TypedDict):
    """Both sides of the identities and bounds for one trace."""

    boundary: float
    """the indicator pairing ``I``"""
    imag_boundary: float
    oracle: float
    identity_full: float
    """the right-hand side written with ``A`` and ``u0``"""
    identity_background: float
    """the right-hand side written with ``A0`` and ``u``"""
    upper_bound: float
    lower_bound: float
    jump_constant: float
    lambda_hat: float
    friedrichs_ratio: float
    """``||w|| / ||grad w||``"""
    discrepancy_oracle: float
    discrepancy_full: float
    discrepancy_background: float
    upper_slack: float
    lower_slack: float


def random_traces(mesh: Mesh, count: int, seed: int = 0, modes: int = 8) -> np.ndarray:
    """Smooth random complex traces on the boundary loop, shape ``(n_boundary, count)``.

    Fourier modes in the normalised arclength, with amplitudes decaying like ``1/m^2``.
    """
    rng = np.random.default_rng(seed)
    loop = mesh.nodes[mesh.boundary_nodes]
    steps = np.linalg.norm(np.roll(loop, -1, axis=0) - loop, axis=1)
    arclength = np.concatenate([[0.0], np.cumsum(steps)[:-1]]) / steps.sum()
    m = np.arange(modes + 1)
    phases = 2 * np.pi * np.outer(arclength, m)
    weights = 1.0 / (1.0 + m) ** 2
    shape = (modes + 1, count)
    cosine = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * weights[:, None]
    sine = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * weights[:, None]
    return np.cos(phases) @ cosine + np.sin(phases) @ sine


def _relative(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, np.finfo(float).tiny)


def identity_report(model: ForwardModel, f: np.ndarray) -> IdentityReport:
    """Evaluate every identity and bound for the trace ``f``."""
    pair = model.synthesize(np.asarray(f))
    terms = interior_energy_terms(model, pair)
    k2 = model.medium.k**2
    inside = model.mesh.inclusion_flags
    if inside.any():
        background = model.background.tensors[inside]
        tilde = model.full.tensors[inside]
        lambda_hat = float(np.linalg.eigvalsh(tilde - background).max())
        constant = jump_constant(background, tilde)
    else:
        lambda_hat = constant = 0.0

    boundary = terms["boundary"]
    identity_full = -terms["energy_w"] + k2 * terms["mass_w"] + terms["jump_u0"]
    identity_background = terms["background_energy_w"] - k2 * terms["mass_w"] + terms["jump_u"]
    upper = k2 * terms["mass_w"] + lambda_hat * terms["gradient_u0_inclusion"]
    lower = constant * terms["gradient_u0_inclusion"] - k2 * terms["mass_w"]
    scale = max(
        abs(boundary.real),
        terms["energy_w"],
        k2 * terms["mass_w"],
        abs(terms["jump_u0"]),
        abs(terms["jump_u"]),
    )
    gradient_w = terms["gradient_w"]
    return IdentityReport(
        boundary=boundary.real,
        imag_boundary=boundary.imag,
        oracle=terms["oracle"],
        identity_full=identity_full,
        identity_background=identity_background,
        upper_bound=upper,
        lower_bound=lower,
        jump_constant=constant,
        lambda_hat=lambda_hat,
        friedrichs_ratio=float(np.sqrt(terms["mass_w"] / gradient_w)) if gradient_w > 0 else 0.0,
        discrepancy_oracle=_relative(boundary.real, terms["oracle"], scale),
        discrepancy_full=_relative(boundary.real, identity_full, scale),
        discrepancy_background=_relative(boundary.real, identity_background, scale),
        upper_slack=(upper - boundary.real) / max(scale, np.finfo(float).tiny),
        lower_slack=(boundary.real - lower) / max(scale, np.finfo(float).tiny),
    )


def identity_suite(
    medium: MediumSpec,
    mesh: Mesh,
    traces: np.ndarray,
    *,
    model: ForwardModel | None = None,
    logger: RunLogger | None = None,
) -> list[IdentityReport]:
    """Run :func:`identity_report` on each column of ``traces``.

    :raises EigenvalueGuardError: if either medium fails the guard
    """
    logger = logger or get_run_logger(__name__, "identities")
    model = model or ForwardModel(medium, mesh, logger=logger)
    model.check_guards()
    traces = np.asarray(traces).reshape(len(mesh.boundary_nodes), -1)
    reports = [identity_report(model, traces[:, j]) for j in range(traces.shape[1])]
    worst = max(
        (
            max(r["discrepancy_oracle"], r["discrepancy_full"], r["discrepancy_background"])
            for r in reports
        ),
        default=0.0,
    )
    logger.info(
        "identity suite on %d traces: largest relative discrepancy %.3g",
        len(reports),
        worst,
        subtype="identities",
        stats={
            "event": "identities",
            "traces": len(reports),
            "worst_discrepancy": worst,
            "min_upper_slack": min((r["upper_slack"] for r in reports), default=0.0),
            "min_lower_slack": min((r["lower_slack"] for r in reports), default=0.0),
        },
    )
    return reports
