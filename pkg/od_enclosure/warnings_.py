"""Central handling of warnings for od-enclosure."""
from __future__ import annotations

from enum import Enum
import logging
from typing import Sequence

__all__ = [
    "WARNING_TYPE",
    "OdWarnings",
    "create_warning",
]

WARNING_TYPE = "odenc"


class OdWarnings(Enum):
    """od-enclosure warning types."""

    GUARD = "guard"
    """The non-eigenvalue guard margin is small"""

    RESOLUTION = "resolution"
    """A mesh or grid is close to its resolution limit"""

    FIT = "fit"
    """A Runge extension missed its target misfit"""
    IMAG_RESIDUE = "imag_residue"
    """An indicator sample has a large imaginary part"""
    DYNAMIC_RANGE = "dynamic_range"
    """The probe trace amplitude limits the indicator precision"""

    UNDECIDED = "undecided"
    """An indicator curve could not be classified"""
    DEGRADED = "degraded"
    """Too many directions were flagged during a reconstruction"""

    HYPOTHESIS = "hypothesis"
    """A declared medium bound is violated"""


def _is_suppressed_warning(type: str, subtype: str, suppress_warnings: Sequence[str]) -> bool:
    """Check whether the warning is suppressed or not.

    Entries are either ``type`` or ``type.subtype``, where the subtype may be ``*``.
    """
    subtarget: str | None

    for warning_type in suppress_warnings:
        if "." in warning_type:
            target, subtarget = warning_type.split(".", 1)
        else:
            target, subtarget = warning_type, None

        if target == type and subtarget in (None, subtype, "*"):
            return True

    return False


def create_warning(
    logger: logging.Logger | logging.LoggerAdapter,
    message: str,
    subtype: OdWarnings,
    *,
    suppress: Sequence[str] = (),
) -> str | None:
    """Log a warning, unless its ``odenc.subtype`` is suppressed.

    :returns: the logged message, or ``None`` if suppressed
    """
    if _is_suppressed_warning(WARNING_TYPE, subtype.value, suppress):
        return None
    message = f"{message} [{WARNING_TYPE}.{subtype.value}]"
    logger.warning(message)
    return message
