"""Configuration for od-enclosure runs."""
from __future__ import annotations

import dataclasses as dc
from enum import Enum
from typing import Any, Iterable, Literal, Mapping, Optional, Sequence, Tuple

from myst_parser.config.dc_validators import (
    ValidatorType,
    deep_iterable,
    in_,
    instance_of,
    optional,
    validate_fields,
)

NUMBER = (int, float)


def positive(inst, field: dc.Field, value, suffix="") -> None:
    """Validate that a number is strictly positive."""
    if value is not None and not value > 0:
        raise ValueError(f"'{suffix}{field.name}' must be positive (got {value!r})")


def in_range(low: float, high: float) -> ValidatorType:
    """A validator for a closed numeric interval.

    :param low: the smallest allowed value
    :param high: the largest allowed value
    """

    def _validator(inst, field: dc.Field, value, suffix=""):
        if value is not None and not low <= value <= high:
            raise ValueError(f"'{suffix}{field.name}' must be in [{low}, {high}] (got {value!r})")

    return _validator


def amplitude_converter(value: Any) -> complex:
    """Convert a number or a ``[re, im]`` pair to a complex amplitude."""
    if isinstance(value, complex):
        return value
    if isinstance(value, NUMBER) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, Sequence) and not isinstance(value, str) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise TypeError(f"`amplitude_b` must be a number or a [re, im] pair: {value!r}")


def nonzero(inst, field: dc.Field, value, suffix="") -> None:
    """Validate that a number is not zero."""
    if value == 0:
        raise ValueError(f"'{suffix}{field.name}' must be nonzero")


class Section(Enum):
    """Config section tags."""

    mesh = "mesh"
    """Meshing and forward solves."""
    probe = "probe"
    """Oscillating-decaying probe construction."""
    runge = "runge"
    """Extension of probes to global solutions."""
    classify = "classify"
    """Indicator curve classification."""
    scan = "scan"
    """Support function scans and hull assembly."""
    output = "output"
    """Logging, artifacts and execution."""


@dc.dataclass()
class EnclosureConfig:
    """Tunable options of a reconstruction run.

    Scenario files set these under their ``config`` key,
    command-line flags override them afterwards.
    """

    def __post_init__(self):
        self.amplitude_b = amplitude_converter(self.amplitude_b)
        if self.tau_grid is not None:
            self.tau_grid = tuple(float(tau) for tau in self.tau_grid)
        self.suppress_warnings = tuple(self.suppress_warnings)
        validate_fields(self)
        if self.tau_max <= self.tau_min:
            raise ValueError("'tau_max' must be larger than 'tau_min'")

    # meshing

    h_mesh: float = dc.field(
        default=1 / 64,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Target element diameter of the forward mesh",
            "sections": (Section.mesh,),
        },
    )
    guard_tolerance: float = dc.field(
        default=1e-3,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Smallest relative distance of k^2 to the discrete Dirichlet spectrum",
            "sections": (Section.mesh,),
        },
    )
    slice_nodes_per_wavelength: int = dc.field(
        default=10,
        metadata={
            "validator": [instance_of(int), in_range(10, 100)],
            "help": "Slice mesh nodes per oscillation wavelength 2pi/tau",
            "sections": (Section.mesh, Section.probe),
        },
    )

    # probes

    order: int = dc.field(
        default=2,
        metadata={
            "validator": in_([0, 1, 2, 3, 4]),
            "help": "Number of transport corrections N",
            "sections": (Section.probe,),
        },
    )
    tau_min: float = dc.field(
        default=20.0,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Smallest tau, in units of 1/diam(domain)",
            "sections": (Section.probe, Section.classify),
        },
    )
    tau_max: float = dc.field(
        default=320.0,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Largest tau, in units of 1/diam(domain)",
            "sections": (Section.probe, Section.classify),
        },
    )
    tau_points: int = dc.field(
        default=6,
        metadata={
            "validator": [instance_of(int), in_range(2, 64)],
            "help": "Number of geometric tau samples per indicator curve",
            "sections": (Section.probe, Section.classify),
        },
    )
    tau_grid: Optional[Tuple[float, ...]] = dc.field(
        default=None,
        metadata={
            "validator": optional(deep_iterable(instance_of(NUMBER))),
            "help": "Explicit absolute tau grid (overrides tau_min/tau_max/tau_points)",
            "sections": (Section.probe, Section.classify),
        },
    )
    amplification_budget: float = dc.field(
        default=12.0,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Largest tau * decay * growth length allowed for extended probes",
            "sections": (Section.probe,),
        },
    )
    chi_plateau: float = dc.field(
        default=0.8,
        metadata={
            "validator": [instance_of(NUMBER), in_range(0.1, 0.95)],
            "help": "Fraction of the slice cross-section on which the cutoff equals one",
            "sections": (Section.probe,),
        },
    )
    amplitude_b: complex = dc.field(
        default=1 + 0j,
        metadata={
            "validator": [instance_of(complex), nonzero],
            "help": "Complex probe amplitude b",
            "sections": (Section.probe,),
        },
    )
    xi_sign: int = dc.field(
        default=1,
        metadata={
            "validator": in_([1, -1]),
            "help": "Oscillation direction xi = xi_sign * eta",
            "sections": (Section.probe,),
        },
    )
    chain_points: int = dc.field(
        default=2048,
        metadata={
            "validator": [instance_of(int), in_range(128, 65536)],
            "help": "Tangential grid points of the transport chain",
            "sections": (Section.probe,),
        },
    )

    # runge extension

    basis_kind: Literal["evanescent", "plane-wave", "fundamental-solution"] = dc.field(
        default="evanescent",
        metadata={
            "validator": in_(["evanescent", "plane-wave", "fundamental-solution"]),
            "help": "Family of exact background solutions used for extension",
            "sections": (Section.runge,),
        },
    )
    basis_count: int = dc.field(
        default=96,
        metadata={
            "validator": [instance_of(int), in_range(16, 4096)],
            "help": "Number of basis elements",
            "sections": (Section.runge,),
        },
    )
    epsilon_target: float = dc.field(
        default=5e-2,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Largest accepted relative H1(K) misfit of an extension",
            "sections": (Section.runge,),
        },
    )
    k_region_depth: float = dc.field(
        default=3.0,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Depth of the fit region K, in units of 1/(tau * decay)",
            "sections": (Section.runge,),
        },
    )
    k_region_inflation: float = dc.field(
        default=0.2,
        metadata={
            "validator": [instance_of(NUMBER), in_range(0.0, 2.0)],
            "help": "Relative inflation of the inclusion bounding box defining K",
            "sections": (Section.runge,),
        },
    )

    # classification

    slope_threshold: float = dc.field(
        default=1.0,
        metadata={
            "validator": [instance_of(NUMBER), positive],
            "help": "Decay is declared below slope -slope_threshold",
            "sections": (Section.classify,),
        },
    )
    floor_threshold: float = dc.field(
        default=0.1,
        metadata={
            "validator": [instance_of(NUMBER), in_range(0.0, 1.0)],
            "help": "Relative size of |I(tau_max)| separating decay and persistence",
            "sections": (Section.classify,),
        },
    )

    # scans

    n_omega: int = dc.field(
        default=16,
        metadata={
            "validator": [instance_of(int), in_range(8, 1024)],
            "help": "Number of equispaced directions of a reconstruction",
            "sections": (Section.scan,),
        },
    )
    coarse_dt: Optional[float] = dc.field(
        default=None,
        metadata={
            "validator": [optional(instance_of(NUMBER)), positive],
            "help": "Coarse scan step in t (default: 0.05 * diam(domain))",
            "sections": (Section.scan,),
        },
    )

    # output

    jobs: Optional[int] = dc.field(
        default=None,
        metadata={
            "validator": [optional(instance_of(int)), nonzero],
            "help": "Worker processes for sweeps (default: all cores)",
            "sections": (Section.output,),
        },
    )
    suppress_warnings: Sequence[str] = dc.field(
        default=(),
        metadata={
            "validator": deep_iterable(instance_of(str)),
            "help": "Warnings to silence, as odenc.<subtype>",
            "sections": (Section.output,),
        },
    )

    @classmethod
    def get_fields(cls) -> Tuple[dc.Field, ...]:
        return dc.fields(cls)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> EnclosureConfig:
        """Create a configuration from a mapping, rejecting unknown keys."""
        names = {field.name for field in dc.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise KeyError(f"unknown configuration key(s): {', '.join(unknown)}")
        return cls(**data)

    def as_dict(self, dict_factory=dict) -> dict:
        return dc.asdict(self, dict_factory=dict_factory)

    def as_json(self) -> dict[str, Any]:
        """Return a JSON-serialisable dict of the configuration."""
        data = self.as_dict()
        data["amplitude_b"] = [self.amplitude_b.real, self.amplitude_b.imag]
        data["tau_grid"] = None if self.tau_grid is None else list(self.tau_grid)
        data["suppress_warnings"] = list(self.suppress_warnings)
        return data

    def as_triple(self) -> Iterable[Tuple[str, Any, dc.Field]]:
        """Yield triples of (name, value, field)."""
        fields = {f.name: f for f in dc.fields(self.__class__)}
        for name, value in dc.asdict(self).items():
            yield name, value, fields[name]

    def copy(self, **changes) -> EnclosureConfig:
        """Return a copy of the configuration with optional changes applied."""
        return dc.replace(self, **changes)

    def __getitem__(self, field: str) -> Any:
        """Get a field value by name."""
        if field in ("get_fields", "from_mapping", "as_dict", "as_json", "as_triple", "copy"):
            raise KeyError(field)
        try:
            return getattr(self, field)
        except AttributeError:
            raise KeyError(field)

    def fields_in(self, section: Section) -> dict[str, Any]:
        """Return the field values tagged with a section."""
        return {
            name: value
            for name, value, field in self.as_triple()
            if section in field.metadata.get("sections", ())
        }
