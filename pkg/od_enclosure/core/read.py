"""Reading scenario files.

A scenario is one YAML, JSON or TOML file (the format follows the suffix)
describing the domain, the inclusion, both tensor fields, the wavenumber
and optional configuration overrides::

    name: S1
    seed: 7
    domain: {rectangle: {lower: [0, 0], upper: [1, 1]}}
    inclusion: {disk: {center: [0.5, 0.6], radius: 0.15, n: 64}}
    background: {constant: [[1, 0], [0, 1]]}
    inclusion_tensor: {rotated: {eigenvalues: [3, 6], angle: 0.3}}
    k: 1.0
    bounds: {lambda0: 1.0, lambda_hat: 1.0}
    config: {h_mesh: 0.0078125, n_omega: 16}
"""
from __future__ import annotations

import dataclasses as dc
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Mapping

import yaml

from od_enclosure._compat import tomllib
from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem.mesh import Mesh, MeshError, generate_mesh
from od_enclosure.core.geometry import (
    GeometryError,
    PolygonalDomain,
    polygon_from_json,
    rectangle,
    regular_polygon,
)
from od_enclosure.core.medium import (
    HypothesisError,
    HypothesisReport,
    MediumError,
    MediumSpec,
    tensor_from_json,
    verify_hypotheses,
)

SCENARIO_KEYS = (
    "name",
    "seed",
    "domain",
    "inclusion",
    "background",
    "inclusion_tensor",
    "k",
    "bounds",
    "config",
    "description",
)
"""Top-level keys a scenario may contain."""

DISK_VERTICES = 64


class ScenarioError(ValueError):
    """A scenario file that cannot be read or describes an invalid problem."""


def _load_text(text: str, suffix: str) -> Any:
    if suffix in (".yml", ".yaml"):
        return yaml.safe_load(text)
    if suffix == ".json":
        return json.loads(text)
    if suffix == ".toml":
        return tomllib.loads(text)
    raise ScenarioError(f"unknown scenario format {suffix!r} (use .yaml, .json or .toml)")


def shape_from_json(data: Any, what: str = "shape") -> PolygonalDomain:
    """Read a polygon descriptor.

    Accepted forms are ``null`` (the empty polygon), a list of ``[x, y]`` vertices,
    ``{"polygon": [...]}``, ``{"rectangle": {"lower", "upper"}}``,
    ``{"disk": {"center", "radius", "n"}}`` (an inscribed regular polygon) and
    ``{"square": {"center", "side", "angle"}}``.

    :raises ScenarioError: for a malformed descriptor
    """
    try:
        if data is None:
            return PolygonalDomain.empty()
        if isinstance(data, (list, tuple)):
            return polygon_from_json(data)
        if not isinstance(data, Mapping) or len(data) != 1:
            raise ScenarioError(f"{what} descriptor must have exactly one key: {data!r}")
        (kind, body), = data.items()
        if kind == "polygon":
            return polygon_from_json(body)
        if kind == "rectangle":
            return rectangle(body["lower"], body["upper"])
        if kind == "disk":
            return regular_polygon(
                tuple(body["center"]), float(body["radius"]), int(body.get("n", DISK_VERTICES))
            )
        if kind == "square":
            side = float(body["side"])
            phase = math.pi / 4 + float(body.get("angle", 0.0))
            return regular_polygon(tuple(body["center"]), side / math.sqrt(2), 4, phase)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed {what} descriptor: {exc}") from exc
    raise ScenarioError(f"unknown {what} kind {kind!r}")


def canonical_json(data: Any) -> str:
    """Serialise with sorted keys and no whitespace, so equal content gives equal text."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dc.dataclass(frozen=True)
class Scenario:
    """A validated scenario: the medium, the run configuration and provenance."""

    name: str
    seed: int
    medium: MediumSpec
    config: EnclosureConfig
    data: Mapping[str, Any] = dc.field(repr=False, compare=False)
    """The raw mapping the scenario was read from."""
    source: Path | None = None

    @property
    def content_hash(self) -> str:
        """The sha256 of the canonical JSON of the raw mapping."""
        return hashlib.sha256(canonical_json(self.data).encode("utf8")).hexdigest()

    def with_config(self, **changes: Any) -> Scenario:
        """Return the scenario with configuration overrides applied."""
        if not changes:
            return self
        try:
            config = self.config.copy(**changes)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid configuration override: {exc}") from exc
        return dc.replace(self, config=config)

    def forward_mesh(self) -> Mesh:
        """Mesh the domain at ``config.h_mesh``, fitted to the inclusion boundary.

        :raises ScenarioError: if meshing fails
        """
        try:
            return generate_mesh(self.medium.domain, self.config.h_mesh, self.medium.inclusion)
        except MeshError as exc:
            raise ScenarioError(f"cannot mesh scenario {self.name!r}: {exc}") from exc

    def check_hypotheses(self, mesh: Mesh) -> HypothesisReport:
        """Verify ellipticity and jump bounds on the mesh quadrature points.

        :raises HypothesisError: if a hypothesis fails
        """
        points, _, _ = mesh.quadrature(2)
        report = verify_hypotheses(self.medium, points.reshape(-1, 2), seed=self.seed)
        if not report["passed"]:
            raise HypothesisError("; ".join(report["failures"]), report)
        return report


def scenario_from_mapping(
    data: Mapping[str, Any], name: str | None = None, source: Path | None = None
) -> Scenario:
    """Validate a scenario mapping.

    :param name: the fallback name if the mapping has none
    :raises ScenarioError: for unknown keys, malformed descriptors or an invalid configuration
    """
    if not isinstance(data, Mapping):
        raise ScenarioError(f"a scenario must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(SCENARIO_KEYS))
    if unknown:
        raise ScenarioError(f"unknown scenario key(s): {', '.join(unknown)}")
    for key in ("domain", "background"):
        if key not in data:
            raise ScenarioError(f"missing scenario key {key!r}")

    scenario_name = str(data.get("name") or name or "scenario")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError(f"'seed' must be a non-negative integer (got {seed!r})")

    domain = shape_from_json(data["domain"], "domain")
    if domain.is_empty:
        raise ScenarioError("the domain is empty")
    inclusion = shape_from_json(data.get("inclusion"), "inclusion")
    try:
        a0 = tensor_from_json(data["background"])
        a_tilde = None
        if data.get("inclusion_tensor") is not None:
            a_tilde = tensor_from_json(data["inclusion_tensor"])
        medium = MediumSpec(
            domain=domain,
            a0=a0,
            a_tilde=a_tilde,
            inclusion=inclusion,
            k=float(data.get("k", 0.0)),
            bounds={str(key): float(value) for key, value in (data.get("bounds") or {}).items()},
        )
    except (MediumError, GeometryError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid medium: {exc}") from exc

    try:
        config = EnclosureConfig.from_mapping(data.get("config") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid configuration: {exc}") from exc

    return Scenario(
        name=scenario_name, seed=seed, medium=medium, config=config, data=data, source=source
    )


def read_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file.

    :raises ScenarioError: if the file is missing, cannot be parsed or is invalid
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {exc}") from exc
    try:
        data = _load_text(text, path.suffix.lower())
        # a JSON round trip normalises YAML and TOML values for hashing
        data = json.loads(canonical_json(data))
    except (yaml.YAMLError, json.JSONDecodeError, tomllib.TOMLDecodeError, TypeError) as exc:
        raise ScenarioError(f"cannot parse scenario {str(path)!r}: {exc}") from exc
    return scenario_from_mapping(data, name=path.stem, source=path)

