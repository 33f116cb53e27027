"""Run directories and the files written into them.

Every command writes into ``<out>/<UTC timestamp>-<scenario name>/``:
``manifest.json`` (provenance and timing), ``results.json`` (deterministic for a fixed
scenario and seed), CSV tables and, for reconstructions, an SVG overlay.
``<out>/latest.json`` names the newest run.
"""
from __future__ import annotations

import csv
import dataclasses as dc
from datetime import datetime, timezone
import json
import math
from pathlib import Path
import platform
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from od_enclosure import __version__
from od_enclosure.core.geometry import PolygonalDomain

INDICATOR_COLUMNS = (
    "omega_index",
    "omega_x",
    "omega_y",
    "t",
    "tau",
    "I",
    "Im_residual",
    "fit_error",
)
FIT_COLUMNS = (
    "omega_index",
    "t",
    "tau",
    "basis_count",
    "alpha",
    "fit_error",
    "trace_norm",
    "flagged",
)
SUPPORT_COLUMNS = ("omega_index", "omega_x", "omega_y", "h", "h_true", "flagged", "bracket_width")
STABILITY_COLUMNS = (
    "tau",
    "fit_error_coarse",
    "fit_error_fine",
    "basis_count_fine",
    "halved",
    "value_coarse",
    "value_fine",
    "trace_norm",
    "constant",
)
IDENTITY_COLUMNS = (
    "probe",
    "boundary",
    "oracle",
    "identity_full",
    "identity_background",
    "upper_bound",
    "lower_bound",
    "discrepancy_oracle",
    "discrepancy_full",
    "discrepancy_background",
    "upper_slack",
    "lower_slack",
    "friedrichs_ratio",
)


def format_number(value: Any) -> str:
    """Floats with 17 significant digits, everything else as ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def jsonable(data: Any) -> Any:
    """Convert numpy values and non-finite floats (to ``null``) for JSON output."""
    if isinstance(data, Mapping):
        return {str(key): jsonable(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [jsonable(value) for value in data]
    if isinstance(data, np.ndarray):
        return jsonable(data.tolist())
    if isinstance(data, (bool, np.bool_)):
        return bool(data)
    if isinstance(data, (int, np.integer)):
        return int(data)
    if isinstance(data, (float, np.floating)):
        return float(data) if math.isfinite(data) else None
    if isinstance(data, (complex, np.complexfloating)):
        return [jsonable(data.real), jsonable(data.imag)]
    if isinstance(data, Path):
        return data.as_posix()
    return data


def dumps(data: Any) -> str:
    return json.dumps(jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, data: Any) -> Path:
    path.write_text(dumps(data), encoding="utf8")
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write rows with the given columns, numbers at 17 significant digits."""
    with path.open("w", encoding="utf8", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n"
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({name: format_number(row.get(name)) for name in columns})
    return path


def _svg_polygon(shape: PolygonalDomain, to_svg, style: str) -> str:
    if shape.is_empty:
        return ""
    points = " ".join(f"{x:.6f},{y:.6f}" for x, y in (to_svg(p) for p in shape.vertices))
    return f'  <polygon points="{points}" {style}/>\n'


def hull_svg(
    domain: PolygonalDomain,
    inclusion: PolygonalDomain,
    recovered: PolygonalDomain,
    size: int = 480,
) -> str:
    """An SVG overlay of the domain, the inclusion, its convex hull and the recovered hull."""
    xmin, ymin = domain.array.min(axis=0)
    xmax, ymax = domain.array.max(axis=0)
    scale = (size - 20) / max(xmax - xmin, ymax - ymin)

    def to_svg(point) -> tuple[float, float]:
        # svg y grows downwards
        return 10 + (point[0] - xmin) * scale, size - 10 - (point[1] - ymin) * scale

    hull = inclusion.convex_hull() if not inclusion.is_empty else inclusion
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        + _svg_polygon(domain, to_svg, 'fill="none" stroke="black" stroke-width="1"')
        + _svg_polygon(inclusion, to_svg, 'fill="#9ecae1" stroke="none"')
        + _svg_polygon(hull, to_svg, 'fill="none" stroke="#3182bd" stroke-dasharray="4 2"')
        + _svg_polygon(recovered, to_svg, 'fill="none" stroke="#e6550d" stroke-width="2"')
        + "</svg>\n"
    )


def utc_stamp(now: datetime | None = None) -> str:
    now = now or datetime.now(timezone.utc)
    return now.astimezone(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


@dc.dataclass
class RunDirectory:
    """The output directory of one command invocation."""

    path: Path
    command: str
    scenario: str
    started: datetime = dc.field(default_factory=lambda: datetime.now(timezone.utc))

    @classmethod
    def create(
        cls, out: str | Path, command: str, scenario: str, now: datetime | None = None
    ) -> RunDirectory:
        """Create a fresh ``<out>/<UTC timestamp>-<scenario>`` directory.

        A numeric suffix is appended when two runs start within the same second.
        """
        out = Path(out)
        started = now or datetime.now(timezone.utc)
        base = f"{utc_stamp(started)}-{scenario}"
        path = out / base
        suffix = 1
        while path.exists():
            path = out / f"{base}-{suffix}"
            suffix += 1
        path.mkdir(parents=True)
        return cls(path=path, command=command, scenario=scenario, started=started)

    def file(self, name: str) -> Path:
        return self.path / name

    def write_json(self, name: str, data: Any) -> Path:
        return write_json(self.file(name), data)

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]):
        return write_csv(self.file(name), columns, rows)

    def write_text(self, name: str, text: str) -> Path:
        path = self.file(name)
        path.write_text(text, encoding="utf8")
        return path

    def write_manifest(
        self,
        *,
        scenario_hash: str,
        config: Mapping[str, Any],
        seed: int,
        files: Sequence[str],
        extra: Mapping[str, Any] | None = None,
    ) -> Path:
        """Write ``manifest.json`` with provenance, timing and the list of files."""
        finished = datetime.now(timezone.utc)
        manifest = {
            "command": self.command,
            "scenario": self.scenario,
            "scenario_hash": scenario_hash,
            "seed": seed,
            "config": config,
            "files": sorted(files),
            "version": __version__,
            "python": platform.python_version(),
            "started_utc": self.started.isoformat(),
            "finished_utc": finished.isoformat(),
            "seconds": (finished - self.started).total_seconds(),
            **(extra or {}),
        }
        return self.write_json("manifest.json", manifest)

    def mark_latest(self) -> Path:
        """Point ``<out>/latest.json`` at this run."""
        latest = self.path.parent / "latest.json"
        return write_json(
            latest,
            {"run": self.path.name, "command": self.command, "scenario": self.scenario},
        )
