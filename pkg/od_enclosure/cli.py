"""The ``odenc`` command line: checks, probes, scans and reconstructions of scenarios."""
from __future__ import annotations

import argparse
import dataclasses as dc
import json
import logging
import sys
from typing import Any, Callable, Sequence

from od_enclosure import __version__
from od_enclosure.core.artifacts import (
    FIT_COLUMNS,
    IDENTITY_COLUMNS,
    INDICATOR_COLUMNS,
    STABILITY_COLUMNS,
    SUPPORT_COLUMNS,
    RunDirectory,
    hull_svg,
)
from od_enclosure.core.fem.mesh import Mesh
from od_enclosure.core.fem.solve import EigenvalueGuardError, ForwardModel
from od_enclosure.core.geometry import (
    Direction,
    GeometryError,
    equispaced_directions,
    hausdorff_distance,
    polygon_to_json,
    support_function_true,
)
from od_enclosure.core.identities import identity_suite, random_traces
from od_enclosure.core.indicator import sample_curve, stability_study
from od_enclosure.core.loggers import JsonLinesHandler, RunLogger, get_run_logger
from od_enclosure.core.medium import HypothesisError
from od_enclosure.core.read import Scenario, ScenarioError, read_scenario
from od_enclosure.core.reconstruct import DirectionEstimate, estimate_support, reconstruct_hull

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICAL = 4

COMMANDS = ("check", "probe", "scan", "reconstruct", "identities")


def _tau_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(value) for value in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid tau grid {text!r}: {exc}") from exc
    if not grid:
        raise argparse.ArgumentTypeError("the tau grid is empty")
    return grid


def create_cli() -> argparse.ArgumentParser:
    cli = argparse.ArgumentParser(
        prog="odenc",
        description="Reconstruct the convex hull of an anisotropic inclusion "
        "from simulated Dirichlet-to-Neumann data.",
    )
    cli.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = cli.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "check": "Verify the medium hypotheses and the eigenvalue guard.",
        "probe": "Sample one indicator curve at (omega, t).",
        "scan": "Estimate the support function along one direction.",
        "reconstruct": "Reconstruct the convex hull from all directions.",
        "identities": "Check the energy identities on random boundary data.",
    }
    for name in COMMANDS:
        sub = commands.add_parser(name, help=helps[name], description=helps[name])
        sub.add_argument(
            "--scenario", required=True, metavar="PATH", help="Scenario file (.yaml/.json/.toml)"
        )
        sub.add_argument("--out", default="runs", metavar="DIR", help="Output root directory")
        sub.add_argument("--jobs", type=int, default=None, help="Worker processes")
        sub.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
        sub.add_argument("-v", "--verbose", action="store_true", help="Increase verbosity.")
        if name in ("probe", "scan", "reconstruct"):
            sub.add_argument(
                "--tau-grid",
                type=_tau_grid,
                default=None,
                help="Explicit tau values, comma separated",
            )
            sub.add_argument("--n-omega", type=int, default=None, help="Number of directions")
            sub.add_argument("--order", type=int, default=None, metavar="N", help="Transport order")
            sub.add_argument(
                "--basis-kind",
                choices=("evanescent", "plane-wave", "fundamental-solution"),
                default=None,
                help="Extension basis",
            )
        if name in ("probe", "scan"):
            sub.add_argument(
                "--omega-index", type=int, default=0, help="Index into the equispaced directions"
            )
        if name == "probe":
            sub.add_argument("--t", type=float, required=True, help="Probe level x.omega = t")
            sub.add_argument(
                "--stability",
                action="store_true",
                help="Refit every sample to half its misfit and compare the indicator",
            )
        if name == "identities":
            sub.add_argument("--count", type=int, default=20, help="Number of random traces")
    return cli


def _overrides(namespace: argparse.Namespace) -> dict[str, Any]:
    names = ("jobs", "tau_grid", "n_omega", "order", "basis_kind")
    return {
        name: getattr(namespace, name)
        for name in names
        if getattr(namespace, name, None) is not None
    }


def _direction(scenario: Scenario, index: int) -> Direction:
    count = scenario.config.n_omega
    if not 0 <= index < count:
        raise ScenarioError(f"--omega-index must be in [0, {count}), got {index}")
    return equispaced_directions(count)[index]


def _true_support(scenario: Scenario, omega: Direction) -> float | None:
    inclusion = scenario.medium.inclusion
    if inclusion.is_empty or scenario.medium.is_null:
        return None
    return support_function_true(inclusion, omega)


def _support_row(estimate: DirectionEstimate, h_true: float | None) -> dict[str, Any]:
    width = None if estimate.bracket is None else estimate.bracket[1] - estimate.bracket[0]
    return {
        "omega_index": estimate.omega_index,
        "omega_x": estimate.omega.omega[0],
        "omega_y": estimate.omega.omega[1],
        "h": estimate.h,
        "h_true": h_true,
        "flagged": estimate.flagged,
        "bracket_width": width,
    }


@dc.dataclass
class _Run:
    """Everything a command needs: the scenario, its mesh and forward model, and outputs."""

    scenario: Scenario
    mesh: Mesh
    model: ForwardModel
    directory: RunDirectory
    logger: RunLogger
    namespace: argparse.Namespace
    files: list[str] = dc.field(default_factory=list)

    def csv(self, name: str, columns: Sequence[str], rows) -> None:
        self.directory.write_csv(name, columns, rows)
        self.files.append(name)

    def json(self, name: str, data: Any) -> None:
        self.directory.write_json(name, data)
        self.files.append(name)

    def text(self, name: str, text: str) -> None:
        self.directory.write_text(name, text)
        self.files.append(name)


def run_check(run: _Run) -> dict[str, Any]:
    full, background = run.model.check_guards()
    return {
        "hypotheses": run.scenario.check_hypotheses(run.mesh),
        "guard_full": full,
        "guard_background": background,
        "mesh": {
            "nodes": run.mesh.n_nodes,
            "elements": run.mesh.n_elements,
            "h": run.mesh.h_mesh,
        },
        "is_null": run.scenario.medium.is_null,
    }


def run_probe(run: _Run) -> dict[str, Any]:
    namespace, config = run.namespace, run.scenario.config
    omega = _direction(run.scenario, namespace.omega_index)
    run.model.check_guards()
    curve = sample_curve(
        run.model, omega, namespace.t, config, omega_index=namespace.omega_index, logger=run.logger
    )
    run.csv("indicator.csv", INDICATOR_COLUMNS, curve.rows())
    run.csv("fit_diagnostics.csv", FIT_COLUMNS, curve.fit_rows())
    result = {"omega_index": namespace.omega_index, "curve": curve.as_dict()}
    if namespace.stability:
        report = stability_study(
            run.model, omega, namespace.t, curve.taus, config, logger=run.logger
        )
        run.csv("stability.csv", STABILITY_COLUMNS, report["audits"])
        result["stability"] = {"constant": report["constant"], "spread": report["spread"]}
    return result


def run_scan(run: _Run) -> dict[str, Any]:
    namespace, config = run.namespace, run.scenario.config
    omega = _direction(run.scenario, namespace.omega_index)
    run.model.check_guards()
    estimate = estimate_support(
        run.model, omega, config, omega_index=namespace.omega_index, logger=run.logger
    )
    h_true = _true_support(run.scenario, omega)
    run.csv("support.csv", SUPPORT_COLUMNS, [_support_row(estimate, h_true)])
    run.csv("indicator.csv", INDICATOR_COLUMNS, [r for c in estimate.curves for r in c.rows()])
    run.csv(
        "fit_diagnostics.csv", FIT_COLUMNS, [r for c in estimate.curves for r in c.fit_rows()]
    )
    return {"estimate": estimate.as_dict(), "h_true": h_true}


def run_reconstruct(run: _Run) -> dict[str, Any]:
    scenario = run.scenario
    support, estimates = reconstruct_hull(run.model, scenario.config, logger=run.logger)
    rows = [_support_row(e, _true_support(scenario, e.omega)) for e in estimates]
    run.csv("support.csv", SUPPORT_COLUMNS, rows)
    inclusion = scenario.medium.inclusion
    distance = None
    if not support.empty and not inclusion.is_empty:
        distance = hausdorff_distance(support.hull, inclusion.convex_hull(), run.mesh.h_mesh)
    run.text("hull.svg", hull_svg(scenario.medium.domain, inclusion, support.hull))
    return {
        "hull": polygon_to_json(support.hull),
        "empty": support.empty,
        "no_inclusion": support.no_inclusion,
        "degraded": support.degraded,
        "hausdorff_distance": distance,
        "true_hull": None if inclusion.is_empty else polygon_to_json(inclusion.convex_hull()),
        "directions": support.diagnostics,
    }


def run_identities(run: _Run) -> dict[str, Any]:
    traces = random_traces(run.mesh, run.namespace.count, seed=run.scenario.seed)
    reports = identity_suite(
        run.scenario.medium, run.mesh, traces, model=run.model, logger=run.logger
    )
    run.csv(
        "identities.csv",
        IDENTITY_COLUMNS,
        [{"probe": index, **report} for index, report in enumerate(reports)],
    )
    worst = max(
        max(r["discrepancy_oracle"], r["discrepancy_full"], r["discrepancy_background"])
        for r in reports
    )
    return {
        "probes": len(reports),
        "worst_discrepancy": worst,
        "min_upper_slack": min(r["upper_slack"] for r in reports),
        "min_lower_slack": min(r["lower_slack"] for r in reports),
        "jump_constant": reports[0]["jump_constant"] if reports else None,
        "reports": reports,
    }


RUNNERS: dict[str, Callable[[_Run], dict[str, Any]]] = {
    "check": run_check,
    "probe": run_probe,
    "scan": run_scan,
    "reconstruct": run_reconstruct,
    "identities": run_identities,
}


def _error(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report
    print(json.dumps(payload, sort_keys=True, default=str))
    return code


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    # basicConfig is a no-op once the root logger has handlers
    logging.getLogger("od_enclosure").setLevel(level)


def main(args: list[str] | None = None) -> int:
    """Run an ``odenc`` command; returns the exit status.

    0 on success, 2 for an invalid scenario or configuration,
    3 when a hypothesis or the eigenvalue guard fails, 4 for a numerical failure.
    """
    namespace = create_cli().parse_args(args)
    _configure_logging(namespace.verbose)
    handler: JsonLinesHandler | None = None
    package_logger = logging.getLogger("od_enclosure")
    try:
        scenario = read_scenario(namespace.scenario)
        if namespace.seed is not None:
            scenario = dc.replace(scenario, seed=namespace.seed)
        scenario = scenario.with_config(**_overrides(namespace))
        mesh = scenario.forward_mesh()
        scenario.check_hypotheses(mesh)
        directory = RunDirectory.create(namespace.out, namespace.command, scenario.name)
        handler = JsonLinesHandler(directory.file("stats.jsonl"))
        package_logger.addHandler(handler)
        logger = get_run_logger("od_enclosure.cli", scenario.name)
        model = ForwardModel(
            scenario.medium,
            mesh,
            guard_tolerance=scenario.config.guard_tolerance,
            logger=logger,
        )
        run = _Run(scenario, mesh, model, directory, logger, namespace)
        results = RUNNERS[namespace.command](run)
        run.json(
            "results.json", {"command": namespace.command, "scenario": scenario.name, **results}
        )
        directory.write_manifest(
            scenario_hash=scenario.content_hash,
            config=scenario.config.as_json(),
            seed=scenario.seed,
            files=[*run.files, "stats.jsonl"],
            extra={"source": None if scenario.source is None else str(scenario.source)},
        )
        directory.mark_latest()
    except (HypothesisError, EigenvalueGuardError) as exc:
        return _error(exc, EXIT_HYPOTHESIS)
    except (ScenarioError, GeometryError, ValueError) as exc:
        return _error(exc, EXIT_INVALID)
    except (RuntimeError, ArithmeticError) as exc:
        return _error(exc, EXIT_NUMERICAL)
    finally:
        if handler is not None:
            package_logger.removeHandler(handler)
            handler.close()
    print(json.dumps({"status": "ok", "command": namespace.command, "run": str(directory.path)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
