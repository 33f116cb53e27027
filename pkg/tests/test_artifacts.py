import csv
from datetime import datetime, timezone
import json
import math
from pathlib import Path

import numpy as np
import pytest

from od_enclosure.core.artifacts import (
    SUPPORT_COLUMNS,
    RunDirectory,
    dumps,
    format_number,
    hull_svg,
    jsonable,
    utc_stamp,
    write_csv,
)
from od_enclosure.core.geometry import PolygonalDomain, rectangle

NOON = datetime(2024, 5, 17, 12, 0, 0, tzinfo=timezone.utc)


@pytest.mark.parametrize(
    "value,expected",
    [
        (0.1, "0.10000000000000001"),
        (np.float32(0.5), "0.5"),
        (3, "3"),
        (np.int64(-2), "-2"),
        (True, "1"),
        (np.bool_(False), "0"),
        (None, ""),
        ("DECAYS", "DECAYS"),
        (math.inf, "inf"),
    ],
)
def test_format_number(value, expected):
    assert format_number(value) == expected


def test_jsonable():
    data = {
        "array": np.array([1.0, np.nan]),
        "complex": 1 + 2j,
        "flag": np.bool_(True),
        "count": np.int32(4),
        "path": Path("runs/a"),
        1: (math.inf,),
    }
    assert jsonable(data) == {
        "array": [1.0, None],
        "complex": [1.0, 2.0],
        "flag": True,
        "count": 4,
        "path": "runs/a",
        "1": [None],
    }
    assert json.loads(dumps({"b": 1, "a": np.float64(0.25)})) == {"a": 0.25, "b": 1}
    assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')


def test_write_csv(tmp_path):
    rows = [
        {"omega_index": 0, "omega_x": 0.0, "omega_y": 1.0, "h": 0.45, "flagged": False},
        {"omega_index": 1, "h": None, "flagged": True, "extra": "ignored"},
    ]
    path = write_csv(tmp_path / "support.csv", SUPPORT_COLUMNS, rows)
    with path.open(encoding="utf8") as handle:
        read = list(csv.DictReader(handle))
    assert list(read[0]) == list(SUPPORT_COLUMNS)
    assert read[0]["h"] == "0.45000000000000001"
    assert read[0]["flagged"] == "0"
    assert read[1]["h"] == ""
    assert read[1]["flagged"] == "1"
    assert "ignored" not in path.read_text(encoding="utf8")


def test_hull_svg(unit_square, disk):
    svg = hull_svg(unit_square, disk, rectangle((0.3, 0.4), (0.7, 0.8)))
    assert svg.startswith("<svg")
    assert svg.count("<polygon") == 4
    # the domain fills the canvas between 10px margins, y pointing up
    assert "10.000000,470.000000" in svg
    assert "470.000000,10.000000" in svg
    empty = hull_svg(unit_square, PolygonalDomain.empty(), PolygonalDomain.empty())
    assert empty.count("<polygon") == 1


def test_utc_stamp():
    assert utc_stamp(NOON) == "20240517T120000Z"


def test_run_directory(tmp_path):
    first = RunDirectory.create(tmp_path, "check", "S1", now=NOON)
    second = RunDirectory.create(tmp_path, "check", "S1", now=NOON)
    assert first.path.name == "20240517T120000Z-S1"
    assert second.path.name == "20240517T120000Z-S1-1"

    first.write_json("results.json", {"value": np.float64(1.5)})
    first.write_csv("support.csv", ["h"], [{"h": 0.5}])
    first.write_text("hull.svg", "<svg/>")
    manifest = json.loads(
        first.write_manifest(
            scenario_hash="abc",
            config={"n_omega": 16},
            seed=7,
            files=["support.csv", "results.json", "hull.svg"],
        ).read_text(encoding="utf8")
    )
    assert manifest["files"] == ["hull.svg", "results.json", "support.csv"]
    assert manifest["seed"] == 7
    assert manifest["started_utc"] == NOON.isoformat()
    assert manifest["seconds"] >= 0

    latest = json.loads(first.mark_latest().read_text(encoding="utf8"))
    assert latest == {"run": first.path.name, "command": "check", "scenario": "S1"}
    assert second.mark_latest().parent == tmp_path
