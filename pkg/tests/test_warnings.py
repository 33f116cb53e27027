"""Test warning creation and the run loggers."""
import io
import json
import logging

import pytest

from od_enclosure.core.loggers import JsonLinesHandler, get_run_logger
from od_enclosure.warnings_ import OdWarnings, create_warning


@pytest.mark.parametrize(
    "suppress,emitted",
    [
        ((), True),
        (("odenc.fit",), False),
        (("odenc.*",), False),
        (("odenc",), False),
        (("odenc.guard",), True),
        (("other.fit",), True),
    ],
)
def test_create_warning(caplog, suppress, emitted):
    logger = get_run_logger("od_enclosure.tests", "S1")
    with caplog.at_level(logging.WARNING):
        message = create_warning(logger, "misfit too large", OdWarnings.FIT, suppress=suppress)
    assert (message is not None) is emitted
    if emitted:
        assert message == "misfit too large [odenc.fit]"
        assert "[S1] misfit too large [odenc.fit]" in caplog.text
    else:
        assert caplog.text == ""


def test_run_logger_subtype(caplog):
    logger = get_run_logger("od_enclosure.tests", "S1")
    with caplog.at_level(logging.INFO):
        logger.info("assembled %d dofs", 12, subtype="fem")
    assert caplog.records[-1].getMessage() == "[S1] assembled 12 dofs [odenc.fem]"
    assert caplog.records[-1].scenario == "S1"


def test_json_lines_handler():
    stream = io.StringIO()
    handler = JsonLinesHandler(stream)
    base = logging.getLogger("od_enclosure.tests.json")
    base.setLevel(logging.INFO)
    base.addHandler(handler)
    try:
        logger = get_run_logger(base.name, "null")
        logger.info("no stats here")
        logger.info("solved", subtype="fem", stats={"n_dof": 42, "nnz": 300})
    finally:
        base.removeHandler(handler)
    lines = stream.getvalue().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record == {
        "level": "INFO",
        "logger": "od_enclosure.tests.json",
        "scenario": "null",
        "n_dof": 42,
        "nnz": 300,
    }


def test_json_lines_handler_to_file(tmp_path):
    path = tmp_path / "stats.jsonl"
    handler = JsonLinesHandler(path)
    record = logging.LogRecord("x", logging.INFO, __file__, 1, "msg", None, None)
    record.stats = {"event": "probe"}
    handler.emit(record)
    handler.close()
    assert json.loads(path.read_text())["event"] == "probe"


def test_every_warning_is_documented():
    values = [member.value for member in OdWarnings]
    assert len(values) == len(set(values))
    assert "degraded" in values and "undecided" in values
