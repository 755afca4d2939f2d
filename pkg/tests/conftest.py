import datetime as dt
import os
from pathlib import Path

import pytest

from sixday.racedata import (
    Completeness,
    Dataset,
    Era,
    Gender,
    PerformanceRecord,
    RaceEvent,
    RaceKind,
)

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    tag = None
    for key in report.keywords:
        if key.startswith("ACCEPT_"):
            tag = key[len("ACCEPT_"):]
    if tag is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _ACCEPTANCE.get(tag)
        if prev is None or prev[0] == "PASS" or status == "FAIL":
            _ACCEPTANCE[tag] = (status, report.nodeid)


def pytest_collection_modifyitems(items):
    for item in items:
        for mark in item.iter_markers("acceptance"):
            item.keywords[f"ACCEPT_{mark.args[0]}"] = True


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_ACCEPTANCE):
        status, nodeid = _ACCEPTANCE[tag]
        terminalreporter.write_line(f"{tag:<4} {status:<5} {nodeid}")


def _race(race_id, date, kind=RaceKind.SIX_DAY):
    if isinstance(date, int):
        date = dt.date(date, 6, 1)
    return RaceEvent(race_id, f"Race {race_id}", "USA", date, 144.0, kind, Completeness.COMPLETE)


def build_dataset(rows, era=Era.MODERN):
    """rows: (race_id, date-or-year, name, gender, yob, miles)."""
    races = {}
    records = []
    for race_id, date, name, gender, yob, miles in rows:
        races.setdefault(race_id, _race(race_id, date))
        records.append(PerformanceRecord(race_id, name, Gender(gender), float(miles), yob, era))
    return Dataset(tuple(records), tuple(races.values()))


@pytest.fixture
def make_dataset():
    return build_dataset


def fixture_path(env_var):
    """Optional dataset-equivalent export supplied by the user."""
    value = os.environ.get(env_var)
    if value and Path(value).is_file():
        return Path(value)
    return None
