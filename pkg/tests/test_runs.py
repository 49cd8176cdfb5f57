from __future__ import annotations

import json
import sqlite3

import pytest

import search
from dependencies import get_store, init_dependencies
from runs import RunStore
from search import SearchConfig
from utils import log_error, safe_name


def rows(db_path, query: str) -> list[tuple]:
    with sqlite3.connect(db_path) as conn:
        return conn.execute(query).fetchall()


@pytest.fixture
def db_path(tmp_path):
    return tmp_path / "runs.db"


@pytest.fixture
def store(db_path) -> RunStore:
    return RunStore(str(db_path))


@pytest.fixture
def report(make_shape):
    small = make_shape(64, seed=3)
    return search.run(small, small, SearchConfig(rho=45.0), ground_truth=0.0, seed=7)


def test_add_run(store, db_path, report):
    run_id = store.add_run("estimate", report, inputs=["a.pbm", "b.pbm"], report_path="out/report.json")
    saved = rows(db_path, "SELECT id, kind, inputs, config, seed, ground_truth, levels, report_path FROM runs")
    assert len(saved) == 1
    row_id, kind, inputs, config, seed, ground_truth, levels, report_path = saved[0]
    assert row_id == run_id
    assert kind == "estimate"
    assert json.loads(inputs) == ["a.pbm", "b.pbm"]
    assert json.loads(config)["rho"] == 45.0
    assert (seed, ground_truth, levels, report_path) == (7, 0.0, 1, "out/report.json")


def test_run_ids_increase(store, report):
    first = store.add_run("estimate", report)
    second = store.add_run("suite", report)
    assert second > first


def test_error_log(store, db_path):
    store.log_error("io", "first", "command=estimate")
    store.log_error("config", "second")
    saved = rows(db_path, "SELECT error_type, error_message, context FROM error_log ORDER BY id")
    assert saved == [("io", "first", "command=estimate"), ("config", "second", None)]


def test_schema_survives_reopen(db_path, report):
    RunStore(str(db_path)).add_run("estimate", report)
    RunStore(str(db_path)).add_run("estimate", report)
    assert rows(db_path, "SELECT COUNT(*) FROM runs") == [(2,)]


def test_log_error_reaches_the_store(db_path):
    init_dependencies(str(db_path))
    try:
        log_error("suite_case", "boom", "case=x")
        assert rows(db_path, "SELECT error_type, context FROM error_log") == [("suite_case", "case=x")]
    finally:
        init_dependencies(None)
    assert get_store() is None
    log_error("io", "nowhere to go")


@pytest.mark.parametrize(
    "name,expected",
    [("theta234", "theta234"), ("a/b c", "a_b_c"), ("", "_"), ("v1.2-x", "v1.2-x")],
)
def test_safe_name(name, expected):
    assert safe_name(name) == expected
