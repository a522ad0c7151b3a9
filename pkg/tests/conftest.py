from __future__ import annotations

import json
from pathlib import Path

import pytest

from fixtures_data import fixture_databases, sql_perturbation_examples
from sqlperturb.lexicon import load_lexicon
from sqlperturb.schema import schema_to_spider_entry
from sqlperturb.store import emit_database


@pytest.fixture(scope="session")
def dbs():
    return fixture_databases()


@pytest.fixture(scope="session")
def lex():
    return load_lexicon()


@pytest.fixture(scope="session")
def sql_corpus():
    return sql_perturbation_examples()


def write_corpus_dir(root: Path, examples, databases) -> Path:
    """Materialize a Spider-layout data directory."""
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "examples.json", "w", encoding="utf-8") as fh:
        json.dump(
            [{"question": e.question, "query": e.query, "db_id": e.db_id} for e in examples],
            fh,
            indent=1,
            ensure_ascii=False,
        )
    entries = [schema_to_spider_entry(db.schema, db_id) for db_id, db in sorted(databases.items())]
    with open(root / "tables.json", "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=1, ensure_ascii=False)
    for db_id, db in databases.items():
        emit_database(db, root / "database" / db_id / f"{db_id}.sqlite")
    return root


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, dbs, sql_corpus):
    root = tmp_path_factory.mktemp("corpus")
    return write_corpus_dir(root, sql_corpus, dbs)


# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion in the summary.

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_criterion(name: str) -> None:
    _ACCEPTANCE_RESULTS.setdefault(name, "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    criterion = item.get_closest_marker("criterion")
    if criterion and report.when == "call":
        name = criterion.args[0]
        if report.failed:
            _ACCEPTANCE_RESULTS[name] = "FAIL"
        elif report.passed:
            _ACCEPTANCE_RESULTS.setdefault(name, "PASS")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"[{status}] {name}")
