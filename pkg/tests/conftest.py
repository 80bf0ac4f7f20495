from __future__ import annotations

from pathlib import Path

import pytest

from groundcheck.corpus import load_corpus
from groundcheck.encoding import WhitespaceTokenizer

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def source_path() -> Path:
    return FIXTURES / "source.jsonl"


@pytest.fixture(scope="session")
def responses_path() -> Path:
    return FIXTURES / "responses.jsonl"


@pytest.fixture(scope="session")
def normalized_path() -> Path:
    return FIXTURES / "normalized.jsonl"


@pytest.fixture(scope="session")
def corpus(source_path, responses_path):
    return load_corpus(source_path, responses_path)


@pytest.fixture(scope="session")
def tokenizer():
    return WhitespaceTokenizer()


_acceptance_results: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        _acceptance_results.append((item.name, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"ACCEPTANCE {outcome}: {name}")
