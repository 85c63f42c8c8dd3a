from __future__ import annotations

import pytest

from rlca.fixtures import load_fixture

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion."""

    def _record(number: int, title: str, failures: list[str]):
        _ACCEPTANCE[number] = (title, not failures, "; ".join(failures))
        assert not failures, "\n".join(failures)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def bridge():
    return load_fixture("bridge")


@pytest.fixture
def nested():
    return load_fixture("nested")


@pytest.fixture
def complex_net():
    return load_fixture("complex")


