import contextlib
from dataclasses import dataclass

import pytest

_RESULTS: dict[int, str] = {}


@dataclass
class CriterionRecord:
    number: int
    title: str
    detail: str = ""


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion as PASS or FAIL."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        rec = CriterionRecord(number, title)
        try:
            yield rec
        except BaseException as err:
            msg = str(err).splitlines()[0] if str(err) else type(err).__name__
            _RESULTS[number] = f"[{number:2d}] FAIL {title}: {rec.detail} | {msg[:200]}"
            print(_RESULTS[number])
            raise
        _RESULTS[number] = f"[{number:2d}] PASS {title}: {rec.detail}"
        print(_RESULTS[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[n])
