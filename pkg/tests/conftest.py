import numpy as np
import pytest

from fmit import autograd as ag


@pytest.fixture(autouse=True)
def _reset_precision():
    ag.set_precision("float32")
    yield
    ag.set_precision("float32")
    ag.set_debug(False)


@pytest.fixture
def f64():
    with ag.precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Remember one acceptance outcome; all are echoed at the end of the run."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
