import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vesselforge.volume import BinaryMask  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng, shape=(8, 8, 8), p=0.3, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    return BinaryMask(rng.random(shape) < p, spacing)


# one summary line per acceptance criterion, printed after the run
_CRITERIA: dict[str, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if not item.module.__name__.endswith("test_acceptance"):
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _CRITERIA[item.name] = (title, "PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[name]
        terminalreporter.write_line(f"{status}  {title}  ({secs:.1f} s)")
