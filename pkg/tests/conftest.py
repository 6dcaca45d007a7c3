import numpy as np
import pytest

from c2fdet.geom import Box


def random_box(rng, span=200.0, max_side=80.0, min_side=1.0):
    w, h = rng.uniform(min_side, max_side, size=2)
    x, y = rng.uniform(-span / 4, span, size=2)
    return Box(float(x), float(y), float(w), float(h))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
