import numpy as np
import pytest

from evseg.events import EventStream, SensorGeometry


def random_stream(rng: np.random.Generator, geometry: SensorGeometry, n: int,
                  t0: int = 0, span: int = 1_000_000) -> EventStream:
    t = np.sort(rng.integers(t0, t0 + span, size=n))
    x = rng.integers(0, geometry.width, size=n)
    y = rng.integers(0, geometry.height, size=n)
    p = rng.choice(np.array([-1, 1], np.int8), size=n)
    return EventStream(geometry, t, x, y, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
