import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lidarseg.kitti_io import default_config
from lidarseg.model import ClassConfig, ClassInfo

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# Filled in by tests/test_acceptance.py, printed after the run.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in sorted(ACCEPTANCE.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def cfg():
    return default_config()


def small_config(radius=1.0, classes=(1, 2), stuff=(9,), **kw):
    """Config with thing classes sharing one radius and a large extent."""
    table = {c: ClassInfo(c, f"thing{c}", True, radius) for c in classes}
    table.update({c: ClassInfo(c, f"stuff{c}", False) for c in stuff})
    kw.setdefault("extent", ((-100, 100), (-100, 100), (-100, 100)))
    return ClassConfig(table, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
