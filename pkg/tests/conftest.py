import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vadblab.metric_core import ConformalMetric, ModelManifold
from vadblab.vadb import cached_mesh

settings.register_profile(
    "repo", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def disk():
    return ModelManifold.disk(2)


@pytest.fixture(scope="session")
def flat_disk(disk):
    return ConformalMetric.flat(disk)


@pytest.fixture(scope="session")
def coarse_disk_mesh(disk):
    return cached_mesh(disk, 0.1, 3.0, 0)


@pytest.fixture(scope="session")
def fine_disk_mesh(disk):
    # shared with the end-to-end disk run through the runner's mesh cache
    return cached_mesh(disk, 0.02, 4.0, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one verdict line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
