import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from calibmoo.data import DEFAULT_TRUE_EXTRINSICS, decalibrate, generate_synthetic_scene
from calibmoo.problem import CalibrationProblem

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []

# the acceptance scene: seed 0 everywhere, decalibrated by 20 degrees / 1 m
ACCEPTANCE_SEED = 0
ACCEPTANCE_DECALIBRATION = (20.0, 1.0)


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def truth_scene():
    """Default layout with the nominal extrinsics at the truth."""
    return generate_synthetic_scene(3)


@pytest.fixture(scope="session")
def decalibrated_scene():
    nominal, _ = decalibrate(DEFAULT_TRUE_EXTRINSICS, ACCEPTANCE_DECALIBRATION, ACCEPTANCE_SEED)
    return generate_synthetic_scene(ACCEPTANCE_SEED, nominal=nominal)


@pytest.fixture(scope="session")
def wall_scene():
    return generate_synthetic_scene(1, layout="wall")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def truth_problem(truth_scene):
    return CalibrationProblem(truth_scene)
