import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uwslam.geometry import Pose, Rotation
from uwslam.simulator import preset, simulate

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * rng.uniform(0, max_angle))


def random_pose(rng, scale=5.0, max_angle=np.pi):
    return Pose(random_rotation(rng, max_angle), rng.uniform(-scale, scale, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pipeline_sim_10s():
    """Noisy 10 s pipeline survey at the default sensor rates."""
    return simulate(preset("pipeline_small").with_duration(10.0))


@pytest.fixture(scope="session")
def noiseless_sim_10s():
    return simulate(preset("pipeline_small").noiseless().with_duration(10.0))


@pytest.fixture
def criterion(request):
    """Attach a criterion label and a result detail to the running test for the summary."""

    def note(label, detail=""):
        request.node.user_properties.append(("criterion", label))
        request.node.user_properties.append(("detail", detail))

    return note


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "acceptance" not in getattr(rep, "keywords", {}) or rep.when not in ("setup", "call"):
                continue
            if rep.when == "setup" and rep.passed:
                continue
            props = dict(rep.user_properties)
            label = props.get("criterion", rep.nodeid.split("::")[-1])
            rows.append((label, "PASS" if rep.passed else "FAIL", rep.duration, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, dur, detail in sorted(rows):
        terminalreporter.write_line(f"{status}  {label}  [{dur:.1f} s]  {detail}")
