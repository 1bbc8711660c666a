import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.transform import Rotation

from umarm.arm import N_JOINTS, N_SEGMENTS
from umarm.config import load_config
from umarm.plant import Plant

settings.register_profile(
    "umarm", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("umarm")

ACCEPTANCE_LINES = []
DAMPING_POWER = {"max": -np.inf, "calls": 0}


@pytest.fixture(scope="session", autouse=True)
def track_damping_power():
    """Record the largest damping power of every plant step in the session."""
    original = Plant.advance

    def advance(self, *args, **kwargs):
        out = original(self, *args, **kwargs)
        DAMPING_POWER["max"] = max(DAMPING_POWER["max"], self.max_damping_power)
        DAMPING_POWER["calls"] += 1
        return out

    Plant.advance = advance
    yield
    Plant.advance = original


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def arm(cfg):
    return cfg.arm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def homogeneous(R=None, t=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def axis_angle(axis, angle):
    return Rotation.from_rotvec(np.asarray(axis, dtype=float) * angle).as_matrix()


def chained_segment(seg, theta):
    """Segment tool transform built joint by joint in moving frames.

    Walk to each joint center in the current frame, rotate about the joint
    axis (expressed in that frame), continue; finally return from the
    last center and apply the rest tool pose.
    """
    T = np.eye(4)
    prev = np.zeros(3)
    for c, a, th in zip(seg.joint_centers, seg.joint_axes, theta):
        T = T @ homogeneous(t=c - prev) @ homogeneous(R=axis_angle(a, th))
        prev = c
    return T @ homogeneous(t=-prev) @ seg.rest_tool_pose.matrix()


def chained_fk(arm, theta):
    """Base-to-tip 4x4 transform from per-segment chains and offsets."""
    T = np.eye(4)
    for s, seg in enumerate(arm.segments):
        T = T @ chained_segment(seg, theta[4 * s : 4 * s + 4])
        if s < N_SEGMENTS - 1:
            T = T @ arm.offsets[s].matrix()
    return T @ arm.end_effector.matrix()


def random_theta(rng, arm, n=None, scale=1.0):
    lim = arm.limits
    size = (N_JOINTS,) if n is None else (n, N_JOINTS)
    return rng.uniform(scale * lim.lower, scale * lim.upper, size=size)


def record_acceptance(number, title, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number:2d}: {title} | {detail}"))


def pytest_sessionfinish(session, exitstatus):
    # damping must never inject energy, in any test
    if DAMPING_POWER["max"] > 0.0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
    status = "PASS" if DAMPING_POWER["max"] <= 0.0 else "FAIL"
    terminalreporter.write_line(
        f"[{status}] damping power over the whole session: max {DAMPING_POWER['max']:.2e} W "
        f"in {DAMPING_POWER['calls']} plant calls"
    )
