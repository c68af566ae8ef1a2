import sys

import numpy as np
import pytest

from setnvs.geometry import Camera, look_at, random_rotation


def canonical_camera(width=1, height=1, K=None, R=None, t=None, id=None):
    K = np.eye(3) if K is None else np.asarray(K, dtype=float)
    return Camera(K, np.eye(3) if R is None else R, np.zeros(3) if t is None else t, width, height, id)


def random_camera(rng, id=None, width=8, height=6):
    fx, fy = rng.uniform(3, 10, size=2)
    cx, cy = rng.uniform(1, width - 1), rng.uniform(1, height - 1)
    return Camera.from_params(fx, fy, cx, cy, width, height, random_rotation(rng), rng.normal(size=3), id=id)


def scene_cameras(rng, n):
    """Cameras on a sphere looking at the origin, so points near 0 are visible."""
    cams = []
    for k in range(n):
        c = rng.normal(size=3)
        c = 5 * c / np.linalg.norm(c)
        R, t = look_at(c, rng.normal(scale=0.1, size=3))
        cams.append(Camera.from_params(300, 300, 160, 120, 320, 240, R, t, id=k))
    return cams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
