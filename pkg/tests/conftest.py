from pathlib import Path

import numpy as np
import pytest

from mostmotion.trace_io import MARKER_INDEX, N_MARKERS, parse_collisions, parse_gestures, parse_trace

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name):
    d = FIXTURES / name
    return (parse_trace((d / "trace.txt").read_bytes()),
            parse_gestures((d / "gestures.txt").read_bytes()),
            parse_collisions((d / "collisions.txt").read_bytes()))


def upright_pose(**overrides):
    """13 x 3 marker array of a symmetric standing subject facing +Y."""
    pts = {
        "right_shoulder": (0.2, 0, 1.4), "left_shoulder": (-0.2, 0, 1.4),
        "right_elbow": (0.2, 0, 1.1), "left_elbow": (-0.2, 0, 1.1),
        "right_wrist": (0.2, 0.05, 0.85), "left_wrist": (-0.2, 0.05, 0.85),
        "pelvis": (0, 0, 0.9),
        "right_hip": (0.1, 0, 0.9), "left_hip": (-0.1, 0, 0.9),
        "right_knee": (0.1, 0, 0.45), "left_knee": (-0.1, 0, 0.45),
        "right_ankle": (0.1, 0, 0.0), "left_ankle": (-0.1, 0, 0.0),
    }
    pts.update(overrides)
    out = np.zeros((N_MARKERS, 3))
    for name, p in pts.items():
        out[MARKER_INDEX[name]] = p
    return out


@pytest.fixture(scope="session")
def lifting():
    return load_fixture("lifting")


@pytest.fixture(scope="session")
def carry():
    return load_fixture("carry")


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
