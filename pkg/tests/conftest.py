import math

import numpy as np
import pytest

from thzsense.array import Surface, UlaSpec, beamform_profile
from thzsense.estimate import ForwardModel
from thzsense.geometry import Point2, SceneGeometry
from thzsense.model import AngleGrid
from thzsense.wavefield import FrequencyGrid, WaveformSpec

FC = 240e9
BW = 10e9


def reference_surfaces(scene, n=256, f_design=FC, steers=(15.0, 75.0)):
    k = 2 * math.pi * f_design / 299792458.0
    ula = UlaSpec.half_wavelength(n, k)
    return tuple(Surface(ula, beamform_profile(ula, k, math.radians(s), scene.theta_in)) for s in steers)


@pytest.fixture(scope="session")
def scene():
    return SceneGeometry(Point2(0.0, 4.0), Point2(-0.1, 0.0), Point2(0.1, 0.0))


@pytest.fixture(scope="session")
def waveform():
    return WaveformSpec(FC, BW)


@pytest.fixture(scope="session")
def grid(waveform):
    return FrequencyGrid.from_waveform(waveform)


@pytest.fixture(scope="session")
def surfaces(scene):
    return reference_surfaces(scene)


@pytest.fixture(scope="session")
def fmodel(scene, surfaces):
    return ForwardModel(scene, surfaces)


@pytest.fixture(scope="session")
def half_degree():
    return AngleGrid.from_step(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
