import numpy as np
import pytest

from uwloc import model, noise

# Lines printed by the acceptance suite, shown once at the end of the run.
ACCEPTANCE_LINES = []


@pytest.fixture
def source():
    return model.default_source(1500.0)


@pytest.fixture
def array():
    return model.default_array()


@pytest.fixture
def unit_noise():
    """sigma_d = sigma_s = 1 m at c = 1500 m/s."""
    return noise.NoiseModel.standard(10, 1.0, 1.0, 1500.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_geometry(rng, m, spread=1000.0):
    """Source and sensors in a cube with every source offset comfortably non-zero."""
    while True:
        sensors = rng.uniform(0.0, spread, size=(m, 3))
        sensor_vel = rng.uniform(-3.0, 3.0, size=(m, 3))
        pos = rng.uniform(0.1 * spread, 0.9 * spread, size=3)
        vel = rng.uniform(-3.0, 3.0, size=3)
        off = pos - sensors[0]
        gaps = np.linalg.norm(sensors[:, None] - sensors[None], axis=-1) + np.eye(m) * spread
        if np.min(np.abs(off)) > 0.05 * spread and np.min(gaps) > 0.05 * spread \
                and np.min(np.linalg.norm(pos - sensors, axis=1)) > 0.05 * spread:
            speed = rng.uniform(1400.0, 1600.0)
            return model.SourceState(pos, vel, speed), model.SensorArray(sensors, sensor_vel)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
