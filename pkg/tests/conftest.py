import numpy as np
import pytest

from netmimo import PathlossModel, build_layout


@pytest.fixture(scope="session")
def ring24():
    return build_layout(1, 24, user_grid_density=20)


@pytest.fixture(scope="session")
def ring8():
    return build_layout(1, 8, user_grid_density=8)


@pytest.fixture(scope="session")
def hex19():
    return build_layout(2, 19, hex_radius=1.6)


@pytest.fixture(scope="session")
def pathloss_1d():
    return PathlossModel(reference_gain=1e6, exponent=3.76, breakpoint=0.05)


@pytest.fixture(scope="session")
def pathloss_2d():
    return PathlossModel(reference_gain=1e6, exponent=3.8, breakpoint=0.1)


class StepGain:
    """Distance-bucketed gain table for hand-checkable oracles."""

    def __init__(self, levels=((0.5, 1.0), (1.5, 0.1)), floor=0.01):
        self.levels = levels
        self.floor = floor

    def gain_from_distance(self, d):
        d = np.asarray(d, dtype=float)
        out = np.full(d.shape, self.floor)
        for cutoff, value in reversed(self.levels):
            out = np.where(d < cutoff, value, out)
        return out

    def gain(self, layout, x, b):
        return float(self.gain_from_distance(layout.mod_distance(x, b)))


@pytest.fixture
def step_gain():
    return StepGain()
