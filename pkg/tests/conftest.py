import math

import pytest

from harvestopt.scenario import Scenario, Target
from harvestopt.trajectory import EllipseParams


def make_scenario(targets, agents, horizon):
    return Scenario(targets=tuple(targets), agents=tuple(agents),
                    horizon=horizon).validate()


@pytest.fixture
def lone_target_far():
    """One target no trajectory reaches: pure inflow."""
    return make_scenario(
        [Target(5.0, 5.0, 0.2, sigma=0.5, mu=(3.0,))],
        [EllipseParams(0, 0, 1, 1, 0.0)],
        10.0)


@pytest.fixture
def crossing_scenario():
    """One agent on a tall ellipse sweeping two sensing disks per lap."""
    return make_scenario(
        [Target(0.0, -1.1, 0.2, sigma=0.5, mu=(5.0,)),
         Target(0.05, 1.1, 0.2, alpha=1.5, sigma=0.4, mu=(5.0,))],
        [EllipseParams(0.03, -0.05, 1.25, 0.55, 1.45)],
        12.0)


@pytest.fixture
def handoff_scenario():
    """Two agents alternating inside one disk; the connected agent exits
    while the other is in range, forcing a connection handoff."""
    beta = 3.4808
    c1 = (1.3 * math.cos(beta), 1.3 * math.sin(beta))
    return make_scenario(
        [Target(0.0, 0.0, 0.5, sigma=0.3, mu=(2.0, 2.0), x0=5.0)],
        [EllipseParams(-1.3, 0.0, 1.0, 1.0, math.pi / 2),
         EllipseParams(c1[0], c1[1], 1.0, 1.0, math.pi / 2)],
        6.0)


@pytest.fixture
def triangle_field_scenario():
    """Three targets with a proper 2-D hull; the agent crosses two disks,
    so both objective terms and their gradients are active."""
    return make_scenario(
        [Target(0.0, -1.1, 0.2, sigma=0.5, mu=(5.0,)),
         Target(0.05, 1.1, 0.2, alpha=1.5, sigma=0.4, mu=(5.0,)),
         Target(1.6, 0.1, 0.25, sigma=0.3, mu=(4.0,))],
        [EllipseParams(0.03, -0.05, 1.25, 0.55, 1.45)],
        12.0)
