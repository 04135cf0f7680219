import pytest

from Step1_Topology_Clustering.core_model import (EnergyState, Position, ROOT_ID, Role, SimConfig,
                                                  ThingState)
from Step1_Topology_Clustering.radio_energy import RadioConstants


def make_thing(node_id, x, y, energy=0.5, consumed=0.0, attacker=False, rank=None):
    role = Role.ROOT if node_id == ROOT_ID else Role.MEMBER
    return ThingState(node_id, Position(float(x), float(y)), role,
                      EnergyState(energy, consumed), attacker, rank)


@pytest.fixture
def thing():
    return make_thing


@pytest.fixture
def rc():
    return RadioConstants()


@pytest.fixture
def tiny_cfg():
    return SimConfig(n_nodes=12, area_width=100.0, area_height=100.0, sim_duration=30.0,
                     intruder_ratio=0.0, rng_seed=3)


@pytest.fixture
def line_nodes():
    # root, then things 10 m apart along the x axis
    return [make_thing(i, 10.0 * i, 0.0) for i in range(5)]
