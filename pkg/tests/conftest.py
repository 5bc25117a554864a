import numpy as np
import pytest

from seldkit.banks import IrBank, Trajectory, TrajectoryNode, build_room_banks
from seldkit.geometry import Doa
from seldkit.model import ClassSet
from seldkit.scene import synthetic_sample_store


@pytest.fixture(scope="session")
def class_set():
    return ClassSet()


@pytest.fixture(scope="session")
def sample_store(class_set):
    return synthetic_sample_store(class_set, n_per_class=2,
                                  duration_range_s=(1.0, 4.0), seed=11)


@pytest.fixture(scope="session")
def small_banks():
    """One small room (short tails, 180-node circle) for fast scene tests."""
    return build_room_banks("room01", seed=21, rt60_s=0.25,
                            n_circular_nodes=180, linear_arc_deg=50.0)


def identity_ir_bank(n_nodes: int = 4) -> IrBank:
    """A linear trajectory whose IRs pass every channel through unchanged."""
    nodes = tuple(TrajectoryNode(Doa(float(k), 0.0), 2.0)
                  for k in range(n_nodes))
    traj = Trajectory("t0", "roomX", "linear", nodes)
    irs = {"t0": np.ones((n_nodes, 1, 4))}
    return IrBank(room_id="roomX", format="foa", trajectories=(traj,),
                  irs=irs)
