import numpy as np
import pytest

from seldkit.arrays import foa_ideal_array, anechoic_ir
from seldkit.banks import (IrBank, Trajectory, TrajectoryNode, anechoic_twin,
                           build_room_banks, make_circular_trajectory,
                           make_linear_trajectory, synth_reverb_ir)
from seldkit.geometry import Doa, angular_distance
from seldkit.render import render_static


def line_nodes(n, distance=2.0):
    return tuple(TrajectoryNode(Doa(float(k), 0.0), distance) for k in range(n))


class TestTrajectory:
    def test_spacing_limit(self):
        nodes = (TrajectoryNode(Doa(0, 0), 2.0), TrajectoryNode(Doa(5, 0), 2.0))
        with pytest.raises(ValueError, match="apart"):
            Trajectory("t", "r", "linear", nodes)

    def test_positive_distance(self):
        nodes = (TrajectoryNode(Doa(0, 0), 0.0),)
        with pytest.raises(ValueError, match="positive"):
            Trajectory("t", "r", "linear", nodes)

    def test_arc_lengths_linear(self):
        traj = Trajectory("t", "r", "linear", line_nodes(5))
        np.testing.assert_allclose(traj.arc_lengths(), np.arange(5.0),
                                   atol=1e-9)
        assert not traj.closed

    def test_circular_wraps(self):
        rng = np.random.default_rng(0)
        traj = make_circular_trajectory("t", "r", rng, n_nodes=360)
        assert traj.closed
        assert abs(traj.total_arc_deg - 360.0) < 1e-6
        indices, positions = traj.traversal(350, 1, 20.0)
        assert 10 in set(int(i) for i in indices)
        # Backward traversal across the wrap too.
        indices, _ = traj.traversal(5, -1, 10.0)
        assert 355 in set(int(i) for i in indices)

    def test_node_lookup_nearest(self):
        traj = Trajectory("t", "r", "linear", line_nodes(10))
        assert traj.node_index_at(0, 1, 0.0) == 0
        assert traj.node_index_at(0, 1, 2.4) == 2
        assert traj.node_index_at(0, 1, 2.6) == 3
        assert traj.node_index_at(9, -1, 3.0) == 6
        # Arc beyond an open trajectory clamps to the last node.
        assert traj.node_index_at(0, 1, 100.0) == 9

    def test_fits(self):
        traj = Trajectory("t", "r", "linear", line_nodes(10))
        assert traj.fits(0, 1, 9.0)
        assert not traj.fits(0, 1, 9.5)
        assert not traj.fits(5, 1, 6.0)
        assert traj.fits(5, -1, 5.0)


class TestIrBank:
    def test_node_count_must_match(self):
        traj = Trajectory("t0", "r", "linear", line_nodes(4))
        with pytest.raises(ValueError, match="nodes"):
            IrBank(room_id="r", format="foa", trajectories=(traj,),
                   irs={"t0": np.zeros((3, 8, 4))})

    def test_missing_trajectory_irs(self):
        traj = Trajectory("t0", "r", "linear", line_nodes(4))
        with pytest.raises(ValueError, match="missing"):
            IrBank(room_id="r", format="foa", trajectories=(traj,), irs={})

    def test_all_nodes_enumeration(self, small_banks):
        bank = small_banks["foa"]
        nodes = bank.all_nodes()
        assert len(nodes) == sum(t.n_nodes for t in bank.trajectories)


class TestSynthReverb:
    def test_tail_disabled_equals_anechoic(self):
        rng = np.random.default_rng(1)
        arr = foa_ideal_array()
        ir = synth_reverb_ir(0.5, None, Doa(20, -10), 1.5, arr, rng)
        np.testing.assert_array_equal(ir, anechoic_ir(Doa(20, -10), 1.5, arr))

    def test_rt60_envelope(self):
        rng = np.random.default_rng(2)
        ir = synth_reverb_ir(0.5, -20.0, Doa(0, 0), 1.0, foa_ideal_array(),
                             rng)
        # With DRR -20 dB the tail dominates; compare early/late windows.
        start = np.argmax(np.abs(ir[:, 0])) + 120
        w = 480
        early = np.mean(ir[start: start + w] ** 2)
        late_at = start + int(0.5 * 24000) - w
        late = np.mean(ir[late_at: late_at + w] ** 2)
        drop_db = 10 * np.log10(early / late)
        assert abs(drop_db - 60.0) < 3.0

    def test_drr_exact(self):
        arr = foa_ideal_array()
        for drr in (0.0, 6.0, 12.0):
            rng = np.random.default_rng(3)
            ir = synth_reverb_ir(0.4, drr, Doa(45, 20), 2.0, arr, rng)
            direct = anechoic_ir(Doa(45, 20), 2.0, arr)
            e_direct = np.sum(direct ** 2)
            e_tail = np.sum(ir ** 2) - e_direct
            measured = 10 * np.log10(e_direct / e_tail)
            assert abs(measured - drr) < 0.2

    def test_rt60_positive(self):
        with pytest.raises(ValueError):
            synth_reverb_ir(0.0, 10.0, Doa(0, 0), 1.0, foa_ideal_array(),
                            np.random.default_rng(0))


class TestRoomBanks:
    def test_formats_share_geometry(self, small_banks):
        foa, mic = small_banks["foa"], small_banks["mic"]
        assert [t.trajectory_id for t in foa.trajectories] == \
               [t.trajectory_id for t in mic.trajectories]
        for tf, tm in zip(foa.trajectories, mic.trajectories):
            assert tf.nodes == tm.nodes

    def test_node_spacing_about_one_degree(self):
        rng = np.random.default_rng(4)
        traj = make_linear_trajectory("t", "r", rng, arc_deg=30.0)
        steps = [angular_distance(a.doa, b.doa)
                 for a, b in zip(traj.nodes, traj.nodes[1:])]
        assert all(abs(s - 1.0) < 0.01 for s in steps)

    def test_anechoic_twin_alignment(self, small_banks):
        # Rendering the same event through the room IR and its free-field
        # twin must stay aligned within one sample.
        bank = small_banks["foa"]
        twin = anechoic_twin(bank)
        rng = np.random.default_rng(5)
        sig = rng.standard_normal(6000)
        traj = bank.trajectories[0]
        for node in (0, 40, 97):
            reverb = render_static(sig, bank.irs[traj.trajectory_id][node])
            dry = render_static(sig, twin.irs[traj.trajectory_id][node])
            n = 1 << int(np.ceil(np.log2(len(reverb) + len(dry))))
            xc = np.fft.irfft(
                np.fft.rfft(dry[:, 0], n) * np.conj(np.fft.rfft(reverb[:, 0], n)),
                n)
            lag = int(np.argmax(xc))
            if lag > n // 2:
                lag -= n
            assert abs(lag) <= 1
