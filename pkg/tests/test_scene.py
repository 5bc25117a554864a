import numpy as np
import pytest

from conftest import identity_ir_bank
from seldkit.geometry import Doa, angular_distance
from seldkit.model import ClassSet, Moving, SceneEvent, SceneScript, Static
from seldkit.scene import (SampleSpec, SampleStore, assign_spatial,
                           diffuse_ambience, event_doa_at, mix_scene,
                           plan_layers, script_labels,
                           synthetic_sample_store)

SR = 24000
CS = ClassSet(target_classes=("a", "b", "c"), interferer_labels=("z",))


def store_with(samples: dict[str, tuple[str, np.ndarray]]) -> SampleStore:
    return SampleStore({k: v[1] for k, v in samples.items()},
                       {k: v[0] for k, v in samples.items()})


def static_event(label, onset, offset, bank, node=0, layer=0,
                 interferer=False, sample_id="s0"):
    traj = bank.trajectories[0]
    return SceneEvent(
        sample_id=sample_id, class_label=label, layer_index=layer,
        is_interferer=interferer, onset=onset, offset=offset,
        motion=Static(traj.nodes[node].doa, traj.nodes[node].distance_m,
                      traj.trajectory_id, node))


def test_identity_ir_recording_equals_padded_sample():
    bank = identity_ir_bank()
    rng = np.random.default_rng(0)
    sample = rng.standard_normal(2 * SR)
    store = store_with({"s0": ("a", sample)})
    ev = static_event("a", 1.0, 3.0, bank)
    script = SceneScript(recording_id="r", fold=1, room_id="roomX",
                         snr_db=30.0, events=(ev,), duration_s=10.0)
    audio, labels = mix_scene(script, store, {"foa": bank}, None, CS)
    out = audio["foa"]
    expected = np.zeros((10 * SR, 4))
    expected[SR: 3 * SR] = sample[:, None]
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert labels.active_frames() == list(range(10, 30))


def test_interferer_only_script_has_audio_but_no_labels():
    bank = identity_ir_bank()
    store = store_with({"s0": ("z", np.ones(SR))})
    ev = static_event("z", 0.5, 1.5, bank, interferer=True)
    script = SceneScript(recording_id="r", fold=1, room_id="roomX",
                         snr_db=30.0, events=(ev,), duration_s=4.0)
    audio, labels = mix_scene(script, store, {"foa": bank}, None, CS)
    assert np.sum(audio["foa"] ** 2) > 0
    assert labels.n_entries() == 0


def test_linearity_of_event_rendering():
    bank = identity_ir_bank()
    rng = np.random.default_rng(1)
    store = store_with({"s0": ("a", rng.standard_normal(SR)),
                        "s1": ("b", rng.standard_normal(SR))})
    ev_a = static_event("a", 0.2, 1.2, bank, node=0, layer=0)
    ev_b = static_event("b", 0.8, 1.8, bank, node=2, layer=1,
                        sample_id="s1")
    base = dict(recording_id="r", fold=1, room_id="roomX", snr_db=30.0,
                duration_s=3.0)
    only_a = SceneScript(events=(ev_a,), **base)
    only_b = SceneScript(events=(ev_b,), **base)
    both = SceneScript(events=(ev_a, ev_b), **base)
    out_a, _ = mix_scene(only_a, store, {"foa": bank}, None, CS)
    out_b, _ = mix_scene(only_b, store, {"foa": bank}, None, CS)
    out_ab, _ = mix_scene(both, store, {"foa": bank}, None, CS)
    np.testing.assert_array_equal(out_a["foa"] + out_b["foa"], out_ab["foa"])


def test_snr_calibration(sample_store, small_banks, class_set):
    for snr in (6.0, 18.0, 30.0):
        script = plan_layers(sample_store.specs, class_set, total_gap_s=35.0,
                             rng_seed=9, snr_db=snr)
        script = assign_spatial(script, small_banks["foa"], p_moving=0.3,
                                rng_seed=10)
        amb = diffuse_ambience(("foa", "mic"), 60 * SR,
                               np.random.default_rng(11))
        with_amb, labels = mix_scene(script, sample_store, small_banks,
                                     {k: v.copy() for k, v in amb.items()},
                                     class_set)
        without, _ = mix_scene(script, sample_store, small_banks, None,
                               class_set)
        targets_only = script.with_events(
            e for e in script.events if not e.is_interferer)
        t_audio, _ = mix_scene(targets_only, sample_store, small_banks, None,
                               class_set)
        mask = np.zeros(60 * SR, dtype=bool)
        for k in labels.active_frames():
            mask[k * 2400: (k + 1) * 2400] = True
        for fmt in ("foa", "mic"):
            noise = with_amb[fmt] - without[fmt]
            measured = 10 * np.log10(np.sum(t_audio[fmt][mask] ** 2)
                                     / np.sum(noise ** 2))
            assert abs(measured - snr) < 0.05


def test_determinism(sample_store, small_banks, class_set):
    def run():
        script = plan_layers(sample_store.specs, class_set, total_gap_s=40.0,
                             rng_seed=31, snr_db=12.0)
        script = assign_spatial(script, small_banks["foa"], p_moving=0.5,
                                rng_seed=32)
        amb = diffuse_ambience(("foa", "mic"), 60 * SR,
                               np.random.default_rng(33))
        return mix_scene(script, sample_store, small_banks, amb, class_set)

    audio1, labels1 = run()
    audio2, labels2 = run()
    for fmt in audio1:
        np.testing.assert_array_equal(audio1[fmt], audio2[fmt])
    assert labels1 == labels2


def test_moving_labels_follow_trajectory_nodes(small_banks, class_set):
    # 20 deg/s for 3 s traverses about 60 degrees of arc; every label frame
    # must sit on the node predicted by plain arc arithmetic.
    bank = small_banks["foa"]
    traj = bank.trajectories[0]  # circular: long enough for any event
    sample = np.ones(3 * SR)
    store = store_with({"s0": (class_set.target_classes[0], sample)})
    ev = SceneEvent(sample_id="s0", class_label=class_set.target_classes[0],
                    layer_index=0, is_interferer=False, onset=0.0, offset=3.0,
                    motion=Moving(traj.trajectory_id, 0, 20.0, 1))
    script = SceneScript(recording_id="r", fold=1, room_id=bank.room_id,
                         snr_db=30.0, events=(ev,), duration_s=4.0)
    labels = script_labels(script, bank, class_set)
    doas = [labels.entries(k)[0].doa for k in range(30)]
    arcs = traj.arc_lengths()[:-1]  # per-node positions (drop the wrap arc)
    for k, doa in enumerate(doas):
        arc = 20.0 * (k + 0.5) * 0.1
        expected_node = int(np.argmin(np.abs(arcs - arc)))
        assert doa == traj.nodes[expected_node].doa
    total = angular_distance(doas[0], doas[-1])
    assert abs(total - 58.0) < 2.5  # frame centers span 0.05..2.95 s


def test_moving_over_single_node_equals_static():
    # Degenerate motion: the IR never changes, so the renderings coincide.
    bank = identity_ir_bank(n_nodes=1)
    rng = np.random.default_rng(7)
    store = store_with({"s0": ("a", rng.standard_normal(SR))})
    base = dict(sample_id="s0", class_label="a", layer_index=0,
                is_interferer=False, onset=0.5, offset=1.5)
    traj = bank.trajectories[0]
    moving = SceneEvent(motion=Moving(traj.trajectory_id, 0, 10.0, 1), **base)
    static = SceneEvent(motion=Static(traj.nodes[0].doa, 2.0,
                                      traj.trajectory_id, 0), **base)
    mk = lambda ev: SceneScript(recording_id="r", fold=1, room_id="roomX",
                                snr_db=30.0, events=(ev,), duration_s=3.0)
    out_m, _ = mix_scene(mk(moving), store, {"foa": bank}, None, CS)
    out_s, _ = mix_scene(mk(static), store, {"foa": bank}, None, CS)
    np.testing.assert_allclose(out_m["foa"], out_s["foa"], atol=1e-12)


def test_tracks_are_per_class_ordinals(small_banks, class_set):
    bank = small_banks["foa"]
    label = class_set.target_classes[3]
    store = store_with({"s0": (label, np.ones(SR))})
    ev1 = static_event(label, 0.0, 1.0, bank, node=0, layer=0,
                       sample_id="s0")
    ev2 = static_event(label, 0.5, 1.5, bank, node=50, layer=1,
                       sample_id="s0")
    script = SceneScript(recording_id="r", fold=1, room_id=bank.room_id,
                         snr_db=30.0, events=(ev1, ev2), duration_s=2.0)
    labels = script_labels(script, bank, class_set)
    entries = labels.entries(7)  # both active in 0.7..0.8
    tracks = sorted(e.track_id for e in entries)
    assert tracks == [0, 1]
    assert all(e.class_index == 3 for e in entries)


def test_ambience_shape_checked(sample_store, small_banks, class_set):
    script = plan_layers(sample_store.specs, class_set, total_gap_s=50.0,
                         rng_seed=1)
    script = assign_spatial(script, small_banks["foa"], 0.0, rng_seed=2)
    with pytest.raises(ValueError, match="ambience"):
        mix_scene(script, sample_store, small_banks,
                  {"foa": np.zeros((100, 4))}, class_set)


def test_missing_sample_audio_raises(small_banks, class_set):
    bank = small_banks["foa"]
    store = store_with({"s0": (class_set.target_classes[0], np.ones(SR))})
    ev = static_event(class_set.target_classes[0], 0.0, 1.0, bank,
                      sample_id="missing")
    script = SceneScript(recording_id="r", fold=1, room_id=bank.room_id,
                         snr_db=30.0, events=(ev,), duration_s=2.0)
    with pytest.raises(KeyError, match="missing"):
        mix_scene(script, store, {"foa": bank}, None, class_set)


def test_synthetic_store_covers_all_classes(class_set):
    store = synthetic_sample_store(class_set, n_per_class=2, seed=0)
    labels = {s.class_label for s in store.specs}
    assert labels == set(class_set.all_labels())
    for spec in store.specs:
        audio = store.load(spec.sample_id)
        assert audio.ndim == 1 and np.sum(audio ** 2) > 0
