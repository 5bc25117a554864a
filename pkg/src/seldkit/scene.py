"""Scene scheduling and mixing: from a sample pool to layered, spatialized,
SNR-controlled multichannel recordings with frame-level annotations.

Layering follows the gap-time recipe: each layer is filled with events
drawn from the pool until the layer's event-time budget (duration minus the
total gap time) is spent, the last event is truncated to fit, and the gap
time is split over the inter-event slots by a uniform Dirichlet draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .arrays import SAMPLE_RATE
from .banks import IrBank, Trajectory
from .geometry import Doa
from .model import (LABEL_FRAME_S, MOVING_SPEEDS_DEG_PER_S, ClassSet,
                    LabelEntry, LabelFrameSet, Moving, SceneEvent,
                    SceneScript, Static, event_label_frames, n_label_frames)
from .render import render_moving, render_static

MOVING_ASSIGN_ATTEMPTS = 10


@dataclass(frozen=True)
class SampleSpec:
    sample_id: str
    class_label: str
    duration_s: float


class SampleStore:
    """In-memory pool of mono event samples at the scene sample rate."""

    def __init__(self, samples: dict[str, np.ndarray],
                 classes: dict[str, str],
                 sample_rate: int = SAMPLE_RATE):
        self.sample_rate = sample_rate
        self._audio = samples
        self._classes = classes

    @property
    def specs(self) -> list[SampleSpec]:
        return [SampleSpec(sid, self._classes[sid],
                           len(self._audio[sid]) / self.sample_rate)
                for sid in sorted(self._audio)]

    def load(self, sample_id: str) -> np.ndarray:
        try:
            return self._audio[sample_id]
        except KeyError:
            raise KeyError(f"no sample audio for id {sample_id!r}") from None


def _pool_drawer(pool: list[SampleSpec], rng: np.random.Generator):
    """Draw without replacement until the pool is exhausted, then with
    replacement."""
    bag = list(pool)

    def draw() -> SampleSpec:
        if bag:
            return bag.pop(rng.integers(len(bag)))
        return pool[rng.integers(len(pool))]

    return draw


def plan_layers(samples, class_set: ClassSet, total_gap_s: float,
                duration_s: float = 60.0, n_target_layers: int = 3,
                n_interferer_layers: int = 1,
                rng_seed: int | np.random.Generator = 0,
                recording_id: str = "", fold: int = 1, room_id: str = "",
                snr_db: float = 30.0) -> SceneScript:
    """Schedule events into non-overlapping layers (no spatial assignment).

    Per layer, event durations plus gaps sum exactly to `duration_s`; the
    last event is truncated to fit the event-time budget. Raises ValueError
    if a required role has no samples.
    """
    if total_gap_s < 0:
        raise ValueError("total gap time must be non-negative")
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    targets = [s for s in samples if class_set.is_target(s.class_label)]
    interferers = [s for s in samples
                   if s.class_label in class_set.interferer_labels]
    if n_target_layers > 0 and not targets:
        raise ValueError("no target samples in pool")
    if n_interferer_layers > 0 and not interferers:
        raise ValueError("no interferer samples in pool")

    draw_target = _pool_drawer(targets, rng)
    draw_interferer = _pool_drawer(interferers, rng)
    budget = duration_s - min(total_gap_s, duration_s)
    events = []
    roles = [(False, i, draw_target) for i in range(n_target_layers)] + \
            [(True, i, draw_interferer) for i in range(n_interferer_layers)]
    for is_interferer, layer, draw in roles:
        picked: list[tuple[SampleSpec, float]] = []
        spent = 0.0
        while spent < budget - 1e-12:
            spec = draw()
            dur = min(spec.duration_s, budget - spent)
            picked.append((spec, dur))
            spent += dur
        gaps = rng.dirichlet(np.ones(len(picked) + 1)) * total_gap_s \
            if picked else np.array([total_gap_s])
        cursor = gaps[0]
        for k, (spec, dur) in enumerate(picked):
            events.append(SceneEvent(
                sample_id=spec.sample_id, class_label=spec.class_label,
                layer_index=layer, is_interferer=is_interferer,
                onset=cursor, offset=cursor + dur))
            cursor += dur + gaps[k + 1]
    return SceneScript(recording_id=recording_id, fold=fold, room_id=room_id,
                       snr_db=snr_db, events=tuple(events),
                       duration_s=duration_s,
                       n_target_layers=n_target_layers,
                       n_interferer_layers=n_interferer_layers)


def assign_spatial(script: SceneScript, bank: IrBank, p_moving: float,
                   rng_seed: int | np.random.Generator = 0) -> SceneScript:
    """Give every event a position: a uniformly drawn bank node, or a
    trajectory traversal at one of the allowed speeds.

    A moving draw that does not fit the trajectory is retried up to 10
    times, then the event falls back to static.
    """
    if not bank.trajectories:
        raise ValueError("bank has no trajectories")
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    nodes = bank.all_nodes()
    events = []
    for ev in script.events:
        motion = None
        if rng.random() < p_moving:
            for _ in range(MOVING_ASSIGN_ATTEMPTS):
                traj = bank.trajectories[rng.integers(len(bank.trajectories))]
                speed = float(MOVING_SPEEDS_DEG_PER_S[
                    rng.integers(len(MOVING_SPEEDS_DEG_PER_S))])
                direction = int(rng.choice((1, -1)))
                start = int(rng.integers(traj.n_nodes))
                if traj.fits(start, direction, speed * ev.duration + 1e-3):
                    motion = Moving(traj.trajectory_id, start, speed, direction)
                    break
        if motion is None:
            traj_id, idx = nodes[rng.integers(len(nodes))]
            node = bank.trajectory(traj_id).nodes[idx]
            motion = Static(node.doa, node.distance_m, traj_id, idx)
        events.append(replace(ev, motion=motion))
    return script.with_events(events)


def event_frame_doas(ev: SceneEvent, traj: Trajectory | None,
                     times_s: np.ndarray) -> list[Doa]:
    """Directions of an assigned event at the given absolute scene times."""
    if isinstance(ev.motion, Static):
        return [ev.motion.doa] * len(times_s)
    if not isinstance(ev.motion, Moving):
        raise ValueError("event has no spatial assignment")
    taus = np.clip(np.asarray(times_s, dtype=float), ev.onset, ev.offset) \
        - ev.onset
    arcs = ev.motion.speed_deg_per_s * taus
    indices = traj.node_indices_at(ev.motion.start_index, ev.motion.direction,
                                   arcs)
    return [traj.nodes[int(i)].doa for i in indices]


def event_doa_at(ev: SceneEvent, traj: Trajectory | None, t_s: float) -> Doa:
    """Direction of an assigned event at absolute scene time `t_s`."""
    return event_frame_doas(ev, traj, np.asarray([t_s]))[0]


def script_labels(script: SceneScript, bank: IrBank,
                  class_set: ClassSet) -> LabelFrameSet:
    """Frame-level reference annotations for the target events of a script.

    Track ids are the event's ordinal within its class, in onset order.
    Moving events are sampled at the frame centers.
    """
    n_frames = n_label_frames(script.duration_s)
    labels = LabelFrameSet(n_frames=n_frames)
    track_counter: dict[str, int] = {}
    ordered = sorted((ev for ev in script.events if not ev.is_interferer),
                     key=lambda e: (e.onset, e.layer_index))
    for ev in ordered:
        track = track_counter.get(ev.class_label, 0)
        track_counter[ev.class_label] = track + 1
        class_idx = class_set.index_of(ev.class_label)
        traj = bank.trajectory(ev.motion.trajectory_id) \
            if isinstance(ev.motion, Moving) else None
        frames = event_label_frames(ev.onset, ev.offset, n_frames)
        times = (np.asarray(frames) + 0.5) * LABEL_FRAME_S
        for k, doa in zip(frames, event_frame_doas(ev, traj, times)):
            labels.add(k, LabelEntry(class_idx, track, doa))
    return labels


def _render_event(ev: SceneEvent, store: SampleStore,
                  bank: IrBank) -> np.ndarray:
    audio = store.load(ev.sample_id)
    n_needed = int(round(ev.duration * SAMPLE_RATE))
    signal = audio[:n_needed]
    if isinstance(ev.motion, Static):
        ir = bank.node_ir(ev.motion.trajectory_id, ev.motion.node_index)
        return render_static(signal, ir,
                             signal_sr=store.sample_rate,
                             ir_sr=bank.sample_rate)
    traj = bank.trajectory(ev.motion.trajectory_id)
    arc_needed = ev.motion.speed_deg_per_s * ev.duration
    indices, arcs = traj.traversal(ev.motion.start_index, ev.motion.direction,
                                   arc_needed + 2.0)
    irs = np.stack([bank.node_ir(ev.motion.trajectory_id, i) for i in indices])
    return render_moving(signal, irs, ev.motion.speed_deg_per_s,
                         node_arcs_deg=arcs, sample_rate=bank.sample_rate)


def _add_into(mix: np.ndarray, rendered: np.ndarray, onset_s: float):
    start = int(round(onset_s * SAMPLE_RATE))
    stop = min(start + rendered.shape[0], mix.shape[0])
    if start < stop:
        mix[start:stop] += rendered[: stop - start]


def mix_scene(script: SceneScript, store: SampleStore,
              banks: dict[str, IrBank],
              ambience: dict[str, np.ndarray] | None,
              class_set: ClassSet) -> tuple[dict[str, np.ndarray], LabelFrameSet]:
    """Render a fully assigned script into one recording per format.

    Ambience (when given, one (n, 4) buffer per format) is scaled so that
    the energy of the target events over target-active label frames, versus
    the total ambience energy, matches the script's SNR. Interferers are
    mixed in but never annotated and never count toward the SNR reference.
    """
    n_samples = int(round(script.duration_s * SAMPLE_RATE))
    first_bank = next(iter(banks.values()))
    labels = script_labels(script, first_bank, class_set)

    frame_len = int(round(LABEL_FRAME_S * SAMPLE_RATE))
    active_mask = np.zeros(n_samples, dtype=bool)
    for k in labels.active_frames():
        active_mask[k * frame_len: (k + 1) * frame_len] = True

    out = {}
    for fmt, bank in banks.items():
        if bank.sample_rate != SAMPLE_RATE:
            raise ValueError(f"bank {bank.room_id}/{fmt}: sample rate "
                             f"{bank.sample_rate} != {SAMPLE_RATE}")
        target_mix = np.zeros((n_samples, 4))
        interferer_mix = np.zeros((n_samples, 4))
        for ev in script.events:
            rendered = _render_event(ev, store, bank)
            _add_into(interferer_mix if ev.is_interferer else target_mix,
                      rendered, ev.onset)
        mix = target_mix + interferer_mix
        if ambience is not None and fmt in ambience:
            noise = ambience[fmt]
            if noise.shape != (n_samples, 4):
                raise ValueError(f"ambience for {fmt} has shape {noise.shape}, "
                                 f"expected {(n_samples, 4)}")
            e_targets = float(np.sum(target_mix[active_mask] ** 2))
            e_noise = float(np.sum(noise ** 2))
            if e_targets > 0 and e_noise > 0:
                gain = math.sqrt(
                    e_targets / (e_noise * 10.0 ** (script.snr_db / 10.0)))
            else:
                # No active targets to reference the SNR against.
                gain = 1.0
            mix = mix + gain * noise
        out[fmt] = mix
    return out, labels


def diffuse_ambience(formats, n_samples: int,
                     rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Pink-ish diffuse noise beds, one 4-channel buffer per format."""
    # One-pole-pair pink approximation (Kellet).
    b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
    a = [1.0, -2.494956002, 2.017265875, -0.522189400]
    out = {}
    for fmt in formats:
        white = rng.standard_normal((n_samples, 4))
        pink = lfilter(b, a, white, axis=0)
        if fmt == "foa":
            pink[:, 1:] /= math.sqrt(3.0)
        out[fmt] = pink
    return out


def synthetic_sample_store(class_set: ClassSet, n_per_class: int = 3,
                           duration_range_s: tuple[float, float] = (1.5, 8.0),
                           seed: int = 0) -> SampleStore:
    """Deterministic desk-scale event samples: band-limited noise bursts
    with a class-specific band and a smooth attack/decay envelope."""
    from scipy.signal import butter, sosfilt

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A)))
    labels = class_set.all_labels()
    samples, classes = {}, {}
    for c_idx, label in enumerate(labels):
        lo = 150.0 * (1 + c_idx % 7)
        hi = min(lo + 1500.0 + 400.0 * (c_idx % 5), 9000.0)
        sos = butter(4, [lo, hi], btype="bandpass", fs=SAMPLE_RATE,
                     output="sos")
        for k in range(n_per_class):
            dur = rng.uniform(*duration_range_s)
            n = int(round(dur * SAMPLE_RATE))
            burst = sosfilt(sos, rng.standard_normal(n))
            t = np.linspace(0.0, 1.0, n)
            envelope = np.minimum(1.0, t / 0.05) * np.minimum(1.0, (1 - t) / 0.2)
            # Slow amplitude modulation so events are non-stationary.
            envelope *= 0.6 + 0.4 * np.sin(
                2 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
            burst *= envelope
            rms = float(np.sqrt(np.mean(burst ** 2)))
            if rms > 0:
                burst *= 0.1 / rms
            sid = f"{label}_{k:02d}"
            samples[sid] = burst
            classes[sid] = label
    return SampleStore(samples, classes)
