"""Domain types for annotated spatial sound scenes.

A recording is described symbolically by a SceneScript: layered target and
interferer events with onset/offset times and, once assigned, a spatial
position (static node or trajectory traversal). Reference annotations live
in a LabelFrameSet at 100 ms resolution and cover target classes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from .geometry import Doa

RECORDING_DURATION_S = 60.0
LABEL_FRAME_S = 0.1
# Minimum intersection between an event and a 100 ms frame for the frame to
# count as active; shorter events always claim their onset frame.
MIN_FRAME_OVERLAP_S = 0.05
MOVING_SPEEDS_DEG_PER_S = (10.0, 20.0, 40.0)

DEFAULT_TARGET_CLASSES = (
    "alarm",
    "crying_baby",
    "crash",
    "barking_dog",
    "female_scream",
    "female_speech",
    "footsteps",
    "knocking_door",
    "male_scream",
    "male_speech",
    "ringing_phone",
    "piano",
)
DEFAULT_INTERFERER_LABELS = ("engine", "fire", "general")


@dataclass(frozen=True)
class ClassSet:
    """Ordered target classes (dense indices 0..C-1) plus interferer labels."""

    target_classes: tuple[str, ...] = DEFAULT_TARGET_CLASSES
    interferer_labels: tuple[str, ...] = DEFAULT_INTERFERER_LABELS

    def __post_init__(self):
        if len(set(self.target_classes)) != len(self.target_classes):
            raise ValueError("duplicate target class labels")
        overlap = set(self.target_classes) & set(self.interferer_labels)
        if overlap:
            raise ValueError(f"labels in both roles: {sorted(overlap)}")

    @property
    def n_classes(self) -> int:
        return len(self.target_classes)

    def index_of(self, label: str) -> int:
        return self.target_classes.index(label)

    def is_target(self, label: str) -> bool:
        return label in self.target_classes

    def all_labels(self) -> tuple[str, ...]:
        return self.target_classes + self.interferer_labels


@dataclass(frozen=True)
class Static:
    doa: Doa
    distance_m: float
    trajectory_id: str = ""
    node_index: int = 0


@dataclass(frozen=True)
class Moving:
    trajectory_id: str
    start_index: int
    speed_deg_per_s: float
    direction: int  # +1 or -1 along the node order

    def __post_init__(self):
        if self.speed_deg_per_s not in MOVING_SPEEDS_DEG_PER_S:
            raise ValueError(f"speed {self.speed_deg_per_s} not in "
                             f"{MOVING_SPEEDS_DEG_PER_S}")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")


Motion = Union[Static, Moving]


@dataclass(frozen=True)
class SceneEvent:
    sample_id: str
    class_label: str
    layer_index: int
    is_interferer: bool
    onset: float
    offset: float
    motion: Motion | None = None

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class SceneScript:
    """Full symbolic description of one recording."""

    recording_id: str
    fold: int
    room_id: str
    snr_db: float
    events: tuple[SceneEvent, ...]
    duration_s: float = RECORDING_DURATION_S
    n_target_layers: int = 3
    n_interferer_layers: int = 1

    def with_events(self, events) -> "SceneScript":
        return replace(self, events=tuple(events))


@dataclass(frozen=True)
class LabelEntry:
    class_index: int
    track_id: int
    doa: Doa


@dataclass
class LabelFrameSet:
    """Reference or predicted annotations at 100 ms frame resolution.

    `frames` maps a frame index to its active entries; frames without
    activity are absent. Entries are unique per (class_index, track_id).
    """

    n_frames: int
    frames: dict[int, list[LabelEntry]] = field(default_factory=dict)

    def add(self, frame: int, entry: LabelEntry):
        if not 0 <= frame < self.n_frames:
            raise ValueError(f"frame {frame} outside 0..{self.n_frames - 1}")
        bucket = self.frames.setdefault(frame, [])
        if any(e.class_index == entry.class_index and e.track_id == entry.track_id
               for e in bucket):
            raise ValueError(
                f"duplicate (class {entry.class_index}, track {entry.track_id}) "
                f"in frame {frame}")
        bucket.append(entry)

    def entries(self, frame: int) -> list[LabelEntry]:
        return self.frames.get(frame, [])

    def active_frames(self) -> list[int]:
        return sorted(f for f, es in self.frames.items() if es)

    def n_entries(self) -> int:
        return sum(len(es) for es in self.frames.values())

    def __eq__(self, other):
        if not isinstance(other, LabelFrameSet):
            return NotImplemented
        mine = {f: sorted(es, key=lambda e: (e.class_index, e.track_id))
                for f, es in self.frames.items() if es}
        theirs = {f: sorted(es, key=lambda e: (e.class_index, e.track_id))
                  for f, es in other.frames.items() if es}
        return self.n_frames == other.n_frames and mine == theirs


def n_label_frames(duration_s: float) -> int:
    return int(round(duration_s / LABEL_FRAME_S))


def event_label_frames(onset: float, offset: float, n_frames: int) -> list[int]:
    """Label frames covered by an event interval [onset, offset).

    A frame is covered when the intersection with [0.1k, 0.1(k+1)) is at
    least 50 ms; events shorter than 50 ms cover their onset frame only.
    """
    if offset <= onset:
        return []
    if offset - onset < MIN_FRAME_OVERLAP_S:
        k = int(onset / LABEL_FRAME_S)
        return [k] if 0 <= k < n_frames else []
    first = int(onset / LABEL_FRAME_S)
    last = int(offset / LABEL_FRAME_S)
    frames = []
    for k in range(max(first, 0), min(last, n_frames - 1) + 1):
        lo = max(onset, k * LABEL_FRAME_S)
        hi = min(offset, (k + 1) * LABEL_FRAME_S)
        if hi - lo >= MIN_FRAME_OVERLAP_S - 1e-9:
            frames.append(k)
    return frames


def _max_concurrency(intervals: list[tuple[float, float, int]]) -> tuple[int, list[int]]:
    """Peak number of simultaneously open [onset, offset) intervals.

    Returns the peak and the event indices active at (one of) the peaks.
    """
    points = sorted({t for on, off, _ in intervals for t in (on, off)})
    best, best_ids = 0, []
    for t in points:
        active = [i for on, off, i in intervals if on <= t < off]
        if len(active) > best:
            best, best_ids = len(active), active
    return best, best_ids


def validate_script(script: SceneScript) -> list[str]:
    """Check every structural invariant; returns human-readable violations.

    An empty list means the script is well formed. Violations are data (for
    reporting), not exceptions.
    """
    violations = []
    for i, ev in enumerate(script.events):
        if not (0.0 <= ev.onset < ev.offset <= script.duration_s + 1e-9):
            violations.append(
                f"event {i} interval [{ev.onset:.3f}, {ev.offset:.3f}) outside "
                f"[0, {script.duration_s}]")
        if isinstance(ev.motion, Moving) and \
                ev.motion.speed_deg_per_s not in MOVING_SPEEDS_DEG_PER_S:
            violations.append(f"event {i} moving speed "
                              f"{ev.motion.speed_deg_per_s} not allowed")

    by_layer: dict[tuple[bool, int], list[tuple[float, float, int]]] = {}
    for i, ev in enumerate(script.events):
        by_layer.setdefault((ev.is_interferer, ev.layer_index), []).append(
            (ev.onset, ev.offset, i))
    for (_, layer), intervals in sorted(by_layer.items()):
        intervals.sort()
        for (on1, off1, i1), (on2, off2, i2) in zip(intervals, intervals[1:]):
            if on2 < off1 - 1e-9:
                violations.append(
                    f"intra-layer overlap in layer {layer}: events [{i1}, {i2}]")

    targets = [(ev.onset, ev.offset, i) for i, ev in enumerate(script.events)
               if not ev.is_interferer]
    interferers = [(ev.onset, ev.offset, i) for i, ev in enumerate(script.events)
                   if ev.is_interferer]
    peak, ids = _max_concurrency(targets)
    if peak > script.n_target_layers:
        violations.append(
            f"target polyphony > {script.n_target_layers}: events {sorted(ids)}")
    peak, ids = _max_concurrency(interferers)
    if peak > script.n_interferer_layers:
        violations.append(
            f"interferer polyphony > {script.n_interferer_layers}: "
            f"events {sorted(ids)}")

    if not 6.0 - 1e-9 <= script.snr_db <= 30.0 + 1e-9:
        violations.append(f"snr_db {script.snr_db} outside [6, 30]")
    if not 1 <= script.fold <= 8:
        violations.append(f"fold {script.fold} outside 1..8")
    return violations
