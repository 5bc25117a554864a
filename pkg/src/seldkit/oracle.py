"""Degraded-oracle predictor: turns reference labels into synthetic system
outputs with controlled, exactly quantified degradations, standing in for a
trained model in end-to-end metric tests.

DOA jitter is a rotation by a fixed angle in a uniformly random tangent
direction, so every surviving prediction sits at exactly the requested
angular error from its reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import random_doa, rotate_by_angle
from .model import LabelEntry, LabelFrameSet


@dataclass(frozen=True)
class DegradationSpec:
    doa_jitter_deg: float = 0.0
    p_miss: float = 0.0
    p_false: float = 0.0
    class_confusion: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_miss", "p_false", "class_confusion"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.doa_jitter_deg < 0:
            raise ValueError("jitter must be non-negative")

    @property
    def is_identity(self) -> bool:
        return (self.doa_jitter_deg == 0.0 and self.p_miss == 0.0
                and self.p_false == 0.0 and self.class_confusion == 0.0)


def degrade(ref: LabelFrameSet, spec: DegradationSpec,
            n_classes: int) -> LabelFrameSet:
    """Apply the spec'd degradations; the identity spec is a pass-through."""
    if spec.is_identity:
        return LabelFrameSet(n_frames=ref.n_frames,
                             frames={f: list(es) for f, es in ref.frames.items()})
    rng = np.random.default_rng(spec.seed)
    out = LabelFrameSet(n_frames=ref.n_frames)
    for frame in range(ref.n_frames):
        kept: list[LabelEntry] = []
        for entry in sorted(ref.entries(frame),
                            key=lambda e: (e.class_index, e.track_id)):
            if rng.random() < spec.p_miss:
                continue
            class_idx = entry.class_index
            if spec.class_confusion > 0 and rng.random() < spec.class_confusion:
                others = [c for c in range(n_classes) if c != class_idx]
                if others:
                    class_idx = int(rng.choice(others))
            doa = entry.doa
            if spec.doa_jitter_deg > 0:
                doa = rotate_by_angle(doa, spec.doa_jitter_deg, rng)
            kept.append(LabelEntry(class_idx, entry.track_id, doa))
        if spec.p_false > 0 and rng.random() < spec.p_false:
            kept.append(LabelEntry(int(rng.integers(n_classes)),
                                   _next_track(kept), random_doa(rng)))
        for entry in kept:
            _add_unique(out, frame, entry)
    return out


def _next_track(entries: list[LabelEntry]) -> int:
    return max((e.track_id for e in entries), default=-1) + 1


def _add_unique(labels: LabelFrameSet, frame: int, entry: LabelEntry):
    # Class confusion can collide with an existing (class, track); bump the
    # track id until free.
    taken = {(e.class_index, e.track_id) for e in labels.entries(frame)}
    track = entry.track_id
    while (entry.class_index, track) in taken:
        track += 1
    labels.add(frame, LabelEntry(entry.class_index, track, entry.doa))
