"""Activity-coupled Cartesian DOA tensors: per label frame and class, one
3-vector whose direction is the DOA and whose length is the activity.

The representation holds one vector per class, so simultaneous same-class
tracks cannot both be expressed; encoding keeps the lowest track id and
counts the collision instead of failing silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import doa_to_unit_vector, unit_vector_to_doa
from .model import LabelEntry, LabelFrameSet

LABEL_FRAMES_PER_FEATURE_FRAME = 5
DEFAULT_THRESHOLD = 0.5


@dataclass
class AccdoaTensor:
    """(label_frames, classes, 3) activity vectors with norms <= 1."""

    values: np.ndarray
    collision_count: int = 0

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]


def frames_to_label_frames(n_feature_frames: int) -> int:
    """Label-frame count after the 5x temporal reduction."""
    return n_feature_frames // LABEL_FRAMES_PER_FEATURE_FRAME


def encode(labels: LabelFrameSet, n_classes: int,
           n_frames: int) -> AccdoaTensor:
    """Encode reference labels; frames beyond `n_frames` are dropped.

    When several tracks of one class share a frame, the lowest track id
    wins and the collision is counted.
    """
    values = np.zeros((n_frames, n_classes, 3))
    collisions = 0
    for frame, entries in labels.frames.items():
        if not 0 <= frame < n_frames:
            continue
        for entry in sorted(entries, key=lambda e: (e.class_index, e.track_id)):
            if entry.class_index >= n_classes:
                raise ValueError(f"class index {entry.class_index} >= "
                                 f"{n_classes}")
            if np.any(values[frame, entry.class_index] != 0.0):
                collisions += 1
                continue
            values[frame, entry.class_index] = doa_to_unit_vector(entry.doa)
    return AccdoaTensor(values=values, collision_count=collisions)


def decode(tensor: AccdoaTensor | np.ndarray,
           threshold: float = DEFAULT_THRESHOLD) -> LabelFrameSet:
    """Threshold vector norms into an annotation set (track ids all 0)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    values = tensor.values if isinstance(tensor, AccdoaTensor) else tensor
    labels = LabelFrameSet(n_frames=values.shape[0])
    norms = np.linalg.norm(values, axis=2)
    for frame, class_idx in zip(*np.nonzero(norms > threshold)):
        doa = unit_vector_to_doa(values[frame, class_idx])
        labels.add(int(frame), LabelEntry(int(class_idx), 0, doa))
    return labels
