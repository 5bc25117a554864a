"""Joint localization/detection metrics with location-threshold counting.

Detections are matched to references class by class with an optimal
(Hungarian) assignment on great-circle distance. Matched pairs within the
spatial threshold are true positives; pairs beyond it count as one false
positive plus one false negative, but still feed the class-dependent
localization error and recall, which ignore the threshold. Substitutions,
deletions and insertions are pooled over classes per evaluation unit (label
frame, or segment when pooling is enabled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Doa, doas_to_unit_vectors, pairwise_angular_distance, \
    unit_vector_to_doa
from .model import LabelEntry, LabelFrameSet

DEFAULT_THRESHOLD_DEG = 20.0
UNMATCHED_CLASS_LE_DEG = 180.0


@dataclass
class MetricCounts:
    """Additive per-class and pooled tallies; mergeable across files."""

    n_classes: int
    tp: np.ndarray = None
    fp: np.ndarray = None
    fn: np.ndarray = None
    nref: np.ndarray = None
    n_pairs: np.ndarray = None
    pair_error_sum: np.ndarray = None
    pair_errors: list = field(default_factory=list)  # (class, degrees)
    subs: int = 0
    dels: int = 0
    ins: int = 0
    n_units: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "nref", "n_pairs"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.n_classes, dtype=int))
        if self.pair_error_sum is None:
            self.pair_error_sum = np.zeros(self.n_classes)

    def merge(self, other: "MetricCounts") -> "MetricCounts":
        if other.n_classes != self.n_classes:
            raise ValueError("class counts differ")
        out = MetricCounts(self.n_classes)
        for name in ("tp", "fp", "fn", "nref", "n_pairs", "pair_error_sum"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.pair_errors = self.pair_errors + other.pair_errors
        out.subs = self.subs + other.subs
        out.dels = self.dels + other.dels
        out.ins = self.ins + other.ins
        out.n_units = self.n_units + other.n_units
        return out


@dataclass
class MetricsReport:
    """The four joint metrics plus the raw tallies behind them."""

    er_20: float
    f_20: float
    le_cd: float
    lr_cd: float
    counts: MetricCounts
    threshold_deg: float = DEFAULT_THRESHOLD_DEG
    segment_frames: int = 1
    class_le: np.ndarray = None
    class_lr: np.ndarray = None
    notes: tuple[str, ...] = ()


def pair_within_class(refs: list[Doa], preds: list[Doa]):
    """Optimal one-to-one DOA assignment minimizing total angular distance.

    Returns (pairs, unmatched_ref_indices, unmatched_pred_indices) where
    each pair is (ref_index, pred_index, error_degrees) and the number of
    pairs is min(len(refs), len(preds)).
    """
    if not refs or not preds:
        return [], list(range(len(refs))), list(range(len(preds)))
    cost = pairwise_angular_distance(doas_to_unit_vectors(refs),
                                     doas_to_unit_vectors(preds))
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c), float(cost[r, c])) for r, c in zip(rows, cols)]
    unmatched_refs = sorted(set(range(len(refs))) - set(rows.tolist()))
    unmatched_preds = sorted(set(range(len(preds))) - set(cols.tolist()))
    return pairs, unmatched_refs, unmatched_preds


def accumulate(counts: MetricCounts, ref_entries: list[LabelEntry],
               pred_entries: list[LabelEntry],
               threshold_deg: float = DEFAULT_THRESHOLD_DEG) -> MetricCounts:
    """Fold one evaluation unit (the entries of one frame or pooled segment)
    into the tallies."""
    unit_fn = 0
    unit_fp = 0
    classes = sorted({e.class_index for e in ref_entries} |
                     {e.class_index for e in pred_entries})
    for c in classes:
        refs = [e.doa for e in ref_entries if e.class_index == c]
        preds = [e.doa for e in pred_entries if e.class_index == c]
        counts.nref[c] += len(refs)
        pairs, un_ref, un_pred = pair_within_class(refs, preds)
        for _, _, err in pairs:
            counts.n_pairs[c] += 1
            counts.pair_error_sum[c] += err
            counts.pair_errors.append((c, err))
            if err <= threshold_deg:
                counts.tp[c] += 1
            else:
                counts.fp[c] += 1
                counts.fn[c] += 1
                unit_fp += 1
                unit_fn += 1
        counts.fp[c] += len(un_pred)
        counts.fn[c] += len(un_ref)
        unit_fp += len(un_pred)
        unit_fn += len(un_ref)
    counts.subs += min(unit_fn, unit_fp)
    counts.dels += max(0, unit_fn - unit_fp)
    counts.ins += max(0, unit_fp - unit_fn)
    counts.n_units += 1
    return counts


def finalize(counts: MetricCounts,
             threshold_deg: float = DEFAULT_THRESHOLD_DEG,
             segment_frames: int = 1) -> MetricsReport:
    """Close the books: micro ER/F over pooled counts, macro LE/LR over
    classes that have references."""
    notes = []
    total_nref = int(counts.nref.sum())
    tp, fp, fn = int(counts.tp.sum()), int(counts.fp.sum()), int(counts.fn.sum())

    if total_nref > 0:
        er = (counts.subs + counts.dels + counts.ins) / total_nref
    else:
        notes.append("undefined: no reference events; ER/F reflect "
                     "insertions only")
        er = float(counts.ins)
    f = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0

    has_refs = counts.nref > 0
    class_le = np.full(counts.n_classes, np.nan)
    class_lr = np.full(counts.n_classes, np.nan)
    for c in np.nonzero(has_refs)[0]:
        if counts.n_pairs[c] > 0:
            class_le[c] = counts.pair_error_sum[c] / counts.n_pairs[c]
        else:
            class_le[c] = UNMATCHED_CLASS_LE_DEG
            notes.append(f"class {c}: no matched pairs, LE set to "
                         f"{UNMATCHED_CLASS_LE_DEG:.0f} deg")
        class_lr[c] = counts.n_pairs[c] / counts.nref[c]
    if has_refs.any():
        le = float(np.nanmean(class_le))
        lr = float(np.nanmean(class_lr))
    else:
        le, lr = 0.0, 0.0

    return MetricsReport(er_20=float(er), f_20=float(f), le_cd=le, lr_cd=lr,
                         counts=counts, threshold_deg=threshold_deg,
                         segment_frames=segment_frames,
                         class_le=class_le, class_lr=class_lr,
                         notes=tuple(notes))


def _pool_segment(label_set: LabelFrameSet, seg: int,
                  segment_frames: int, n_frames: int) -> list[LabelEntry]:
    """One pooled entry per (class, track) active anywhere in the segment,
    located at the normalized mean of its unit vectors."""
    groups: dict[tuple[int, int], list[Doa]] = {}
    for k in range(seg * segment_frames,
                   min((seg + 1) * segment_frames, n_frames)):
        for e in label_set.entries(k):
            groups.setdefault((e.class_index, e.track_id), []).append(e.doa)
    pooled = []
    for (c, t), doas in sorted(groups.items()):
        if len(doas) == 1:
            pooled.append(LabelEntry(c, t, doas[0]))
        else:
            mean = doas_to_unit_vectors(doas).mean(axis=0)
            pooled.append(LabelEntry(c, t, unit_vector_to_doa(mean)))
    return pooled


def evaluate(ref: LabelFrameSet, pred: LabelFrameSet,
             threshold_deg: float = DEFAULT_THRESHOLD_DEG,
             segment_frames: int = 1, n_classes: int | None = None
             ) -> MetricsReport:
    """Score predictions against references over all frames.

    Predictions are truncated (or implicitly padded empty) to the reference
    frame count. With `segment_frames` > 1, activities and DOAs are pooled
    per segment and per (class, track) before matching.
    """
    counts = accumulate_frames(ref, pred, threshold_deg, segment_frames,
                               n_classes)
    return finalize(counts, threshold_deg, segment_frames)


def accumulate_frames(ref: LabelFrameSet, pred: LabelFrameSet,
                      threshold_deg: float = DEFAULT_THRESHOLD_DEG,
                      segment_frames: int = 1,
                      n_classes: int | None = None) -> MetricCounts:
    """Per-file tallies, mergeable across files before `finalize`."""
    if segment_frames < 1:
        raise ValueError("segment_frames must be >= 1")
    if n_classes is None:
        indices = [e.class_index for es in ref.frames.values() for e in es]
        indices += [e.class_index for es in pred.frames.values() for e in es]
        n_classes = max(indices, default=-1) + 1
    counts = MetricCounts(max(n_classes, 1))
    n_frames = ref.n_frames
    n_segments = math.ceil(n_frames / segment_frames)
    for seg in range(n_segments):
        if segment_frames == 1:
            ref_entries = ref.entries(seg)
            pred_entries = pred.entries(seg) if seg < pred.n_frames else []
        else:
            ref_entries = _pool_segment(ref, seg, segment_frames, n_frames)
            pred_entries = _pool_segment(pred, seg, segment_frames, n_frames)
        accumulate(counts, ref_entries, pred_entries, threshold_deg)
    return counts


@dataclass
class RankedSystem:
    system_id: str
    metrics: dict[str, float]
    ranks: dict[str, int]
    rank_sum: int


# Lower is better for ER and LE, higher for F and LR.
_RANK_DIRECTIONS = {"er_20": 1.0, "f_20": -1.0, "le_cd": 1.0, "lr_cd": -1.0}


def rank_systems(reports: list[tuple[str, MetricsReport]]) -> list[RankedSystem]:
    """Challenge-style aggregation: rank each metric independently (ties
    share the best rank), order by ascending rank sum, break residual ties
    by ER and then by system id."""
    if not reports:
        raise ValueError("no reports to rank")
    table = [(sid, {"er_20": r.er_20, "f_20": r.f_20,
                    "le_cd": r.le_cd, "lr_cd": r.lr_cd})
             for sid, r in reports]
    ranked = []
    for sid, metrics in table:
        ranks = {}
        for name, sign in _RANK_DIRECTIONS.items():
            better = sum(1 for _, other in table
                         if sign * other[name] < sign * metrics[name])
            ranks[name] = better + 1
        ranked.append(RankedSystem(system_id=sid, metrics=metrics,
                                   ranks=ranks, rank_sum=sum(ranks.values())))
    ranked.sort(key=lambda s: (s.rank_sum, s.metrics["er_20"], s.system_id))
    return ranked
