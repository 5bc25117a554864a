"""Persistent formats: float32 WAV audio, metadata CSV, IR-bank containers,
self-describing tensor dumps, metric reports, run configuration, and the
fold/split bookkeeping.

All write/read pairs round-trip bit-exactly (metadata at integer-degree
resolution).
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .arrays import SAMPLE_RATE
from .banks import FORMATS, IrBank, Trajectory, TrajectoryNode
from .geometry import Doa, wrap_azimuth
from .metrics import MetricCounts, MetricsReport
from .model import (DEFAULT_INTERFERER_LABELS, DEFAULT_TARGET_CLASSES,
                    ClassSet, LabelEntry, LabelFrameSet, n_label_frames)
from .scene import SampleStore

TENSOR_MAGIC = b"SKT1"
BANK_MANIFEST = "index.json"
SAMPLES_MANIFEST = "samples.json"

DEFAULT_ROLES = {
    "training": (1, 2, 3, 4),
    "validation": (5,),
    "testing": (6,),
    "evaluation": (7, 8),
}


class FileFormatError(ValueError):
    """A persistent file violates its container contract."""


# ---------------------------------------------------------------------------
# audio

def _read_wav(path) -> tuple[int, np.ndarray]:
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise FileFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim == 1:
        data = data[:, None]
    return rate, data


def write_audio(path, audio: np.ndarray, sample_rate: int = SAMPLE_RATE):
    """Write a 4-channel float32 RIFF/WAVE file."""
    audio = np.asarray(audio)
    if audio.ndim != 2 or audio.shape[1] != 4:
        raise FileFormatError(f"expected (n, 4) audio, got shape {audio.shape}")
    wavfile.write(str(path), sample_rate, audio.astype(np.float32))


def read_audio(path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a 4-channel float32 WAV, checking channel count and rate."""
    rate, data = _read_wav(path)
    if rate != sample_rate:
        raise FileFormatError(f"{path}: sample rate {rate} != {sample_rate}")
    if data.shape[1] != 4:
        raise FileFormatError(f"{path}: expected 4 channels, found "
                              f"{data.shape[1]}")
    return data


# ---------------------------------------------------------------------------
# metadata CSV

def write_metadata(path, labels: LabelFrameSet):
    """Rows `frame,class,track,azimuth,elevation` with integer degrees,
    sorted by (frame, class, track)."""
    rows = []
    for frame in sorted(labels.frames):
        for e in sorted(labels.entries(frame),
                        key=lambda e: (e.class_index, e.track_id)):
            az = int(wrap_azimuth(round(e.doa.azimuth)))
            el = int(round(e.doa.elevation))
            rows.append((frame, e.class_index, e.track_id, az, el))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)


def read_metadata(path, n_frames: int | None = None) -> LabelFrameSet:
    """Parse a metadata CSV; malformed or out-of-range rows raise
    FileFormatError naming the line."""
    if n_frames is None:
        n_frames = n_label_frames(60.0)
    entries = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 5:
                raise FileFormatError(f"{path}:{line_no}: expected 5 columns, "
                                      f"found {len(row)}")
            try:
                frame, class_idx, track, az, el = (int(v) for v in row)
            except ValueError:
                raise FileFormatError(f"{path}:{line_no}: non-integer field "
                                      f"in {row}") from None
            if frame < 0 or class_idx < 0 or track < 0:
                raise FileFormatError(f"{path}:{line_no}: negative index")
            if not -180 <= az < 180:
                raise FileFormatError(f"{path}:{line_no}: azimuth {az} outside "
                                      f"[-180, 180)")
            if not -90 <= el <= 90:
                raise FileFormatError(f"{path}:{line_no}: elevation {el} "
                                      f"outside [-90, 90]")
            entries.append((frame, class_idx, track, az, el))
    total = max(n_frames, max((e[0] for e in entries), default=-1) + 1)
    labels = LabelFrameSet(n_frames=total)
    for frame, class_idx, track, az, el in entries:
        labels.add(frame, LabelEntry(class_idx, track, Doa(float(az), float(el))))
    return labels


# ---------------------------------------------------------------------------
# IR banks

def write_ir_bank(directory, bank: IrBank):
    """Bank container: an `index.json` manifest plus one 4n-channel IR WAV
    per trajectory (node k occupies channels 4k..4k+3)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "room_id": bank.room_id,
        "format": bank.format,
        "sample_rate": bank.sample_rate,
        "rt60_s": bank.rt60_s,
        "trajectories": [],
    }
    for t_idx, traj in enumerate(bank.trajectories):
        audio_name = f"traj_{t_idx:03d}.wav"
        stack = bank.irs[traj.trajectory_id]  # (n, taps, 4)
        flat = stack.transpose(1, 0, 2).reshape(stack.shape[1], -1)
        wavfile.write(str(directory / audio_name), bank.sample_rate,
                      flat.astype(np.float32))
        manifest["trajectories"].append({
            "trajectory_id": traj.trajectory_id,
            "shape": traj.shape,
            "audio": audio_name,
            "nodes": [{"azimuth": n.doa.azimuth, "elevation": n.doa.elevation,
                       "distance_m": n.distance_m} for n in traj.nodes],
        })
    with open(directory / BANK_MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def read_ir_bank(directory) -> IrBank:
    """Load and validate a bank directory written by `write_ir_bank`."""
    directory = Path(directory)
    manifest_path = directory / BANK_MANIFEST
    if not manifest_path.exists():
        raise FileFormatError(f"{directory}: missing {BANK_MANIFEST}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    trajectories = []
    irs = {}
    for entry in manifest["trajectories"]:
        nodes = tuple(TrajectoryNode(Doa(n["azimuth"], n["elevation"]),
                                     n["distance_m"])
                      for n in entry["nodes"])
        traj = Trajectory(entry["trajectory_id"], manifest["room_id"],
                          entry["shape"], nodes)
        audio_path = directory / entry["audio"]
        if not audio_path.exists():
            raise FileFormatError(f"{directory}: missing IR audio "
                                  f"{entry['audio']}")
        rate, flat = _read_wav(audio_path)
        if rate != manifest["sample_rate"]:
            raise FileFormatError(f"{audio_path}: sample rate {rate} != "
                                  f"manifest {manifest['sample_rate']}")
        if flat.shape[1] != 4 * traj.n_nodes:
            raise FileFormatError(
                f"{audio_path}: {flat.shape[1]} channels but manifest lists "
                f"{traj.n_nodes} nodes (need {4 * traj.n_nodes})")
        stack = flat.reshape(flat.shape[0], traj.n_nodes, 4).transpose(1, 0, 2)
        trajectories.append(traj)
        irs[traj.trajectory_id] = np.ascontiguousarray(stack, dtype=float)
    return IrBank(room_id=manifest["room_id"], format=manifest["format"],
                  trajectories=tuple(trajectories), irs=irs,
                  sample_rate=manifest["sample_rate"],
                  rt60_s=manifest.get("rt60_s"))


# ---------------------------------------------------------------------------
# tensor dumps

def write_tensor(path, tensor: np.ndarray, axis_labels: tuple[str, ...]):
    """Self-describing little-endian float32 dump:
    magic "SKT1", u32 rank, u32 dims[rank], then per-axis u32 length +
    UTF-8 label, then the C-order payload."""
    tensor = np.asarray(tensor)
    if tensor.ndim != len(axis_labels):
        raise ValueError(f"{tensor.ndim} axes but {len(axis_labels)} labels")
    if any(d >= 2 ** 32 for d in tensor.shape):
        raise ValueError("dimension overflow")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", tensor.ndim))
        fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        for label in axis_labels:
            raw = label.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(tensor.astype("<f4").tobytes(order="C"))


def read_tensor(path) -> tuple[np.ndarray, tuple[str, ...]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != TENSOR_MAGIC:
        raise FileFormatError(f"{path}: bad magic {blob[:4]!r}")
    offset = 4
    (rank,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    labels = []
    for _ in range(rank):
        (n,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        labels.append(blob[offset: offset + n].decode("utf-8"))
        offset += n
    expected = int(np.prod(dims)) * 4
    payload = blob[offset:]
    if len(payload) != expected:
        raise FileFormatError(f"{path}: payload {len(payload)} bytes, header "
                              f"implies {expected}")
    tensor = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return tensor, tuple(labels)


def write_feature_dump(path, tensor: np.ndarray):
    write_tensor(path, tensor, ("frame", "mel", "feature"))


def write_accdoa_dump(path, tensor: np.ndarray):
    write_tensor(path, tensor, ("label_frame", "class", "xyz"))


# ---------------------------------------------------------------------------
# metric reports

REPORT_FIELDS = ("er_20", "f_20", "le_cd", "lr_cd", "threshold_deg",
                 "segment_frames", "tp", "fp", "fn", "nref", "subs", "dels",
                 "ins", "n_pairs", "n_units")


def _report_values(report: MetricsReport) -> dict:
    c = report.counts
    return {
        "er_20": report.er_20, "f_20": report.f_20,
        "le_cd": report.le_cd, "lr_cd": report.lr_cd,
        "threshold_deg": report.threshold_deg,
        "segment_frames": report.segment_frames,
        "tp": int(c.tp.sum()), "fp": int(c.fp.sum()), "fn": int(c.fn.sum()),
        "nref": int(c.nref.sum()), "subs": c.subs, "dels": c.dels,
        "ins": c.ins, "n_pairs": int(c.n_pairs.sum()), "n_units": c.n_units,
    }


def format_report(report: MetricsReport) -> str:
    """Human-readable summary used on stdout and in the key/value file."""
    lines = [
        f"ER_20: {report.er_20:.3f}",
        f"F_20: {100.0 * report.f_20:.1f}%",
        f"LE_CD: {report.le_cd:.1f} deg",
        f"LR_CD: {100.0 * report.lr_cd:.1f}%",
    ]
    for key, value in _report_values(report).items():
        if key in ("er_20", "f_20", "le_cd", "lr_cd"):
            continue
        lines.append(f"{key}: {value}")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)


def write_report_text(path, report: MetricsReport):
    values = _report_values(report)
    with open(path, "w") as fh:
        for key in REPORT_FIELDS:
            fh.write(f"{key}: {values[key]}\n")
        for note in report.notes:
            fh.write(f"note: {note}\n")


def write_report_table(path, report: MetricsReport):
    """Machine-readable table: an `overall` row with the pooled metrics
    followed by one row per class with references."""
    values = _report_values(report)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("scope",) + REPORT_FIELDS)
        writer.writerow(["overall"] + [values[k] for k in REPORT_FIELDS])
        c = report.counts
        for k in range(c.n_classes):
            if c.nref[k] == 0:
                continue
            writer.writerow([
                f"class_{k}", "", "",
                f"{report.class_le[k]:.6f}", f"{report.class_lr[k]:.6f}",
                report.threshold_deg, report.segment_frames,
                c.tp[k], c.fp[k], c.fn[k], c.nref[k], "", "", "",
                c.n_pairs[k], "",
            ])


def read_report_table(path) -> MetricsReport:
    """Parse the `overall` row of a report table back into a report
    (per-class detail and the pair pool are not reconstructed)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:1]) != ("scope",):
        raise FileFormatError(f"{path}: not a report table")
    header = rows[0]
    overall = next((r for r in rows[1:] if r and r[0] == "overall"), None)
    if overall is None:
        raise FileFormatError(f"{path}: missing overall row")
    values = dict(zip(header[1:], overall[1:]))
    counts = MetricCounts(1)
    counts.subs = int(values["subs"])
    counts.dels = int(values["dels"])
    counts.ins = int(values["ins"])
    counts.n_units = int(values["n_units"])
    counts.tp[0] = int(values["tp"])
    counts.fp[0] = int(values["fp"])
    counts.fn[0] = int(values["fn"])
    counts.nref[0] = int(values["nref"])
    counts.n_pairs[0] = int(values["n_pairs"])
    return MetricsReport(
        er_20=float(values["er_20"]), f_20=float(values["f_20"]),
        le_cd=float(values["le_cd"]), lr_cd=float(values["lr_cd"]),
        counts=counts, threshold_deg=float(values["threshold_deg"]),
        segment_frames=int(values["segment_frames"]))


# ---------------------------------------------------------------------------
# run configuration and splits

@dataclass(frozen=True)
class RunConfig:
    n_recordings: int
    seed: int
    duration_s: float = 60.0
    n_target_layers: int = 3
    n_interferer_layers: int = 1
    total_gap_s: tuple[float, float] = (25.0, 35.0)
    snr_db: tuple[float, float] = (6.0, 30.0)
    p_moving: float = 0.3
    formats: tuple[str, ...] = FORMATS
    bank_dirs: tuple[str, ...] = ()
    synthetic_banks: dict | None = None
    samples_dir: str | None = None
    synthetic_samples: dict | None = None
    ambience: bool = True
    target_classes: tuple[str, ...] = DEFAULT_TARGET_CLASSES
    interferer_labels: tuple[str, ...] = DEFAULT_INTERFERER_LABELS

    def __post_init__(self):
        if self.n_recordings < 1:
            raise ValueError("n_recordings must be >= 1")
        lo, hi = self.snr_db
        if not (6.0 <= lo <= hi <= 30.0):
            raise ValueError(f"snr range {self.snr_db} outside [6, 30]")
        lo, hi = self.total_gap_s
        if not (0.0 <= lo <= hi):
            raise ValueError(f"invalid gap range {self.total_gap_s}")
        if not 0.0 <= self.p_moving <= 1.0:
            raise ValueError("p_moving must be a probability")

    def class_set(self) -> ClassSet:
        return ClassSet(tuple(self.target_classes),
                        tuple(self.interferer_labels))


def _as_range(value) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    lo, hi = value
    return (float(lo), float(hi))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        samples = raw.get("samples", {})
        banks = raw.get("banks", {})
        return RunConfig(
            n_recordings=int(raw["n_recordings"]),
            seed=int(raw["seed"]),
            duration_s=float(raw.get("duration_s", 60.0)),
            n_target_layers=int(raw.get("n_target_layers", 3)),
            n_interferer_layers=int(raw.get("n_interferer_layers", 1)),
            total_gap_s=_as_range(raw.get("total_gap_s", (25.0, 35.0))),
            snr_db=_as_range(raw.get("snr_db", (6.0, 30.0))),
            p_moving=float(raw.get("p_moving", 0.3)),
            formats=tuple(raw.get("formats", list(FORMATS))),
            bank_dirs=tuple(banks.get("paths", ())),
            synthetic_banks=banks.get("synthetic"),
            samples_dir=samples.get("path"),
            synthetic_samples=samples.get("synthetic"),
            ambience=bool(raw.get("ambience", True)),
            target_classes=tuple(raw.get("target_classes",
                                         DEFAULT_TARGET_CLASSES)),
            interferer_labels=tuple(raw.get("interferer_labels",
                                            DEFAULT_INTERFERER_LABELS)),
        )
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing config field {exc}") from exc


@dataclass(frozen=True)
class SplitSpec:
    """Fold assignment per recording plus the role each fold plays."""

    fold_of: dict[str, int] = field(default_factory=dict)
    roles: dict[str, tuple[int, ...]] = field(
        default_factory=lambda: dict(DEFAULT_ROLES))

    def __post_init__(self):
        seen: dict[int, str] = {}
        for role, folds in self.roles.items():
            for f in folds:
                if f in seen:
                    raise ValueError(f"fold {f} in both {seen[f]} and {role}")
                seen[f] = role
        for rec, fold in self.fold_of.items():
            if fold not in seen:
                raise ValueError(f"recording {rec}: fold {fold} has no role")

    def role_of(self, recording_id: str) -> str:
        fold = self.fold_of[recording_id]
        for role, folds in self.roles.items():
            if fold in folds:
                return role
        raise KeyError(f"fold {fold} has no role")

    def recordings_for_role(self, role: str) -> list[str]:
        folds = set(self.roles[role])
        return sorted(r for r, f in self.fold_of.items() if f in folds)


def fold_for_index(index: int, n_folds: int = 8) -> int:
    """Round-robin fold assignment, 1-based."""
    return 1 + index % n_folds


# ---------------------------------------------------------------------------
# sample stores on disk

def write_sample_store(directory, store: SampleStore):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for spec in store.specs:
        name = f"{spec.sample_id}.wav"
        audio = store.load(spec.sample_id).astype(np.float32)
        wavfile.write(str(directory / name), store.sample_rate, audio)
        manifest.append({"sample_id": spec.sample_id,
                         "class_label": spec.class_label, "file": name})
    with open(directory / SAMPLES_MANIFEST, "w") as fh:
        json.dump({"version": 1, "sample_rate": store.sample_rate,
                   "samples": manifest}, fh, indent=1, sort_keys=True)


def read_sample_store(directory) -> SampleStore:
    directory = Path(directory)
    manifest_path = directory / SAMPLES_MANIFEST
    if not manifest_path.exists():
        raise FileFormatError(f"{directory}: missing {SAMPLES_MANIFEST}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    audio, classes = {}, {}
    for entry in manifest["samples"]:
        rate, data = _read_wav(directory / entry["file"])
        if rate != manifest["sample_rate"]:
            raise FileFormatError(f"{entry['file']}: sample rate {rate} != "
                                  f"{manifest['sample_rate']}")
        audio[entry["sample_id"]] = data[:, 0].astype(float)
        classes[entry["sample_id"]] = entry["class_label"]
    return SampleStore(audio, classes, sample_rate=manifest["sample_rate"])
