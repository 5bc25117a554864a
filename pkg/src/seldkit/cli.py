"""Command-line entry point: dataset synthesis, feature extraction, oracle
prediction, evaluation, ranking, and synthetic bank generation.

Every subcommand is deterministic under a fixed seed; diagnostics go to
stderr and a nonzero exit code signals failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dataio
from .accdoa import encode, frames_to_label_frames
from .arrays import SAMPLE_RATE
from .banks import FORMATS, IrBank, anechoic_twin, build_room_banks
from .dataio import FileFormatError, RunConfig, fold_for_index, load_config
from .features import extract
from .metrics import finalize, accumulate_frames, rank_systems
from .model import ClassSet, SceneScript
from .oracle import DegradationSpec, degrade
from .scene import (SampleStore, assign_spatial, diffuse_ambience, mix_scene,
                    plan_layers, synthetic_sample_store)


@dataclass
class _Resources:
    class_set: ClassSet
    store: SampleStore
    rooms: list[dict[str, IrBank]]  # per room: format -> bank


def _load_resources(config: RunConfig, anechoic: bool) -> _Resources:
    class_set = config.class_set()
    if config.samples_dir:
        store = dataio.read_sample_store(config.samples_dir)
    else:
        opts = config.synthetic_samples or {}
        store = synthetic_sample_store(
            class_set,
            n_per_class=int(opts.get("n_per_class", 3)),
            duration_range_s=tuple(opts.get("duration_s", (1.5, 8.0))),
            seed=config.seed)
    rooms = []
    if config.bank_dirs:
        for bank_dir in config.bank_dirs:
            rooms.append({fmt: dataio.read_ir_bank(Path(bank_dir) / fmt)
                          for fmt in config.formats})
    else:
        opts = config.synthetic_banks or {}
        n_rooms = int(opts.get("n_rooms", 2))
        rt60_lo, rt60_hi = dataio._as_range(opts.get("rt60_s", (0.25, 0.45)))
        rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0xB0)))
        for r in range(n_rooms):
            rt60 = float(rng.uniform(rt60_lo, rt60_hi))
            rooms.append(build_room_banks(
                f"room{r + 1:02d}", seed=config.seed + 1000 * (r + 1),
                rt60_s=rt60,
                drr_at_1m_db=float(opts.get("drr_at_1m_db", 10.0)),
                n_circular_nodes=int(opts.get("circular_nodes", 360)),
                linear_arc_deg=float(opts.get("linear_arc_deg", 60.0)),
                formats=config.formats))
    if anechoic:
        rooms = [{fmt: anechoic_twin(bank) for fmt, bank in room.items()}
                 for room in rooms]
    return _Resources(class_set=class_set, store=store, rooms=rooms)


def _synthesize_one(config: RunConfig, resources: _Resources, index: int,
                    out_dir: Path, no_ambience: bool,
                    no_interferers: bool) -> dict:
    fold = fold_for_index(index)
    room = resources.rooms[(fold - 1) % len(resources.rooms)]
    recording_id = f"fold{fold}_mix{index + 1:03d}"

    recipe_rng = np.random.default_rng(
        np.random.SeedSequence((config.seed, index, 0x1)))
    gap = float(recipe_rng.uniform(*config.total_gap_s))
    snr = float(recipe_rng.uniform(*config.snr_db))

    script = plan_layers(
        resources.store.specs, resources.class_set, total_gap_s=gap,
        duration_s=config.duration_s,
        n_target_layers=config.n_target_layers,
        n_interferer_layers=config.n_interferer_layers,
        rng_seed=np.random.default_rng(
            np.random.SeedSequence((config.seed, index, 0x2))),
        recording_id=recording_id, fold=fold,
        room_id=next(iter(room.values())).room_id, snr_db=snr)
    script = assign_spatial(
        script, room[config.formats[0]], p_moving=config.p_moving,
        rng_seed=np.random.default_rng(
            np.random.SeedSequence((config.seed, index, 0x3))))

    rendered_script: SceneScript = script
    if no_interferers:
        rendered_script = script.with_events(
            ev for ev in script.events if not ev.is_interferer)

    ambience = None
    if config.ambience and not no_ambience:
        n_samples = int(round(config.duration_s * SAMPLE_RATE))
        ambience = diffuse_ambience(
            config.formats, n_samples,
            np.random.default_rng(
                np.random.SeedSequence((config.seed, index, 0x4))))

    audio, labels = mix_scene(rendered_script, resources.store, room,
                              ambience, resources.class_set)
    for fmt in config.formats:
        dataio.write_audio(out_dir / f"{fmt}_{recording_id}.wav", audio[fmt])
    dataio.write_metadata(out_dir / f"meta_{recording_id}.csv", labels)
    return {"recording_id": recording_id, "fold": fold,
            "room_id": script.room_id, "snr_db": snr, "total_gap_s": gap,
            "seed": config.seed, "index": index}


def cmd_synthesize(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    resources = _load_resources(config, anechoic=args.anechoic)
    entries = []
    for index in range(config.n_recordings):
        entry = _synthesize_one(config, resources, index, out_dir,
                                no_ambience=args.no_ambience,
                                no_interferers=args.no_interferers)
        entries.append(entry)
        print(f"synthesized {entry['recording_id']} "
              f"(snr {entry['snr_db']:.1f} dB)", file=sys.stderr)
    import json
    manifest = {
        "version": 1,
        "seed": config.seed,
        "flags": {"no_ambience": args.no_ambience,
                  "no_interferers": args.no_interferers,
                  "anechoic": args.anechoic},
        "recordings": sorted(entries, key=lambda e: e["recording_id"]),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return 0


def cmd_features(args) -> int:
    in_dir, out_dir = Path(args.input), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wavs = sorted(in_dir.glob(f"{args.format}_*.wav"))
    if not wavs:
        print(f"no {args.format}_*.wav files in {in_dir}", file=sys.stderr)
        return 2
    for wav in wavs:
        recording_id = wav.stem[len(args.format) + 1:]
        audio = dataio.read_audio(wav)
        stack = extract(audio, args.format)
        dataio.write_feature_dump(
            out_dir / f"features_{args.format}_{recording_id}.skt",
            stack.tensor)
        meta = in_dir / f"meta_{recording_id}.csv"
        if meta.exists():
            labels = dataio.read_metadata(meta)
            n_label = frames_to_label_frames(stack.tensor.shape[0])
            tensor = encode(labels, args.classes, n_label)
            dataio.write_accdoa_dump(out_dir / f"accdoa_{recording_id}.skt",
                                     tensor.values)
            if tensor.collision_count:
                print(f"{recording_id}: {tensor.collision_count} same-class "
                      f"collisions dropped by the ACCDOA encoding",
                      file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    import json
    with open(args.spec) as fh:
        raw = json.load(fh)
    base = DegradationSpec(
        doa_jitter_deg=float(raw.get("doa_jitter_deg", 0.0)),
        p_miss=float(raw.get("p_miss", 0.0)),
        p_false=float(raw.get("p_false", 0.0)),
        class_confusion=float(raw.get("class_confusion", 0.0)),
        seed=int(raw.get("seed", 0)))
    ref_dir, out_dir = Path(args.ref), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metas = sorted(ref_dir.glob("meta_*.csv"))
    if not metas:
        print(f"no meta_*.csv files in {ref_dir}", file=sys.stderr)
        return 2
    for k, meta in enumerate(metas):
        labels = dataio.read_metadata(meta)
        pred = degrade(labels, replace(base, seed=base.seed + k),
                       n_classes=args.classes)
        dataio.write_metadata(out_dir / meta.name, pred)
    return 0


def cmd_evaluate(args) -> int:
    ref_dir, pred_dir = Path(args.ref), Path(args.pred)
    refs = {p.stem: p for p in ref_dir.glob("meta_*.csv")}
    preds = {p.stem: p for p in pred_dir.glob("meta_*.csv")}
    if not refs:
        print(f"no meta_*.csv files in {ref_dir}", file=sys.stderr)
        return 2
    missing = sorted(set(refs) - set(preds))
    if missing:
        print("missing prediction files:", file=sys.stderr)
        for name in missing:
            print(f"  {name}.csv", file=sys.stderr)
        return 2
    counts = None
    for stem in sorted(refs):
        ref = dataio.read_metadata(refs[stem])
        pred = dataio.read_metadata(preds[stem])
        file_counts = accumulate_frames(ref, pred,
                                        threshold_deg=args.threshold,
                                        segment_frames=args.segment_frames,
                                        n_classes=args.classes)
        counts = file_counts if counts is None else counts.merge(file_counts)
    report = finalize(counts, threshold_deg=args.threshold,
                      segment_frames=args.segment_frames)
    print(dataio.format_report(report))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_report_text(out_dir / "report.txt", report)
    dataio.write_report_table(out_dir / "report.csv", report)
    from .plots import save_report_figure
    save_report_figure(report, out_dir / "report.png",
                       title=f"{pred_dir.name} vs {ref_dir.name}")
    return 0


def cmd_rank(args) -> int:
    reports = []
    for path in args.reports:
        path = Path(path)
        try:
            report = dataio.read_report_table(path)
        except FileFormatError as exc:
            print(f"unparseable report: {exc}", file=sys.stderr)
            return 2
        system_id = path.stem if path.stem != "report" else path.parent.name
        reports.append((system_id, report))
    ranked = rank_systems(reports)
    header = f"{'system':<24} {'ER':>6} {'F%':>6} {'LE':>6} {'LR%':>6} " \
             f"{'ranks':>12} {'sum':>4}"
    print(header)
    for s in ranked:
        m = s.metrics
        rank_str = "/".join(str(s.ranks[k]) for k in
                            ("er_20", "f_20", "le_cd", "lr_cd"))
        print(f"{s.system_id:<24} {m['er_20']:>6.3f} {100 * m['f_20']:>6.1f} "
              f"{m['le_cd']:>6.1f} {100 * m['lr_cd']:>6.1f} "
              f"{rank_str:>12} {s.rank_sum:>4}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        with open(out_dir / "rank.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["system", "er_20", "f_20", "le_cd", "lr_cd",
                             "rank_er", "rank_f", "rank_le", "rank_lr",
                             "rank_sum"])
            for s in ranked:
                writer.writerow([
                    s.system_id, s.metrics["er_20"], s.metrics["f_20"],
                    s.metrics["le_cd"], s.metrics["lr_cd"],
                    s.ranks["er_20"], s.ranks["f_20"], s.ranks["le_cd"],
                    s.ranks["lr_cd"], s.rank_sum])
        from .plots import save_rank_figure
        save_rank_figure(ranked, out_dir / "rank.png")
    return 0


def cmd_make_bank(args) -> int:
    out_dir = Path(args.out)
    rt60_lo, rt60_hi = dataio._as_range(
        tuple(float(v) for v in args.rt60.split(":")) if ":" in args.rt60
        else float(args.rt60))
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0xBA)))
    formats = tuple(args.formats.split(","))
    for r in range(args.rooms):
        rt60 = float(rng.uniform(rt60_lo, rt60_hi))
        room_id = f"room{r + 1:02d}"
        banks = build_room_banks(room_id, seed=args.seed + 1000 * (r + 1),
                                 rt60_s=rt60, drr_at_1m_db=args.drr,
                                 n_circular_nodes=args.circular_nodes,
                                 linear_arc_deg=args.linear_arc,
                                 formats=formats)
        for fmt, bank in banks.items():
            dataio.write_ir_bank(out_dir / room_id / fmt, bank)
        print(f"wrote {room_id} (rt60 {rt60:.2f} s)", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seldkit",
        description="Synthesize and evaluate spatial sound-event datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="render a dataset from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--no-ambience", action="store_true")
    p.add_argument("--no-interferers", action="store_true")
    p.add_argument("--anechoic", action="store_true",
                   help="spatialize with free-field array IRs at the same "
                        "positions instead of the room IRs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("features", help="extract model input features")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=list(FORMATS), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=12)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("oracle", help="degrade reference labels into "
                                      "synthetic predictions")
    p.add_argument("--ref", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=12)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--threshold", type=float, default=20.0)
    p.add_argument("--segment-frames", type=int, default=1)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="aggregate reports by rank sum")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("make-bank", help="generate synthetic IR banks")
    p.add_argument("--rooms", type=int, default=2)
    p.add_argument("--rt60", default="0.25:0.45",
                   help="seconds, fixed or lo:hi range")
    p.add_argument("--drr", type=float, default=10.0,
                   help="direct-to-reverberant ratio at 1 m, dB")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--formats", default="foa,mic")
    p.add_argument("--circular-nodes", type=int, default=360)
    p.add_argument("--linear-arc", type=float, default=60.0)
    p.set_defaults(func=cmd_make_bank)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
