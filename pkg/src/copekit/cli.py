"""Command-line pipeline: configure, extract, train, detect, evaluate, mix, sweep.

All commands are deterministic given the config and seed. Exit codes:
0 success, 2 validation error (bad parameters/invariants), 3 data error
(unreadable or unusable inputs), 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import evaluation, features, mixer, sweep
from .audio_io import read_ground_truth, read_wav, resample
from .classifier import load_model, save_model, train_ova
from .config import PipelineConfig, load_config, save_config
from .errors import CopekitError, DataError, ValidationError
from .parallel import default_threads
from .peaks import extract_peaks

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

REJECT_TOKEN = "-"


def _read_manifest(path, required_columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    missing = [c for c in required_columns if reader.fieldnames is None or c not in reader.fieldnames]
    if missing:
        raise DataError(f"{path}: manifest missing columns {missing}")
    return rows


def _load_clip(path, config: PipelineConfig):
    clip = read_wav(path)
    return resample(clip, config.frontend_params.sample_rate)


def _effective_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "sample_rate", "channels", "f_min", "f_max", "frame_size",
            "sigma0", "t1", "support_ms", "c", "window_s", "hop_s", "seed",
        )
        if getattr(args, key, None) is not None
    }
    if "c" in overrides:
        overrides["c"] = overrides.pop("c")
    return config.override(**overrides)


def cmd_configure(args) -> int:
    config = _effective_config(args)
    rows = _read_manifest(args.manifest, ("path", "label"))
    if not rows:
        raise DataError(f"{args.manifest}: no prototypes listed")
    protos = [(_load_clip(row["path"], config), row["label"]) for row in rows]
    bank = features.configure_bank(
        protos,
        config.frontend(),
        config.cope.support_ms,
        config.cope.t1,
        config.cope.sigma0,
        threads=args.threads,
    )
    features.save_bank(args.out, bank)
    print(f"configured bank of {len(bank)} extractors -> {args.out}")
    return EXIT_OK


def _feature_header(bank):
    return [f"{ex.label}#{k}" for k, ex in enumerate(bank)]


def _window_label(truth, t0, t1):
    for label, start, end in truth:
        if min(t1, end) - max(t0, start) > 1e-9:
            return label
    return REJECT_TOKEN


def cmd_extract(args) -> int:
    config = _effective_config(args)
    bank = features.load_bank(args.bank)
    rows = _read_manifest(args.manifest, ("path",))
    if not rows:
        raise DataError(f"{args.manifest}: no clips listed")
    header = _feature_header(bank)
    out_rows = []
    for row in rows:
        clip = _load_clip(row["path"], config)
        label = row.get("label", "") or ""
        truth = None
        if args.label_from_truth:
            truth_path = row.get("truth", "")
            if not truth_path:
                raise DataError(f"{args.manifest}: --label-from-truth needs a truth column")
            truth = read_ground_truth(truth_path)
        if args.windows:
            g = bank[0].frontend.analyze(clip, threads=args.threads)
            constellation = extract_peaks(g)
            intervals = evaluation.window_intervals(
                clip.duration_s, config.eval.window_s, config.eval.hop_s
            )
            vectors = features.vectors_for_intervals(
                constellation, bank, intervals, threads=args.threads
            )
            for (t0, t1), vec in zip(intervals, vectors):
                row_label = _window_label(truth, t0, t1) if truth is not None else label
                out_rows.append([row["path"], row_label, repr(t0), repr(t1)]
                                + [repr(float(v)) for v in vec.values])
        else:
            vec = features.extract_vector_from_clip(clip, bank, threads=args.threads)
            out_rows.append([row["path"], label, repr(0.0), repr(clip.duration_s)]
                            + [repr(float(v)) for v in vec.values])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "start_s", "end_s"] + header)
        writer.writerows(out_rows)
    print(f"wrote {len(out_rows)} feature rows -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _effective_config(args)
    with open(args.features, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["path", "label", "start_s", "end_s"]:
            raise DataError(f"{args.features}: not a feature file")
        rows = [row for row in reader if row]
    labeled, background = [], []
    for row in rows:
        if not row[1]:
            continue  # unlabeled rows carry no training signal
        vec = np.array([float(v) for v in row[4:]])
        if row[1] == REJECT_TOKEN:
            background.append(vec)
        else:
            labeled.append((row[1], vec))
    if not labeled:
        raise DataError(f"{args.features}: no labeled rows to train on")
    X = np.vstack([vec for _, vec in labeled])
    labels = [label for label, _ in labeled]
    model = train_ova(
        X,
        labels,
        c=config.svm.c,
        background=np.vstack(background) if background else None,
        threads=args.threads,
    )
    save_model(args.out, model)
    print(
        f"trained {len(model.classes)}-class model on {len(labels)} vectors "
        f"(+{len(background)} background) -> {args.out}"
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    config = _effective_config(args)
    bank = features.load_bank(args.bank)
    model = load_model(args.model)
    stream = _load_clip(args.stream, config)
    records = evaluation.sliding_detection(
        stream, bank, model, config.eval.window_s, config.eval.hop_s, threads=args.threads
    )
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "start_s", "end_s", "decision"]
                        + [f"score_{cl}" for cl in model.classes])
        for r in records:
            writer.writerow(
                [r.index, repr(r.start_s), repr(r.end_s),
                 REJECT_TOKEN if r.decision is None else r.decision]
                + [repr(float(s)) for s in r.scores]
            )
    print(f"wrote {len(records)} detection records -> {args.out}")
    return EXIT_OK


def _read_records(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["window", "start_s", "end_s", "decision"]:
            raise DataError(f"{path}: not a detection record file")
        classes = tuple(c.removeprefix("score_") for c in header[4:])
        records = []
        for row in reader:
            if not row:
                continue
            decision = None if row[3] == REJECT_TOKEN else row[3]
            records.append(
                evaluation.DetectionRecord(
                    index=int(row[0]),
                    start_s=float(row[1]),
                    end_s=float(row[2]),
                    decision=decision,
                    scores=np.array([float(v) for v in row[4:]]),
                )
            )
    return records, classes


def cmd_evaluate(args) -> int:
    records, classes = _read_records(args.records)
    truth = read_ground_truth(args.truth)
    report = evaluation.score_events(records, truth, classes)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(evaluation.report_to_json(report) + "\n")
    print(evaluation.report_to_table(report))
    print(f"metrics -> {args.out}")

    if args.det or args.roc:
        if records:
            tops = [float(np.max(r.scores)) for r in records]
            lo, hi = min(tops) - 0.1, max(tops) + 0.1
        else:
            lo, hi = -1.0, 1.0
        thresholds = np.linspace(lo, hi, args.curve_points)
        if args.det:
            curve = evaluation.det_curve(records, truth, classes, thresholds)
            evaluation.write_curve_csv(args.det, curve)
            evaluation.write_curve_svg(str(Path(args.det).with_suffix(".svg")), curve)
            print(f"det curve -> {args.det}")
        if args.roc:
            curve = evaluation.roc_curve(records, truth, classes, thresholds)
            evaluation.write_curve_csv(args.roc, curve)
            evaluation.write_curve_svg(str(Path(args.roc).with_suffix(".svg")), curve)
            print(f"roc curve -> {args.roc}")
    return EXIT_OK


def cmd_mix(args) -> int:
    plans = mixer.read_plan(args.plan)
    for plan in plans:
        wav_path, truth_path = mixer.execute_plan(plan, args.out_dir)
        print(f"mixed {len(plan.entries)} events -> {wav_path}, {truth_path}")
    return EXIT_OK


def _read_scene_folds(path, config: PipelineConfig):
    rows = _read_manifest(path, ("fold", "wav", "truth"))
    folds: dict = {}
    for row in rows:
        scene = evaluation.Scene(
            clip=_load_clip(row["wav"], config),
            truth=read_ground_truth(row["truth"]),
            key=row["wav"],
        )
        folds.setdefault(int(row["fold"]), []).append(scene)
    return tuple(folds[k] for k in sorted(folds))


def cmd_sweep(args) -> int:
    config = _effective_config(args)
    folds = _read_scene_folds(args.scenes, config)
    values = tuple(float(v) for v in args.values.split(","))
    cfg = sweep.SweepConfig(
        parameter=args.param,
        values=values,
        config=config,
        folds=folds,
        protos_per_class=args.protos_per_class,
    )
    rows = sweep.run_sweep(cfg, threads=args.threads)
    sweep.write_sweep_csv(args.out, args.param, rows)
    for row in rows:
        print(f"{args.param}={row.value:g}  er={row.er:.4f} (nb {row.er_nb_std:.4f})"
              f"  fpr={row.fpr:.4f} (nb {row.fpr_nb_std:.4f})")
    print(f"sweep table -> {args.out}")
    return EXIT_OK


def _add_config_flags(parser):
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $COPEKIT_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--sample-rate", dest="sample_rate", type=int, default=None)
    parser.add_argument("--channels", type=int, default=None)
    parser.add_argument("--f-min", dest="f_min", type=float, default=None)
    parser.add_argument("--f-max", dest="f_max", type=float, default=None)
    parser.add_argument("--frame-size", dest="frame_size", type=int, default=None)
    parser.add_argument("--sigma0", type=float, default=None)
    parser.add_argument("--t1", type=float, default=None)
    parser.add_argument("--support-ms", dest="support_ms", type=float, default=None)
    parser.add_argument("--c", dest="c", type=float, default=None, help="SVM trade-off")
    parser.add_argument("--window-s", dest="window_s", type=float, default=None)
    parser.add_argument("--hop-s", dest="hop_s", type=float, default=None)
    parser.add_argument("--dump-config", default=None,
                        help="write the effective config JSON and continue")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copekit",
        description="Trainable energy-peak features for sound event detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("configure", help="configure an extractor bank from prototypes")
    p.add_argument("manifest", help="CSV with columns path,label")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_configure)

    p = sub.add_parser("extract", help="extract feature vectors from clips")
    p.add_argument("manifest", help="CSV with columns path[,label][,truth]")
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--windows", action="store_true",
                   help="one row per sliding window instead of per clip")
    p.add_argument("--label-from-truth", action="store_true",
                   help="label each window from the manifest's truth column "
                        f"({REJECT_TOKEN!r} for background windows)")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train", help="train the one-vs-all classifier")
    p.add_argument("features", help="feature CSV from `extract`")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("detect", help="sliding-window detection over a stream")
    p.add_argument("stream", help="WAV file")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("evaluate", help="score detection records against ground truth")
    p.add_argument("records", help="record CSV from `detect`")
    p.add_argument("truth", help="ground-truth CSV")
    p.add_argument("--out", required=True, help="metrics JSON")
    p.add_argument("--det", default=None, help="write miss/false-positive curve CSV (+SVG)")
    p.add_argument("--roc", default=None, help="write detection/false-positive curve CSV (+SVG)")
    p.add_argument("--curve-points", type=int, default=50)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("mix", help="superimpose events onto backgrounds at target SNR")
    p.add_argument("plan", help="CSV with columns background,event,t0_s,snr_db,label,seed")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_mix)

    p = sub.add_parser("sweep", help="parameter sensitivity sweep with cross-validation")
    p.add_argument("scenes", help="CSV with columns fold,wav,truth")
    p.add_argument("--param", required=True, choices=sweep.SWEEPABLE)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.add_argument("--protos-per-class", type=int, default=2)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    try:
        if getattr(args, "dump_config", None):
            save_config(args.dump_config, _effective_config(args))
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CopekitError as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
