"""Command-line entry point: ``evhar <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .bovw import Codebook, encode_video, sample_training_features, train_codebook
from .classify import CHANNEL_ORDER, EvalReport, SvmModel, derive_seed, ordered_channels, train_svm
from .config import load_config
from .errors import ConfigError, DataError, InvariantViolation
from .features import channel_kind
from .frames import dump_frames, events_to_frames, median_denoise
from .manifest import read_manifest
from .motion_maps import compute_motion_maps, export_map
from .pipeline import collect_features, emit_report, load_stream, run_pipeline
from .synthetic import write_synthetic_dataset

log = logging.getLogger("evhar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4


def _progress(msg: str) -> None:
    log.info(msg)


def _config(args):
    overrides = list(args.set or [])
    for flag, key in (("channels", "run.channels"), ("seed", "run.seed"), ("workers", "run.workers"),
                      ("classifier", "classifier.kind"), ("k", "codebook.k"), ("budget", "codebook.budget"),
                      ("C", "classifier.C")):
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "channels":
            value = "[" + ",".join(f'"{c.strip()}"' for c in value.split(",") if c.strip()) + "]"
        elif flag == "classifier":
            value = f'"{value}"'
        overrides.append(f"{key}={value}")
    return load_config(args.config, overrides)


def _selected_rows(args):
    rows = read_manifest(args.manifest)
    if getattr(args, "id", None):
        wanted = set(args.id)
        missing = wanted - {r.id for r in rows}
        if missing:
            raise DataError(f"ids not in manifest: {sorted(missing)}")
        rows = [r for r in rows if r.id in wanted]
    return rows


def _video(row, cfg):
    video = events_to_frames(load_stream(row, cfg), cfg.frames.fps, cfg.frames.gain)
    if cfg.frames.denoise:
        video = median_denoise(video, cfg.frames.denoise_radius)
    return video


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    w, h = _parse_geometry(args.geometry)
    manifest = write_synthetic_dataset(
        args.out, args.subjects, args.reps, [c.strip().upper() for c in args.classes.split(",")], (w, h),
        args.duration, args.noise_rate, args.threshold, args.format, args.seed, _progress)
    print(manifest)


def _parse_geometry(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"geometry must look like 64x64, got {text!r}") from None
    if w < 1 or h < 1:
        raise ConfigError("geometry must be positive")
    return w, h


def cmd_ingest(args):
    cfg = _config(args)
    rows = _selected_rows(args)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", "events", "duration_us", "on_fraction", "width", "height"])
        for row in rows:
            s = load_stream(row, cfg)
            on = float(s.on.mean()) if len(s) else 0.0
            w.writerow([row.id, len(s), s.duration_us, repr(on), *s.geometry])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_frames(args):
    cfg = _config(args)
    for row in _selected_rows(args):
        paths = dump_frames(_video(row, cfg), Path(args.out) / row.id)
        log.info("%s: %d frames", row.id, len(paths))


def cmd_maps(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for row in _selected_rows(args):
        for m in compute_motion_maps(_video(row, cfg)):
            export_map(m, out / f"{row.id}_{m.kind.value}.pgm")


def cmd_features(args):
    cfg = _config(args)
    rows = _selected_rows(args)
    channels = ordered_channels(cfg.run.channels)
    out = Path(args.out)
    videos = collect_features(rows, cfg, channels, out / "cache", _progress)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "group", "file"] + [f"n_{c}" for c in channels])
        for v in videos:
            np.savez(out / f"{v.id}.npz", **v.channels)
            w.writerow([v.id, v.label, v.group, f"{v.id}.npz"] + [len(v.channels[c]) for c in channels])


def _read_feature_index(directory):
    directory = Path(directory)
    try:
        with open(directory / "index.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read feature index: {exc}") from None
    return directory, rows


def _load_features(directory, row):
    with np.load(Path(directory) / row["file"]) as z:
        return {k: z[k] for k in z.files}


def cmd_codebook(args):
    cfg = _config(args)
    channel = args.channel.upper()
    if channel not in CHANNEL_ORDER:
        raise ConfigError(f"unknown channel {channel!r}")
    directory, rows = _read_feature_index(args.features)
    excluded = set(args.exclude_group or [])
    per_video = []
    for row in rows:
        if row["group"] in excluded:
            continue
        feats = _load_features(directory, row)
        if channel not in feats:
            raise DataError(f"{row['id']}: no {channel} features stored")
        per_video.append(feats[channel])
    k = int(cfg.codebook.k_per_channel.get(channel, cfg.codebook.k))
    tag = "+".join(sorted(excluded)) or "all"
    sample = sample_training_features(per_video, cfg.codebook.budget, derive_seed(cfg.run.seed, "sample", channel, tag))
    book = train_codebook(sample, k, derive_seed(cfg.run.seed, "kmeans", channel, tag), channel)
    book.save(args.out)
    log.info("%s codebook: k=%d from %d descriptors, %d iterations", channel, k, len(sample), len(book.objective) - 1)


def cmd_encode(args):
    directory, rows = _read_feature_index(args.features)
    books = {}
    for path in args.codebook:
        book = Codebook.load(path)
        books[book.kind] = book
    channels = ordered_channels(list(books))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "group", "channels"] + [f"h{i}" for i in range(sum(books[c].k for c in channels))])
        for row in rows:
            feats = _load_features(directory, row)
            hist = np.concatenate([encode_video(feats.get(c, np.zeros((0, channel_kind(c).length))), books[c])
                                   for c in channels])
            w.writerow([row["id"], row["label"], row["group"], "+".join(channels)] + [repr(float(v)) for v in hist])


def _read_encoded(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
    except OSError as exc:
        raise DataError(f"cannot read encoded features: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no encoded videos")
    ids = [r[0] for r in rows]
    labels = [r[1] for r in rows]
    groups = [r[2] for r in rows]
    channels = rows[0][3].split("+")
    X = np.array([[float(v) for v in r[4:]] for r in rows])
    return ids, labels, groups, channels, X


def cmd_train(args):
    cfg = _config(args)
    ids, labels, groups, channels, X = _read_encoded(args.encoded)
    keep = [i for i, g in enumerate(groups) if g not in set(args.exclude_group or [])]
    model = train_svm(X[keep], [labels[i] for i in keep], cfg.classifier.C, cfg.classifier.tol,
                      derive_seed(cfg.run.seed, "svm", "+".join(sorted(args.exclude_group or [])) or "all"), channels)
    model.save(args.out)


def cmd_eval(args):
    ids, labels, groups, channels, X = _read_encoded(args.encoded)
    model = SvmModel.load(args.model)
    if list(model.channels) != channels:
        raise DataError(f"model channels {model.channels} differ from encoded channels {channels}")
    wanted = set(args.group or groups)
    keep = [i for i, g in enumerate(groups) if g in wanted]
    pred = model.predict(X[keep]) if keep else []
    classes = sorted(set(model.classes) | {labels[i] for i in keep})
    report = EvalReport(tuple(channels), classes, [], [], np.zeros((len(classes), len(classes)), np.int64))
    for g in sorted(wanted):
        idx = [j for j, i in enumerate(keep) if groups[i] == g]
        if not idx:
            continue
        correct = 0
        for j in idx:
            i = keep[j]
            report.confusion[classes.index(labels[i]), classes.index(pred[j])] += 1
            report.predictions[ids[i]] = pred[j]
            correct += pred[j] == labels[i]
        report.folds.append(g)
        report.fold_accuracy.append(correct / len(idx))
    emit_report(report, args.out, labels={ids[i]: labels[i] for i in keep})
    print(f"mean accuracy {report.mean_accuracy:.4f} over {len(report.folds)} group(s)")


def cmd_pipeline(args):
    cfg = _config(args)
    head, reports = run_pipeline(args.manifest, cfg, args.out, args.cache, _progress)
    for s, r in reports.items():
        print(f"{'+'.join(s):>16}  mean {r.mean_accuracy:.4f}  pooled {r.pooled_accuracy:.4f}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evhar", description="Activity recognition from DVS event streams.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
        return sp

    def with_manifest(sp):
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--id", action="append", help="only this video id (repeatable)")
        return sp

    sp = sub.add_parser("simulate", help="write the synthetic gesture corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int, default=12)
    sp.add_argument("--reps", type=int, default=5)
    sp.add_argument("--classes", default="SWIPE_LEFT,SWIPE_RIGHT,SWIPE_UP,SWIPE_DOWN,CW_CIRCLE,CCW_CIRCLE")
    sp.add_argument("--geometry", default="64x64", help="WIDTHxHEIGHT")
    sp.add_argument("--duration", type=float, default=2.0, help="seconds per clip")
    sp.add_argument("--noise-rate", type=float, default=5.0, help="noise events per pixel per second")
    sp.add_argument("--threshold", type=float, default=0.2, help="log-intensity contrast threshold")
    sp.add_argument("--format", default="AEDAT2", choices=["AEDAT2", "CSV"])
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = with_manifest(with_config(sub.add_parser("ingest", help="parse every event file and summarise it")))
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.set_defaults(func=cmd_ingest)

    sp = with_manifest(with_config(sub.add_parser("frames", help="dump frame stacks as PGM images")))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_frames)

    sp = with_manifest(with_config(sub.add_parser("maps", help="write XY/XT/YT motion maps as PGM images")))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_maps)

    sp = with_manifest(with_config(sub.add_parser("features", help="extract descriptors per video")))
    sp.add_argument("--out", required=True)
    sp.add_argument("--channels", help="comma-separated channel list")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_features)

    sp = with_config(sub.add_parser("codebook", help="train a k-means codebook for one channel"))
    sp.add_argument("--features", required=True, help="directory written by 'features'")
    sp.add_argument("--channel", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--exclude-group", action="append", help="leave this group out (repeatable)")
    sp.add_argument("--k", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_codebook)

    sp = sub.add_parser("encode", help="encode stored features with one or more codebooks")
    sp.add_argument("--features", required=True)
    sp.add_argument("--codebook", action="append", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = with_config(sub.add_parser("train", help="train a one-vs-all linear SVM on encoded videos"))
    sp.add_argument("--encoded", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--exclude-group", action="append")
    sp.add_argument("--C", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained model on encoded videos")
    sp.add_argument("--encoded", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--group", action="append", help="only these groups (repeatable)")
    sp.set_defaults(func=cmd_eval)

    sp = with_config(sub.add_parser("pipeline", help="features, leave-one-group-out evaluation and reports"))
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--cache", help="feature cache directory (default: OUT/cache)")
    sp.add_argument("--channels")
    sp.add_argument("--classifier", choices=["svm", "knn", "majority"])
    sp.add_argument("--k", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--C", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
