"""End-to-end runs from a manifest: features (cached), cross-validation, reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classify import CHANNEL_ORDER, EvalReport, VideoFeatures, cross_validate, ordered_channels
from .config import PipelineConfig
from .errors import DataError
from .event_io import EventStream, get_profile, parse_aedat, parse_csv_events
from .features import MAP_CHANNELS, TRACK_CHANNELS, empty_features, extract_features
from .manifest import ManifestRow, read_manifest

log = logging.getLogger(__name__)

# bump when descriptor code changes so stale cache entries are not reused
FEATURE_VERSION = 1


def _with_id(exc: DataError, vid: str) -> DataError:
    """Same error type, message prefixed with the video id."""
    try:
        new = type(exc)(f"{vid}: {exc}")
    except TypeError:
        new = DataError(f"{vid}: {exc}")
    return new


def load_stream(row: ManifestRow, cfg: PipelineConfig, data: bytes | None = None) -> EventStream:
    try:
        if data is None:
            data = Path(row.path).read_bytes()
        profile = get_profile(row.profile)
        if cfg.data.geometry:
            profile = profile.with_geometry(*cfg.data.geometry)
        if row.format == "CSV":
            return parse_csv_events(data, profile.geometry)
        return parse_aedat(data, profile, allow_wrap=cfg.data.allow_wrap)
    except OSError as exc:
        raise DataError(f"{row.id}: cannot read {row.path}: {exc}") from None
    except DataError as exc:
        raise _with_id(exc, row.id) from exc


def _stage_settings(stage: str, cfg: PipelineConfig, channels: Sequence[str]) -> dict:
    common = {"frames": dataclasses.asdict(cfg.frames), "data": dataclasses.asdict(cfg.data),
              "version": FEATURE_VERSION, "stage": stage, "channels": list(channels)}
    if stage == "maps":
        common["surf"] = dataclasses.asdict(cfg.surf)
    else:
        common["trajectories"] = dataclasses.asdict(cfg.trajectories)
    return common


def cache_key(data: bytes, row: ManifestRow, stage: str, cfg: PipelineConfig, channels: Sequence[str]) -> str:
    h = hashlib.sha256()
    h.update(data)
    h.update(json.dumps([row.format, row.profile, _stage_settings(stage, cfg, channels)], sort_keys=True).encode())
    return h.hexdigest()


def _save_npz(path: Path, arrays: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def _load_npz(path: Path) -> dict | None:
    try:
        with np.load(path) as z:
            return {k: z[k] for k in z.files}
    except (OSError, ValueError):
        return None


def video_features(row: ManifestRow, cfg: PipelineConfig, channels: Sequence[str],
                   cache_dir: Path | None = None) -> dict:
    """Descriptor arrays for one manifest row, using the stage cache when possible.

    Parse errors propagate (prefixed with the video id). Failures during
    feature extraction are logged and give empty descriptor sets.
    """
    try:
        data = Path(row.path).read_bytes()
    except OSError as exc:
        raise DataError(f"{row.id}: cannot read {row.path}: {exc}") from None
    stages = []
    if any(c in MAP_CHANNELS for c in channels):
        stages.append(("maps", MAP_CHANNELS))
    tracks = tuple(c for c in TRACK_CHANNELS if c in channels)
    if tracks:
        stages.append(("tracks", tracks))
    out: dict = {}
    stream = None
    for stage, stage_channels in stages:
        path = Path(cache_dir) / f"{cache_key(data, row, stage, cfg, stage_channels)}.npz" if cache_dir else None
        got = _load_npz(path) if path is not None and path.exists() else None
        if got is None:
            if stream is None:
                stream = load_stream(row, cfg, data)
            try:
                got = extract_features(
                    stream, stage_channels, cfg.frames.fps, cfg.frames.gain, cfg.frames.denoise,
                    cfg.frames.denoise_radius, cfg.surf.grid_step, cfg.surf.scales, cfg.trajectory_config())
            except DataError as exc:
                log.warning("%s: feature extraction failed (%s); using empty features", row.id, exc)
                got = empty_features(stage_channels)
            if path is not None:
                _save_npz(path, got)
        out.update(got)
    return {c: out[c] for c in channels}


def _features_job(args):
    row, cfg, channels, cache_dir = args
    return video_features(row, cfg, channels, cache_dir)


def collect_features(rows: Sequence[ManifestRow], cfg: PipelineConfig, channels: Sequence[str],
                     cache_dir=None, progress: Callable[[str], None] | None = None) -> list[VideoFeatures]:
    """Features for every row, in manifest order (parallel when ``cfg.run.workers > 1``)."""
    jobs = [(r, cfg, tuple(channels), cache_dir) for r in rows]
    if cfg.run.workers > 1 and len(rows) > 1:
        with ProcessPoolExecutor(cfg.run.workers) as pool:
            results = list(pool.map(_features_job, jobs, chunksize=4))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_features_job(job))
            if progress and (i + 1) % 20 == 0:
                progress(f"features: {i + 1}/{len(jobs)}")
    return [VideoFeatures(r.id, r.label, r.group, f) for r, f in zip(rows, results)]


def channel_sets(channels: Sequence[str], compare: bool = True) -> list[tuple]:
    """The configured fusion plus, when ``compare``, each single channel and the map-only fusion."""
    head = ordered_channels(channels)
    sets = [head]
    if compare:
        sets += [(c,) for c in head]
        maps = tuple(c for c in head if c in MAP_CHANNELS)
        if len(maps) > 1:
            sets.append(maps)
            sets += [maps + (c,) for c in head if c in TRACK_CHANNELS]
    unique = []
    for s in sets:
        if s not in unique:
            unique.append(s)
    return unique


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(report: EvalReport, out_dir, all_reports: dict | None = None, svg: bool = False,
                labels: dict | None = None) -> list[Path]:
    """Write the report CSVs for ``report`` (plus the channel comparison when given).

    Files: ``report.csv`` (``fold,accuracy`` rows and a ``mean`` row),
    ``confusion.csv`` (true labels down, predicted across),
    ``per_class.csv``, ``channels.csv`` and ``predictions.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name, rows):
        p = out / name
        with open(p, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        written.append(p)

    write("report.csv", [["fold", "accuracy"]]
          + [[g, _fmt(a)] for g, a in zip(report.folds, report.fold_accuracy)]
          + [["mean", _fmt(report.mean_accuracy)]])
    write("confusion.csv", [["true"] + list(report.classes)]
          + [[c] + [int(v) for v in report.confusion[i]] for i, c in enumerate(report.classes)])
    write("per_class.csv", [["label", "accuracy"]]
          + [[c, _fmt(a)] for c, a in zip(report.classes, report.per_class_accuracy)])
    reports = all_reports or {report.channels: report}
    write("channels.csv", [["channels", "mean_accuracy", "pooled_accuracy"]]
          + [["+".join(s), _fmt(r.mean_accuracy), _fmt(r.pooled_accuracy)] for s, r in reports.items()])
    if labels is not None:
        write("predictions.csv", [["id", "label", "predicted"]]
              + [[vid, labels[vid], p] for vid, p in sorted(report.predictions.items())])
    if svg:
        p = _bar_chart(reports, out / "channels.svg")
        if p is not None:
            written.append(p)
    return written


def _bar_chart(reports: dict, path: Path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping %s", path)
        return None
    names = ["+".join(s) for s in reports]
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(names) + 2), 3.5))
    ax.bar(names, [r.mean_accuracy for r in reports.values()], color="#4c72b0")
    ax.set_ylim(0, 1)
    ax.set_ylabel("mean accuracy")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    # fixed metadata so reruns give identical files
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def run_pipeline(manifest, cfg: PipelineConfig, out_dir, cache_dir=None,
                 progress: Callable[[str], None] | None = None) -> tuple[EvalReport, dict]:
    """Features, leave-one-group-out evaluation and reports for a manifest.

    ``manifest`` is a path or a list of rows. Returns the report for the
    configured channel fusion and the reports for every compared channel set.
    """
    rows = read_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.to_toml())
    sets = channel_sets(cfg.run.channels, cfg.run.compare)
    needed = [c for c in CHANNEL_ORDER if any(c in s for s in sets)]
    if cache_dir is None:
        cache_dir = out / "cache"
    videos = collect_features(rows, cfg, needed, cache_dir, progress)
    reports = cross_validate(videos, sets, cfg.cv_config(), progress)
    head = reports[sets[0]]
    emit_report(head, out, reports, cfg.run.svg, {v.id: v.label for v in videos})
    return head, reports
