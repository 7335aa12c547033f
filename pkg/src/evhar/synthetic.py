"""Synthetic gesture corpus: seeded clips written as event files plus a manifest."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Sequence

from .classify import derive_seed
from .config import benchmark_config
from .dvs_sim import Gesture, SimConfig, simulate_events, synth_gesture
from .event_io import DVS128, write_events
from .manifest import ManifestRow, write_manifest

log = logging.getLogger(__name__)


def clip_id(subject: int, kind: Gesture, rep: int) -> str:
    return f"s{subject:02d}_{kind.value.lower()}_r{rep}"


def write_synthetic_dataset(out_dir, subjects: int = 12, reps: int = 5,
                            classes: Sequence[str] = tuple(g.value for g in Gesture),
                            geometry: tuple[int, int] = (64, 64), duration_s: float = 2.0,
                            noise_rate: float = 5.0, threshold: float = 0.2, fmt: str = "AEDAT2",
                            seed: int = 0, progress: Callable[[str], None] | None = None) -> Path:
    """Render, simulate and save ``subjects x classes x reps`` clips.

    Writes ``events/<id>.<ext>``, ``manifest.csv`` (group = subject) and a
    ``pipeline.toml`` with the matching geometry. Returns the manifest path.
    """
    out = Path(out_dir)
    events_dir = out / "events"
    events_dir.mkdir(parents=True, exist_ok=True)
    fmt = fmt.upper()
    ext = "csv" if fmt == "CSV" else "aedat"
    profile = DVS128.with_geometry(*geometry)
    kinds = [Gesture(c) for c in classes]
    rows = []
    total = subjects * reps * len(kinds)
    for s in range(subjects):
        for kind in kinds:
            for r in range(reps):
                vid = clip_id(s, kind, r)
                video, label = synth_gesture(kind, geometry, duration_s, derive_seed(seed, "clip", vid))
                sim = SimConfig(threshold=threshold, noise_rate=noise_rate, seed=derive_seed(seed, "noise", vid))
                path = events_dir / f"{vid}.{ext}"
                write_events(path, simulate_events(video, sim), fmt, profile)
                rows.append(ManifestRow(vid, path, fmt, DVS128.name, label.value, f"s{s:02d}"))
                if progress and len(rows) % 60 == 0:
                    progress(f"simulate: {len(rows)}/{total}")
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows, relative_to=out)
    cfg = benchmark_config()
    cfg.data.geometry = list(geometry)
    (out / "pipeline.toml").write_text(cfg.to_toml())
    return manifest
