"""Dataset manifests: one CSV row per recording."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError
from .event_io import PROFILES

MANIFEST_FIELDS = ("id", "path", "format", "profile", "label", "group")
FORMATS = ("AEDAT2", "CSV")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: Path
    format: str
    profile: str
    label: str
    group: str


def parse_manifest(text: str, base_dir=".") -> list[ManifestRow]:
    """Rows of a manifest; relative paths are resolved against ``base_dir``."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("manifest is empty") from None
    if tuple(h.strip() for h in header) != MANIFEST_FIELDS:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_FIELDS)}, got {','.join(header)}")
    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(MANIFEST_FIELDS):
            raise ManifestError(f"line {lineno}: expected {len(MANIFEST_FIELDS)} fields, got {len(rec)}")
        vid, path, fmt, profile, label, group = (f.strip() for f in rec)
        if not vid:
            raise ManifestError(f"line {lineno}: empty id")
        if vid in seen:
            raise ManifestError(f"line {lineno}: duplicate id {vid!r}")
        if not label:
            raise ManifestError(f"line {lineno} ({vid}): empty label")
        fmt = fmt.upper()
        if fmt == "AEDAT":
            fmt = "AEDAT2"
        if fmt not in FORMATS:
            raise ManifestError(f"line {lineno} ({vid}): unknown format {fmt!r}")
        if profile not in PROFILES:
            raise ManifestError(f"line {lineno} ({vid}): unknown sensor profile {profile!r}")
        p = Path(path)
        if not p.is_absolute():
            p = Path(base_dir) / p
        seen.add(vid)
        rows.append(ManifestRow(vid, p, fmt, profile, label, group))
    if not rows:
        raise ManifestError("manifest has no rows")
    return rows


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    return parse_manifest(text, path.parent)


def write_manifest(path, rows, relative_to=None) -> None:
    """Write rows; paths are stored relative to ``relative_to`` when given."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in rows:
            p = Path(r.path)
            if relative_to is not None:
                p = p.relative_to(relative_to)
            w.writerow([r.id, p.as_posix(), r.format, r.profile, r.label, r.group])
