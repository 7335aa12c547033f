"""Event streams to fixed-rate 8-bit videos."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import EmptyStream
from .event_io import EventStream

BASELINE = 128


class Frame(NamedTuple):
    grid: np.ndarray
    index: int
    window: tuple[float, float]  # [start, end) in microseconds


@dataclass(frozen=True, eq=False)
class Video:
    """Stack of uint8 frames, shape ``(T, H, W)``.

    Frame ``i`` covers ``[t_start + i * 1e6 / fps, t_start + (i + 1) * 1e6 / fps)``.
    """

    frames: np.ndarray
    fps: float
    t_start: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.frames.ndim != 3:
            raise ValueError("frames must have shape (T, H, W)")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.frames.shape[2], self.frames.shape[1])

    def frame(self, i: int) -> Frame:
        period = 1e6 / self.fps
        return Frame(self.frames[i], i, (self.t_start + i * period, self.t_start + (i + 1) * period))


def events_to_frames(stream: EventStream, fps: float = 30.0, gain: int = 64) -> Video:
    """Accumulate signed event counts on a mid-grey baseline.

    Each pixel becomes ``clip(128 + gain * (n_on - n_off), 0, 255)`` for the
    events in its window. Windows start at the first event; the last window
    also takes events that land exactly on its closing edge.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    if len(stream) == 0:
        raise EmptyStream("cannot build frames from an empty stream")
    W, H = stream.geometry
    t0 = int(stream.t[0])
    n_frames = max(1, math.ceil(stream.duration_us * fps / 1e6))
    idx = np.floor((stream.t - t0) * fps / 1e6).astype(np.int64)
    np.minimum(idx, n_frames - 1, out=idx)
    sign = np.where(stream.on, 1, -1)
    flat = (idx * H + stream.y) * W + stream.x
    acc = np.bincount(flat, weights=sign, minlength=n_frames * H * W)
    frames = np.clip(BASELINE + gain * acc, 0, 255).astype(np.uint8).reshape(n_frames, H, W)
    return Video(frames, fps, t0)


def median_denoise(video: Video, radius: int = 1) -> Video:
    """Per-frame spatial median over a ``(2r+1)^2`` window, edges replicated."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    k = 2 * radius + 1
    out = ndimage.median_filter(video.frames, size=(1, k, k), mode="nearest")
    return Video(out, video.fps, video.t_start)


def write_pgm(path, grid: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM (maxval 255)."""
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    h, w = grid.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + grid.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError("only maxval 255 is supported")
    return np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)


def dump_frames(video: Video, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(len(video)):
        p = directory / f"frame_{i:05d}.pgm"
        write_pgm(p, video.frames[i])
        paths.append(p)
    return paths
