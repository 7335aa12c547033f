"""Motion maps (x-y, x-t and y-t projections of a video) and dense upright SURF.

Activity is the absolute deviation of a frame pixel from the mid-grey
baseline, so pixels that saw no events contribute nothing. Each map averages
activity over the axis it leaves out and is then scaled to a maximum of 1.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .descriptors import DescriptorKind, DescriptorSet, l2_normalize
from .errors import MapTooSmall
from .frames import BASELINE, Video, write_pgm

log = logging.getLogger(__name__)


class MapKind(str, enum.Enum):
    XY = "XY"
    XT = "XT"
    YT = "YT"


@dataclass(frozen=True, eq=False)
class MotionMap:
    kind: MapKind
    grid: np.ndarray  # XY: (H, W), XT: (T, W), YT: (H, T)


def activity(frames: np.ndarray) -> np.ndarray:
    return np.abs(frames.astype(np.float64) - BASELINE) / 127.0


def compute_motion_maps(video, normalize: bool = True) -> tuple[MotionMap, MotionMap, MotionMap]:
    """Return the (XY, XT, YT) motion maps of ``video``.

    ``video`` may be a :class:`Video` or a ``(T, H, W)`` frame array.
    """
    frames = video.frames if isinstance(video, Video) else np.asarray(video)
    if frames.ndim != 3 or frames.size == 0:
        raise ValueError("video must be a non-empty (T, H, W) stack")
    a = activity(frames)
    grids = {
        MapKind.XY: a.mean(axis=0),
        MapKind.XT: a.mean(axis=1),
        MapKind.YT: a.mean(axis=2).T,
    }
    maps = []
    for kind, g in grids.items():
        if normalize:
            peak = g.max()
            if peak > 0:
                g = g / peak
        maps.append(MotionMap(kind, g))
    return tuple(maps)


def export_map(m: MotionMap, path) -> None:
    """Save a map as an 8-bit PGM, rescaled to 0..255."""
    g = m.grid
    peak = g.max()
    scaled = np.zeros_like(g) if peak <= 0 else g / peak
    write_pgm(path, np.rint(scaled * 255).astype(np.uint8))


def integral_image(grid: np.ndarray) -> np.ndarray:
    """Summed-area table ``S`` with ``S[i, j] = grid[:i, :j].sum()``.

    The table has one more row and column than ``grid``.
    """
    g = np.asarray(grid)
    acc = np.int64 if np.issubdtype(g.dtype, np.integer) or g.dtype == bool else np.float64
    S = np.zeros((g.shape[0] + 1, g.shape[1] + 1), dtype=acc)
    S[1:, 1:] = g.astype(acc).cumsum(axis=0).cumsum(axis=1)
    return S


def rect_sum(S: np.ndarray, r0, c0, r1, c1):
    """Sum of ``grid[r0:r1, c0:c1]`` from its integral image (vectorised)."""
    return S[r1, c1] - S[r0, c1] - S[r1, c0] + S[r0, c0]


def _grid_origins(size: int, window: int, step: int) -> np.ndarray:
    """Top-left offsets of windows on a regular grid, centred in ``size``."""
    n = (size - window) // step + 1
    off = (size - window - (n - 1) * step) // 2
    return off + step * np.arange(n)


def _sample_offsets(window: int) -> np.ndarray:
    # 20 samples per axis (4 subregions x 5); built mirror-symmetric about the window centre
    half = np.rint((np.arange(10) + 0.5) * window / 20).astype(np.int64)
    return np.concatenate([half, window - half[::-1]])


def _haar_responses(grid: np.ndarray, half: int) -> tuple[np.ndarray, np.ndarray]:
    """Haar wavelet responses of side ``2 * half`` anchored at every pixel corner.

    Returns ``(dx, dy)`` of shape ``(H + 1, W + 1)``; ``dx[r, c]`` is the sum
    right of column edge ``c`` minus the sum left of it, over rows
    ``r - half .. r + half``. The map is edge-replicated so boxes may leave it.
    """
    pad = half + 1
    padded = np.pad(grid - grid.flat[0], pad, mode="edge")
    S = integral_image(padded)
    H, W = grid.shape
    r = (np.arange(H + 1) + pad)[:, None]
    c = (np.arange(W + 1) + pad)[None, :]
    right = rect_sum(S, r - half, c, r + half, c + half)
    left = rect_sum(S, r - half, c - half, r + half, c)
    below = rect_sum(S, r, c - half, r + half, c + half)
    above = rect_sum(S, r - half, c - half, r, c + half)
    return right - left, below - above


def dense_surf(m, grid_step: int = 8, scales: Sequence[float] = (1.6, 3.2)) -> DescriptorSet:
    """Upright 64-D SURF descriptors on a regular grid of keypoints.

    At scale ``s`` each keypoint owns a ``20s x 20s`` window split into 4x4
    subregions of 5x5 samples; every subregion contributes
    ``(sum dx, sum dy, sum |dx|, sum |dy|)`` of Haar responses of size ``2s``.
    Keypoints whose window leaves the map are skipped. Output is ordered by
    scale, then row-major; ``locations`` holds ``(row, col, scale)`` of each
    window centre in pixel coordinates.

    Raises :class:`MapTooSmall` if no scale fits a single window.
    """
    grid = np.asarray(m.grid if isinstance(m, MotionMap) else m, dtype=np.float64)
    H, W = grid.shape
    values, locs = [], []
    fitted = False
    for s in scales:
        window = int(round(20 * s))
        if window > H or window > W:
            continue
        fitted = True
        half = max(1, int(round(s)))
        dx, dy = _haar_responses(grid, half)
        offs = _sample_offsets(window)
        rows0 = _grid_origins(H, window, grid_step)
        cols0 = _grid_origins(W, window, grid_step)
        ri = (rows0[:, None] + offs[None, :])[:, None, :, None]
        ci = (cols0[:, None] + offs[None, :])[None, :, None, :]
        n_r, n_c = len(rows0), len(cols0)
        samples = []
        for resp in (dx, dy):
            block = resp[ri, ci].reshape(n_r, n_c, 4, 5, 4, 5)
            samples.append(block)
        sdx = samples[0].sum(axis=(3, 5))
        sdy = samples[1].sum(axis=(3, 5))
        adx = np.abs(samples[0]).sum(axis=(3, 5))
        ady = np.abs(samples[1]).sum(axis=(3, 5))
        desc = np.stack([sdx, sdy, adx, ady], axis=-1).reshape(n_r * n_c, 64)
        values.append(l2_normalize(desc))
        centre_r = rows0 + window / 2 - 0.5
        centre_c = cols0 + window / 2 - 0.5
        rr, cc = np.meshgrid(centre_r, centre_c, indexing="ij")
        locs.append(np.column_stack([rr.ravel(), cc.ravel(), np.full(rr.size, s)]))
    if not fitted:
        raise MapTooSmall(f"{H}x{W} map cannot hold a {int(round(20 * min(scales)))} px SURF window")
    return DescriptorSet(DescriptorKind.SURF64, np.concatenate(values), np.concatenate(locs))


def map_descriptors(m: MotionMap, grid_step: int = 8, scales: Sequence[float] = (1.6, 3.2)) -> DescriptorSet:
    """Like :func:`dense_surf` but degenerate maps yield an empty set and a warning."""
    try:
        return dense_surf(m, grid_step, scales)
    except MapTooSmall as exc:
        log.warning("%s map: %s; no descriptors", getattr(m, "kind", "?"), exc)
        return DescriptorSet.empty(DescriptorKind.SURF64)
