"""Dense optical flow by coarse-to-fine local least squares (Lucas-Kanade).

The flow ``(u, v)`` at pixel ``(x, y)`` satisfies
``frame_b(x + u, y + v) ~= frame_a(x, y)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatch


def pyramid_levels(height: int, width: int) -> int:
    """Number of coarser levels above the full-resolution image."""
    m = min(height, width)
    return max(0, int(math.floor(math.log2(m / 16)))) if m >= 16 else 0


def _downsample(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(img, 1.0, mode="nearest")[::2, ::2]


def _upsample_flow(flow: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    H, W = shape
    yy, xx = np.meshgrid(np.arange(H) / 2.0, np.arange(W) / 2.0, indexing="ij")
    out = np.empty((H, W, 2))
    for c in range(2):
        out[..., c] = 2.0 * ndimage.map_coordinates(flow[..., c], [yy, xx], order=1, mode="nearest")
    return out


def _warp(img: np.ndarray, flow: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``img`` at ``x + flow``; also return where the sample fell inside the image."""
    H, W = img.shape
    if not flow.any():
        return img, np.ones(img.shape, bool)
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    y = yy + flow[..., 1]
    x = xx + flow[..., 0]
    inside = (y >= 0) & (y <= H - 1) & (x >= 0) & (x <= W - 1)
    return ndimage.map_coordinates(img, [y, x], order=1, mode="nearest"), inside


def _lk_level(a: np.ndarray, b: np.ndarray, flow: np.ndarray, window: int, iterations: int,
              regularize: int = 5) -> np.ndarray:
    iy, ix = np.gradient(a)
    box = lambda z: ndimage.uniform_filter(z, window, mode="constant")  # noqa: E731
    for _ in range(iterations):
        bw, inside = _warp(b, flow)
        m = inside.astype(np.float64)
        sxx, sxy, syy = box(ix * ix * m), box(ix * iy * m), box(iy * iy * m)
        det = sxx * syy - sxy * sxy
        trace = sxx + syy
        # reject ill-conditioned windows (flat regions, straight edges)
        ok = det > 1e-4 * trace * trace + 1e-12
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        it = (bw - a) * m
        bx, by = box(ix * it), box(iy * it)
        flow[..., 0] -= (syy * bx - sxy * by) * inv_det
        flow[..., 1] -= (sxx * by - sxy * bx) * inv_det
        # per-pixel warping assumes locally constant flow; keep it that way
        if regularize > 1:
            for c in range(2):
                flow[..., c] = ndimage.uniform_filter(flow[..., c], regularize, mode="nearest")
    return flow


def optical_flow(frame_a, frame_b, window: int = 15, iterations: int = 3, smooth: float = 1.0,
                 levels: int | None = None) -> np.ndarray:
    """Dense flow field between two frames, shape ``(H, W, 2)`` holding ``(u, v)``.

    ``smooth`` is the sigma of a Gaussian pre-blur (0 disables it); ``levels``
    defaults to ``floor(log2(min(H, W) / 16))`` coarser pyramid levels.
    """
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise GeometryMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    if smooth > 0:
        a = ndimage.gaussian_filter(a, smooth, mode="nearest")
        b = ndimage.gaussian_filter(b, smooth, mode="nearest")
    if levels is None:
        levels = pyramid_levels(*a.shape)
    pa, pb = [a], [b]
    for _ in range(levels):
        pa.append(_downsample(pa[-1]))
        pb.append(_downsample(pb[-1]))
    flow = np.zeros(pa[-1].shape + (2,))
    for lvl in range(levels, -1, -1):
        if lvl < levels:
            flow = _upsample_flow(flow, pa[lvl].shape)
        flow = _lk_level(pa[lvl], pb[lvl], flow, window, iterations)
    return flow


def video_flows(frames: np.ndarray, **kwargs) -> np.ndarray:
    """Flow for every consecutive frame pair, shape ``(T - 1, H, W, 2)``."""
    T, H, W = frames.shape
    out = np.zeros((max(T - 1, 0), H, W, 2))
    for t in range(T - 1):
        out[t] = optical_flow(frames[t], frames[t + 1], **kwargs)
    return out
