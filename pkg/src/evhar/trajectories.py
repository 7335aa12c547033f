"""Dense trajectories and the HoG / HOF / MBH descriptors computed along them.

Points are seeded on a regular grid wherever the frame has local texture,
advanced frame to frame by the median-filtered dense flow, and kept once they
have been tracked for ``length`` steps. Descriptors are histograms over a
32x32x15 tube around the track, split into 2x2x3 cells of 16x16 px x 5 frames.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .descriptors import DescriptorKind, DescriptorSet, l2_normalize
from .flow import video_flows

PATCH = 32
CELL = 16
CELL_FRAMES = 5
N_CELLS = (PATCH // CELL) ** 2 * 3


@dataclass(frozen=True)
class TrajectoryConfig:
    step: int = 5
    length: int = 15
    max_step: float = 8.0
    min_disp: float = 2.0
    var_thresh: float = 1e-4
    flow_eps: float = 0.4
    flow_window: int = 15
    flow_iterations: int = 3
    flow_smooth: float = 1.0

    def __post_init__(self):
        if self.length != CELL_FRAMES * 3:
            raise ValueError(f"trajectory length must be {CELL_FRAMES * 3} to fit the cell grid")
        if self.step < 1:
            raise ValueError("step must be >= 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    start: int
    points: np.ndarray  # (length + 1, 2) subpixel (x, y)

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    @property
    def displacement(self) -> float:
        return float(np.hypot(*(self.points[-1] - self.points[0])))


def local_variance(img: np.ndarray) -> np.ndarray:
    """3x3 neighbourhood variance with replicated borders."""
    mean = ndimage.uniform_filter(img, 3, mode="nearest")
    sq = ndimage.uniform_filter(img * img, 3, mode="nearest")
    return np.maximum(sq - mean * mean, 0.0)


def _as_unit(frame) -> np.ndarray:
    f = np.asarray(frame)
    return f / 255.0 if f.dtype == np.uint8 else f.astype(np.float64)


def dense_sample(frame, step: int = 5, existing=None, var_thresh: float = 1e-4) -> np.ndarray:
    """Grid points (x, y) with local texture that are not already being tracked.

    ``uint8`` frames are scaled to [0, 1] before the variance test. Points
    within ``step / 2`` of any ``existing`` point are skipped. Output is
    row-major.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    img = _as_unit(frame)
    H, W = img.shape
    ys = np.arange(step // 2, H, step)
    xs = np.arange(step // 2, W, step)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    gy, gx = gy.ravel(), gx.ravel()
    keep = local_variance(img)[gy, gx] >= var_thresh
    pts = np.column_stack([gx[keep], gy[keep]]).astype(np.float64)
    if existing is not None and len(existing) and len(pts):
        ex = np.asarray(existing, dtype=np.float64).reshape(-1, 2)
        d2 = ((pts[:, None, :] - ex[None, :, :]) ** 2).sum(-1)
        pts = pts[(d2 > (step / 2) ** 2).all(axis=1)]
    return pts


def _bilinear(field: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(field, [pts[:, 1], pts[:, 0]], order=1, mode="nearest")


def track_trajectories(frames: np.ndarray, cfg: TrajectoryConfig = TrajectoryConfig(),
                       flows: np.ndarray | None = None) -> list[Trajectory]:
    """Track densely sampled points through a ``(T, H, W)`` frame stack.

    Tracks end after ``cfg.length`` steps, when they leave the frame, or when
    a step exceeds ``cfg.max_step`` (then they are dropped as erratic).
    Complete tracks whose end-to-end displacement is below ``cfg.min_disp``
    are dropped as static. Output is ordered by start frame, then by seed
    position (row-major).
    """
    T, H, W = frames.shape
    L = cfg.length
    if T < L + 1:
        return []
    if flows is None:
        flows = compute_flows(frames, cfg)
    done: list[Trajectory] = []
    # active tracks: start frame, seed rank, point history
    starts = np.zeros(0, np.int64)
    ranks = np.zeros(0, np.int64)
    hist = np.zeros((0, L + 1, 2))
    n_steps = np.zeros(0, np.int64)

    def seed(t):
        nonlocal starts, ranks, hist, n_steps
        if t + L > T - 1:
            return
        cur = hist[np.arange(len(hist)), n_steps] if len(hist) else np.zeros((0, 2))
        new = dense_sample(frames[t], cfg.step, cur, cfg.var_thresh)
        if not len(new):
            return
        h = np.zeros((len(new), L + 1, 2))
        h[:, 0] = new
        starts = np.concatenate([starts, np.full(len(new), t)])
        ranks = np.concatenate([ranks, np.arange(len(new))])
        hist = np.concatenate([hist, h])
        n_steps = np.concatenate([n_steps, np.zeros(len(new), np.int64)])

    seed(0)
    for t in range(T - 1):
        if len(hist):
            u = ndimage.median_filter(flows[t, ..., 0], 3, mode="nearest")
            v = ndimage.median_filter(flows[t, ..., 1], 3, mode="nearest")
            idx = np.arange(len(hist))
            cur = hist[idx, n_steps]
            d = np.column_stack([_bilinear(u, cur), _bilinear(v, cur)])
            nxt = cur + d
            ok = (np.hypot(d[:, 0], d[:, 1]) <= cfg.max_step)
            ok &= (nxt[:, 0] >= 0) & (nxt[:, 0] <= W - 1) & (nxt[:, 1] >= 0) & (nxt[:, 1] <= H - 1)
            n_steps = n_steps + 1
            hist[idx, n_steps.clip(max=L)] = nxt
            complete = ok & (n_steps == L)
            for i in np.flatnonzero(complete):
                tr = Trajectory(int(starts[i]), hist[i].copy())
                if tr.displacement >= cfg.min_disp:
                    done.append((int(starts[i]), int(ranks[i]), tr))
            alive = ok & ~complete
            starts, ranks, hist, n_steps = starts[alive], ranks[alive], hist[alive], n_steps[alive]
        seed(t + 1)
    done.sort(key=lambda item: item[:2])
    return [tr for _, _, tr in done]


def compute_flows(frames: np.ndarray, cfg: TrajectoryConfig = TrajectoryConfig()) -> np.ndarray:
    return video_flows(frames, window=cfg.flow_window, iterations=cfg.flow_iterations, smooth=cfg.flow_smooth)


# ---------------------------------------------------------------------------
# histogram cores, operating on (N, 15, 32, 32) volumes


def central_gradients(vol: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences along x and y of the last two axes, borders clamped."""
    pad = np.pad(vol, [(0, 0)] * (vol.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    gx = (pad[..., 1:-1, 2:] - pad[..., 1:-1, :-2]) / 2.0
    gy = (pad[..., 2:, 1:-1] - pad[..., :-2, 1:-1]) / 2.0
    return gx, gy


def orientation_bins(gx: np.ndarray, gy: np.ndarray, n_bins: int, signed: bool) -> np.ndarray:
    """Nearest bin centre (``k * span / n_bins``); exact ties go to the lower bin index."""
    span = 2 * np.pi if signed else np.pi
    ang = np.mod(np.arctan2(gy, gx), span)
    pos = ang / (span / n_bins) - 0.5
    bins = np.mod(np.ceil(pos), n_bins).astype(np.int64)
    # halfway between the last bin and bin 0 (wrapping round)
    return np.where(pos == n_bins - 1, 0, bins)


def _cell_index(shape) -> np.ndarray:
    T, H, W = shape[-3:]
    t = np.arange(T) // CELL_FRAMES
    y = np.arange(H) // CELL
    x = np.arange(W) // CELL
    return (t[:, None, None] * 2 + y[None, :, None]) * 2 + x[None, None, :]


def cell_histograms(bins: np.ndarray, weights: np.ndarray, n_bins: int) -> np.ndarray:
    """Accumulate ``weights`` into ``(N, 12 * n_bins)`` cell-major histograms."""
    N = bins.shape[0]
    cell = np.broadcast_to(_cell_index(bins.shape), bins.shape)
    flat = (np.arange(N)[:, None, None, None] * N_CELLS + cell) * n_bins + bins
    out = np.bincount(flat.ravel(), weights=weights.ravel(), minlength=N * N_CELLS * n_bins)
    return out.reshape(N, N_CELLS * n_bins)


def _gradient_histogram(vol: np.ndarray) -> np.ndarray:
    gx, gy = central_gradients(vol)
    return cell_histograms(orientation_bins(gx, gy, 8, signed=False), np.hypot(gx, gy), 8)


def hog_from_volume(vol: np.ndarray) -> np.ndarray:
    """HoG over ``(N, 15, 32, 32)`` intensity volumes -> ``(N, 96)``."""
    vol = np.asarray(vol, dtype=np.float64)
    return l2_normalize(_gradient_histogram(vol.reshape((-1,) + vol.shape[-3:])))


def hof_from_volume(flow_vol: np.ndarray, flow_eps: float = 0.4) -> np.ndarray:
    """HOF over ``(N, 15, 32, 32, 2)`` flow volumes -> ``(N, 108)``.

    Eight signed orientation bins weighted by flow magnitude, plus a ninth
    bin counting pixels whose flow magnitude is below ``flow_eps``.
    """
    fv = np.asarray(flow_vol, dtype=np.float64).reshape((-1,) + flow_vol.shape[-4:])
    u, v = fv[..., 0], fv[..., 1]
    mag = np.hypot(u, v)
    small = mag < flow_eps
    bins = np.where(small, 8, orientation_bins(u, v, 8, signed=True))
    weights = np.where(small, 1.0, mag)
    return l2_normalize(cell_histograms(bins, weights, 9))


def mbh_from_volume(flow_vol: np.ndarray) -> np.ndarray:
    """MBH over ``(N, 15, 32, 32, 2)`` flow volumes -> ``(N, 192)``.

    The x and y halves are HoG-style histograms of the gradients of ``u`` and
    ``v``; each half is normalised on its own, then the pair is scaled to
    unit length.
    """
    fv = np.asarray(flow_vol, dtype=np.float64).reshape((-1,) + flow_vol.shape[-4:])
    halves = [l2_normalize(_gradient_histogram(fv[..., c])) for c in range(2)]
    return l2_normalize(np.concatenate(halves, axis=1))


# ---------------------------------------------------------------------------
# volume extraction along tracks


def _tube_indices(trajs: list[Trajectory], T_avail: int, H: int, W: int):
    L = trajs[0].steps
    f = np.array([tr.start for tr in trajs])[:, None] + np.arange(L)[None, :]
    pts = np.stack([tr.points[:L] for tr in trajs])
    cx = np.floor(pts[..., 0] + 0.5).astype(np.int64)
    cy = np.floor(pts[..., 1] + 0.5).astype(np.int64)
    if f.max() >= T_avail:
        raise ValueError("trajectory extends past the available frames")
    off = np.arange(PATCH) - PATCH // 2
    rows = cy[:, :, None] + off[None, None, :]
    cols = cx[:, :, None] + off[None, None, :]
    return f, rows, cols


def extract_tubes(stack: np.ndarray, trajs: list[Trajectory]) -> np.ndarray:
    """Gather ``(N, 15, 32, 32, ...)`` patches centred on each track point.

    ``stack`` is ``(T, H, W)`` or ``(T, H, W, C)``; samples outside the frame
    are zero.
    """
    T, H, W = stack.shape[:3]
    f, rows, cols = _tube_indices(trajs, T, H, W)
    pad = PATCH // 2 + 1
    padded = np.pad(stack, [(0, 0), (pad, pad), (pad, pad)] + [(0, 0)] * (stack.ndim - 3))
    return padded[f[:, :, None, None], rows[:, :, :, None] + pad, cols[:, :, None, :] + pad]


def _frame_bins(kind: DescriptorKind, frames: np.ndarray, flows: np.ndarray, flow_eps: float):
    """Per-frame (bins, weights, n_bins) channels feeding one descriptor kind."""
    if kind is DescriptorKind.HOG96:
        gx, gy = central_gradients(frames.astype(np.float64))
        return [(orientation_bins(gx, gy, 8, signed=False), np.hypot(gx, gy), 8)]
    u, v = flows[..., 0], flows[..., 1]
    if kind is DescriptorKind.HOF108:
        mag = np.hypot(u, v)
        small = mag < flow_eps
        return [(np.where(small, 8, orientation_bins(u, v, 8, signed=True)), np.where(small, 1.0, mag), 9)]
    out = []
    for comp in (u, v):
        gx, gy = central_gradients(comp)
        out.append((orientation_bins(gx, gy, 8, signed=False), np.hypot(gx, gy), 8))
    return out


def _tube_histograms(bins: np.ndarray, weights: np.ndarray, n_bins: int, trajs: list[Trajectory]) -> np.ndarray:
    """Cell histograms ``(N, 12 * n_bins)`` along tracks via per-frame integral histograms.

    Gradients and flow come from whole frames; tube pixels outside the frame
    contribute nothing.
    """
    T, H, W = bins.shape
    L = trajs[0].steps
    f = np.array([tr.start for tr in trajs])[:, None] + np.arange(L)[None, :]
    pts = np.stack([tr.points[:L] for tr in trajs])
    pad = PATCH // 2 + 1
    r0 = np.floor(pts[..., 1] + 0.5).astype(np.int64) - PATCH // 2 + pad
    c0 = np.floor(pts[..., 0] + 0.5).astype(np.int64) - PATCH // 2 + pad
    edges = np.arange(3) * CELL
    sums = np.zeros((len(trajs), L, 2, 2, n_bins))
    plane = np.zeros((H + 2 * pad, W + 2 * pad, n_bins))
    ih = np.zeros((H + 2 * pad + 1, W + 2 * pad + 1, n_bins))
    for t in np.unique(f):
        plane[:] = 0.0
        sub = plane[pad:pad + H, pad:pad + W]
        np.put_along_axis(sub, bins[t][..., None], weights[t][..., None], axis=2)
        ih[1:, 1:] = plane.cumsum(0).cumsum(1)
        j, k = np.nonzero(f == t)
        rr = r0[j, k][:, None] + edges[None, :]
        cc = c0[j, k][:, None] + edges[None, :]
        R0, R1 = rr[:, :2, None], rr[:, 1:, None]
        C0, C1 = cc[:, None, :2], cc[:, None, 1:]
        sums[j, k] = ih[R1, C1] - ih[R0, C1] - ih[R1, C0] + ih[R0, C0]
    cells = sums.reshape(len(trajs), 3, CELL_FRAMES, 2, 2, n_bins).sum(axis=2)
    return cells.reshape(len(trajs), N_CELLS * n_bins)


def trajectory_descriptors(frames: np.ndarray, flows: np.ndarray, trajs: list[Trajectory],
                           kinds=(DescriptorKind.MBH192,), flow_eps: float = 0.4) -> dict[DescriptorKind, DescriptorSet]:
    """HoG / HOF / MBH descriptor sets for ``trajs``, one row per trajectory, in order.

    ``locations`` holds ``(start_frame, x0, y0)`` of each track.
    """
    kinds = [DescriptorKind(k) for k in kinds]
    locs = np.array([[tr.start, *tr.points[0]] for tr in trajs]).reshape(-1, 3)
    out = {}
    for kind in kinds:
        if not trajs:
            out[kind] = DescriptorSet(kind, np.zeros((0, kind.length)), locs)
            continue
        halves = [l2_normalize(_tube_histograms(b, w, nb, trajs)) for b, w, nb in _frame_bins(kind, frames, flows, flow_eps)]
        values = halves[0] if len(halves) == 1 else l2_normalize(np.concatenate(halves, axis=1))
        out[kind] = DescriptorSet(kind, values, locs)
    return out


def hog_descriptor(frames: np.ndarray, traj: Trajectory) -> np.ndarray:
    return trajectory_descriptors(frames, None, [traj], [DescriptorKind.HOG96])[DescriptorKind.HOG96].values[0]


def hof_descriptor(flows: np.ndarray, traj: Trajectory, flow_eps: float = 0.4) -> np.ndarray:
    return trajectory_descriptors(None, flows, [traj], [DescriptorKind.HOF108], flow_eps)[DescriptorKind.HOF108].values[0]


def mbh_descriptor(flows: np.ndarray, traj: Trajectory) -> np.ndarray:
    return trajectory_descriptors(None, flows, [traj], [DescriptorKind.MBH192])[DescriptorKind.MBH192].values[0]


def write_trajectories_csv(path, trajs: list[Trajectory]) -> None:
    """One row per track: start frame followed by the x/y pairs of its points."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        n = trajs[0].steps + 1 if trajs else 16
        w.writerow(["start_frame"] + [f"{a}{i}" for i in range(n) for a in ("x", "y")])
        for tr in trajs:
            w.writerow([tr.start] + [repr(float(c)) for c in tr.points.ravel()])
