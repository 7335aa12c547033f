"""Frame-based DVS emulation and a synthetic gesture generator.

The emulator keeps a per-pixel reference log intensity and fires one event
per threshold crossing, which is enough to produce realistic-looking sparse
edge events from rendered videos. Events inherit the timestamp of the frame
that triggered them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateVideo
from .event_io import EventStream


@dataclass(frozen=True)
class IntensityVideo:
    frames: np.ndarray  # (T, H, W) float, intensities in [0, 1]
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError("frames must have shape (T, H, W)")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def shape(self):
        return self.frames.shape


@dataclass(frozen=True)
class SimConfig:
    threshold: float = 0.2
    epsilon: float = 1 / 255
    noise_rate: float = 0.0  # events per pixel per second
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0 or self.epsilon <= 0:
            raise ValueError("threshold and epsilon must be positive")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be non-negative")


def frame_time_us(index: int, fps: float) -> int:
    return int(round(index * 1e6 / fps))


def simulate_events(video: IntensityVideo, cfg: SimConfig = SimConfig()) -> EventStream:
    """Convert an intensity video into ON/OFF events.

    For every frame after the first, each pixel emits ``floor(|d| / threshold)``
    events where ``d`` is the log-intensity change since the pixel's reference
    level; the reference then moves by the amount those events account for.
    Optional uniform noise events are drawn at random times between frames.
    """
    frames = video.frames
    T, H, W = frames.shape
    if T < 2:
        raise DegenerateVideo(f"need at least 2 frames, got {T}")
    theta = cfg.threshold
    ref = np.log(frames[0] + cfg.epsilon)
    ts, idx, pol = [], [], []
    pix = np.arange(H * W)
    for k in range(1, T):
        d = np.log(frames[k] + cfg.epsilon) - ref
        # slack keeps exact multiples of theta (a pixel returning to a level) from rounding down
        n = np.floor(np.abs(d) / theta + 1e-9).astype(np.int64)
        ref = ref + n * theta * np.sign(d)
        n = n.ravel()
        fired = np.repeat(pix, n)
        if len(fired):
            idx.append(fired)
            pol.append(d.ravel()[fired] > 0)
            ts.append(np.full(len(fired), frame_time_us(k, video.fps), np.int64))

    if cfg.noise_rate > 0:
        rng = np.random.default_rng(cfg.seed)
        t_end = frame_time_us(T - 1, video.fps)
        count = rng.poisson(cfg.noise_rate * H * W * t_end / 1e6)
        ts.append(rng.integers(0, t_end + 1, size=count))
        idx.append(rng.integers(0, H * W, size=count))
        pol.append(rng.random(count) < 0.5)

    if not ts:
        return EventStream(W, H)
    t = np.concatenate(ts)
    i = np.concatenate(idx)
    p = np.concatenate(pol)
    order = np.argsort(t, kind="stable")
    t, i, p = t[order], i[order], p[order]
    return EventStream(W, H, t, i % W, i // W, p)


class Gesture(str, enum.Enum):
    SWIPE_LEFT = "SWIPE_LEFT"
    SWIPE_RIGHT = "SWIPE_RIGHT"
    SWIPE_UP = "SWIPE_UP"
    SWIPE_DOWN = "SWIPE_DOWN"
    CW_CIRCLE = "CW_CIRCLE"
    CCW_CIRCLE = "CCW_CIRCLE"


@dataclass(frozen=True)
class GestureParams:
    """Everything needed to render one synthetic gesture clip.

    Positions are in pixels relative to the image centre, ``y`` pointing
    down. Swipes move linearly from ``start`` to ``end`` between the
    normalised times ``t0`` and ``t1``; circles rotate about ``start`` with
    radius ``orbit`` from phase ``phase`` by ``turns`` full turns (positive is
    clockwise on screen).
    """

    kind: Gesture
    radius: float
    start: tuple[float, float]
    end: tuple[float, float]
    t0: float
    t1: float
    orbit: float = 0.0
    phase: float = 0.0
    turns: float = 0.0
    # blob texture: sum of plane waves, one (kx, ky, phase) row per wave
    waves: tuple = ()
    background: float = 0.15
    brightness: float = 0.8

    def mirrored(self) -> "GestureParams":
        """Parameters of the horizontally mirrored clip."""
        kind = {
            Gesture.SWIPE_LEFT: Gesture.SWIPE_RIGHT,
            Gesture.SWIPE_RIGHT: Gesture.SWIPE_LEFT,
            Gesture.CW_CIRCLE: Gesture.CCW_CIRCLE,
            Gesture.CCW_CIRCLE: Gesture.CW_CIRCLE,
        }.get(self.kind, self.kind)
        return replace(
            self,
            kind=kind,
            start=(-self.start[0], self.start[1]),
            end=(-self.end[0], self.end[1]),
            phase=math.pi - self.phase,
            turns=-self.turns,
            waves=tuple((-kx, ky, ph) for kx, ky, ph in self.waves),
        )

    def centre(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Blob centre at normalised times ``s`` in [0, 1]."""
        if self.kind in (Gesture.CW_CIRCLE, Gesture.CCW_CIRCLE):
            ang = self.phase + 2 * math.pi * self.turns * s
            return self.start[0] + self.orbit * np.cos(ang), self.start[1] + self.orbit * np.sin(ang)
        u = np.clip((s - self.t0) / (self.t1 - self.t0), 0.0, 1.0)
        cx = self.start[0] + u * (self.end[0] - self.start[0])
        cy = self.start[1] + u * (self.end[1] - self.start[1])
        return cx, cy


def gesture_params(kind, geometry: tuple[int, int], seed: int) -> GestureParams:
    """Draw seed-jittered parameters for one clip of gesture ``kind``."""
    kind = Gesture(kind)
    W, H = geometry
    rng = np.random.default_rng(seed)
    size = min(W, H)
    radius = size * rng.uniform(0.11, 0.15)
    span = size * rng.uniform(0.28, 0.36)
    off = size * rng.uniform(-0.08, 0.08, size=2)
    t0 = rng.uniform(0.0, 0.15)
    t1 = rng.uniform(0.85, 1.0)
    n_waves = 3
    freqs = rng.uniform(0.35, 0.8, n_waves)
    angles = rng.uniform(0, math.pi, n_waves)
    waves = tuple(
        (float(f * math.cos(a)), float(f * math.sin(a)), float(ph))
        for f, a, ph in zip(freqs, angles, rng.uniform(0, 2 * math.pi, n_waves))
    )
    common = dict(kind=kind, radius=float(radius), t0=float(t0), t1=float(t1), waves=waves,
                  brightness=float(rng.uniform(0.7, 0.9)))
    ox, oy = float(off[0]), float(off[1])
    if kind in (Gesture.CW_CIRCLE, Gesture.CCW_CIRCLE):
        turns = rng.uniform(0.8, 1.2) * (1 if kind is Gesture.CW_CIRCLE else -1)
        phase = rng.uniform(-0.3, 0.3) + math.pi / 2
        return GestureParams(start=(ox, oy), end=(ox, oy), orbit=float(size * rng.uniform(0.2, 0.26)),
                             phase=float(phase), turns=float(turns), **common)
    direction = {
        Gesture.SWIPE_RIGHT: (1.0, 0.0),
        Gesture.SWIPE_LEFT: (-1.0, 0.0),
        Gesture.SWIPE_DOWN: (0.0, 1.0),
        Gesture.SWIPE_UP: (0.0, -1.0),
    }[kind]
    start = (ox - direction[0] * span, oy - direction[1] * span)
    end = (ox + direction[0] * span, oy + direction[1] * span)
    return GestureParams(start=start, end=end, **common)


def render_gesture(params: GestureParams, geometry: tuple[int, int], n_frames: int, fps: float = 30.0) -> IntensityVideo:
    W, H = geometry
    # pixel-centre coordinates relative to the image centre; exactly antisymmetric
    u = np.arange(W) - (W - 1) / 2
    v = np.arange(H) - (H - 1) / 2
    s = np.arange(n_frames) / max(n_frames - 1, 1)
    cx, cy = params.centre(s)
    dx = u[None, None, :] - cx[:, None, None]
    dy = v[None, :, None] - cy[:, None, None]
    r2 = dx * dx + dy * dy
    mask = np.exp(-0.5 * (r2 / params.radius**2) ** 2)
    tex = np.zeros_like(r2)
    for kx, ky, ph in params.waves:
        tex += np.cos(kx * dx + ky * dy + ph)
    tex = 0.6 + 0.4 * tex / max(len(params.waves), 1)
    frames = params.background + (params.brightness - params.background) * mask * tex
    return IntensityVideo(np.clip(frames, 0.0, 1.0), fps)


def synth_gesture(kind, geometry: tuple[int, int] = (64, 64), duration_s: float = 2.0, seed: int = 0,
                  fps: float = 30.0) -> tuple[IntensityVideo, Gesture]:
    """Render a seeded synthetic gesture clip and return it with its label."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    params = gesture_params(kind, geometry, seed)
    n_frames = max(2, int(round(duration_s * fps)) + 1)
    return render_gesture(params, geometry, n_frames, fps), params.kind
