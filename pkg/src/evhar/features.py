"""Per-video feature extraction: events to frames, then map and trajectory descriptors."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .descriptors import DescriptorKind
from .errors import InvariantViolation
from .event_io import EventStream
from .frames import events_to_frames, median_denoise
from .motion_maps import compute_motion_maps, map_descriptors
from .trajectories import TrajectoryConfig, compute_flows, track_trajectories, trajectory_descriptors

log = logging.getLogger(__name__)

MAP_CHANNELS = ("XY", "XT", "YT")
TRACK_CHANNELS = {"MBH": DescriptorKind.MBH192, "HOF": DescriptorKind.HOF108, "HOG": DescriptorKind.HOG96}


def channel_kind(channel: str) -> DescriptorKind:
    return DescriptorKind.SURF64 if channel in MAP_CHANNELS else TRACK_CHANNELS[channel]


def empty_features(channels: Sequence[str]) -> dict:
    return {ch: np.zeros((0, channel_kind(ch).length)) for ch in channels}


def extract_features(stream: EventStream, channels: Sequence[str], fps: float = 30.0, gain: int = 64,
                     denoise: bool = False, denoise_radius: int = 1, grid_step: int = 8,
                     scales: Sequence[float] = (1.6, 3.2),
                     traj_cfg: TrajectoryConfig = TrajectoryConfig()) -> dict:
    """Descriptor arrays for the requested channels of one event stream.

    Returns ``{channel: (n, d) array}``. Only the stages needed by
    ``channels`` are run.
    """
    video = events_to_frames(stream, fps, gain)
    if denoise:
        video = median_denoise(video, denoise_radius)
    out = {}
    wanted_maps = [c for c in channels if c in MAP_CHANNELS]
    if wanted_maps:
        maps = dict(zip(MAP_CHANNELS, compute_motion_maps(video)))
        for ch in wanted_maps:
            out[ch] = map_descriptors(maps[ch], grid_step, scales).values
    wanted_tracks = [c for c in channels if c in TRACK_CHANNELS]
    if wanted_tracks:
        frames = video.frames
        flows = compute_flows(frames, traj_cfg)
        trajs = track_trajectories(frames, traj_cfg, flows)
        sets = trajectory_descriptors(frames, flows, trajs, [TRACK_CHANNELS[c] for c in wanted_tracks],
                                      traj_cfg.flow_eps)
        for ch in wanted_tracks:
            out[ch] = sets[TRACK_CHANNELS[ch]].values
    for ch, values in out.items():
        expected = channel_kind(ch).length
        if values.shape[1] != expected:
            raise InvariantViolation(f"{ch} descriptors have length {values.shape[1]}, expected {expected}")
    return {ch: out[ch] for ch in channels}
