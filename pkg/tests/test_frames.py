import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evhar.errors import EmptyStream
from evhar.event_io import EventStream
from evhar.frames import Video, dump_frames, events_to_frames, median_denoise, read_pgm, write_pgm
from oracles import median_loops


def stream(events, w=8, h=8):
    t, x, y, on = zip(*events)
    return EventStream(w, h, t, x, y, on)


def test_one_second_at_30fps_gives_30_frames():
    s = stream([(0, 0, 0, True), (1_000_000, 1, 1, True)])
    assert len(events_to_frames(s, 30)) == 30


def test_single_on_event():
    v = events_to_frames(stream([(5, 3, 2, True)]), 30, 64)
    assert len(v) == 1
    expected = np.full((8, 8), 128, np.uint8)
    expected[2, 3] = 192
    np.testing.assert_array_equal(v.frames[0], expected)


def test_clamp():
    v = events_to_frames(stream([(0, 1, 1, True)] * 3), 30, 64)
    assert v.frames[0, 1, 1] == 255
    v = events_to_frames(stream([(0, 1, 1, False)] * 3), 30, 64)
    assert v.frames[0, 1, 1] == 0


def test_empty_stream_rejected():
    with pytest.raises(EmptyStream):
        events_to_frames(EventStream(4, 4))


def test_windows_anchor_at_first_event_and_tile_time():
    s = stream([(1000, 0, 0, True), (1000 + 33_334, 1, 0, True), (1000 + 100_000, 2, 0, True)])
    v = events_to_frames(s, 30, 1)
    assert len(v) == 3
    assert v.frames[0, 0, 0] == 129 and v.frames[1, 0, 1] == 129
    # the closing edge of the last window belongs to it
    assert v.frames[2, 0, 2] == 129
    w0, w1 = v.frame(0).window, v.frame(1).window
    assert w0[0] == 1000 and w0[1] == pytest.approx(w1[0])


@given(st.integers(0, 2**32 - 1))
def test_event_count_conservation_and_polarity_flip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    t = np.sort(rng.integers(0, 200_000, n))
    x, y, on = rng.integers(0, 6, n), rng.integers(0, 5, n), rng.random(n) < 0.5
    s = EventStream(6, 5, t, x, y, on)
    v = events_to_frames(s, 30, 1)
    flipped = events_to_frames(EventStream(6, 5, t, x, y, ~on), 30, 1)
    idx = np.minimum(((t - t[0]) * 30 // 1_000_000), len(v) - 1)
    for k in range(len(v)):
        sel = idx == k
        assert int(v.frames[k].astype(int).sum() - 128 * 30) == int(on[sel].sum() - (~on[sel]).sum())
    np.testing.assert_array_equal(flipped.frames.astype(int), 256 - v.frames.astype(int))


def test_median_examples():
    flat = Video(np.full((1, 5, 5), 128, np.uint8), 30)
    np.testing.assert_array_equal(median_denoise(flat).frames, flat.frames)
    spike = flat.frames.copy()
    spike[0, 2, 2] = 255
    assert median_denoise(Video(spike, 30), 1).frames[0, 2, 2] == 128


@pytest.mark.parametrize("radius", [1, 2])
def test_median_matches_brute_force(radius):
    rng = np.random.default_rng(radius)
    frames = rng.integers(0, 256, (3, 9, 11)).astype(np.uint8)
    out = median_denoise(Video(frames, 30), radius)
    assert out.fps == 30 and out.frames.shape == frames.shape
    for k in range(3):
        np.testing.assert_array_equal(out.frames[k], median_loops(frames[k], radius))


def test_pgm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    grid = rng.integers(0, 256, (7, 9)).astype(np.uint8)
    grid[0, :3] = [10, 32, 9]  # whitespace-valued bytes right after the header
    write_pgm(tmp_path / "a.pgm", grid)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), grid)
    paths = dump_frames(Video(np.stack([grid, grid]), 30), tmp_path / "frames")
    assert len(paths) == 2 and paths[0].read_bytes().startswith(b"P5\n9 7\n255\n")
