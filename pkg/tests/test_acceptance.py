"""Acceptance criteria, each checked at its stated tolerance.

Every test records one pass/fail line (shown in the terminal summary).
The benchmark tests simulate the full 360-clip corpus and run the
pipeline twice, so this module takes several minutes.
"""

import os
import time

import numpy as np
import pytest
from scipy import ndimage

from criteria import record
from evhar.bovw import Codebook, encode_video, nearest_centroid, sample_training_features, train_codebook
from evhar.classify import knn_predict
from evhar.config import benchmark_config
from evhar.errors import AddressOutOfRange, EventIOError, MonotonicityViolation, TruncatedRecord
from evhar.event_io import DVS128, EventStream, parse_aedat, parse_csv_events, serialize_events
from evhar.flow import optical_flow
from evhar.manifest import read_manifest
from evhar.motion_maps import compute_motion_maps, integral_image, rect_sum
from evhar.pipeline import collect_features, run_pipeline, video_features
from evhar.synthetic import write_synthetic_dataset
from evhar.trajectories import hof_from_volume, hog_from_volume, mbh_from_volume
from oracles import (
    hof_loops,
    hog_loops,
    knn_loops,
    mbh_loops,
    motion_maps_loops,
    nearest_centroid_loops,
    rect_sum_loops,
)

MAPS = ("XY", "XT", "YT")
REPORT_FILES = ("report.csv", "confusion.csv", "per_class.csv", "channels.csv", "predictions.csv")
DIMS = {"XY": 64, "XT": 64, "YT": 64, "MBH": 192, "HOF": 108, "HOG": 96}


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("benchmark")
    workers = os.cpu_count() or 1
    cfg = benchmark_config(run__workers=workers)
    t0 = time.perf_counter()
    manifest = write_synthetic_dataset(root / "data", subjects=12, reps=5, seed=0)
    t_sim = time.perf_counter() - t0
    head, reports = run_pipeline(manifest, cfg, root / "run_a")
    elapsed = time.perf_counter() - t0
    # second run from scratch (own cache) for the determinism check
    run_pipeline(manifest, cfg, root / "run_b")
    return dict(root=root, manifest=manifest, cfg=cfg, head=head, reports=reports,
                elapsed=elapsed, t_sim=t_sim, workers=workers)


@pytest.mark.slow
def test_criterion_1_synthetic_benchmark(benchmark):
    reports = benchmark["reports"]
    maps = reports[MAPS]
    acc_ok = maps.mean_accuracy >= 0.95 and len(maps.folds) == 12 and maps.confusion.sum() == 360
    time_ok = benchmark["elapsed"] <= 600
    record(1, acc_ok and time_ok,
           f"maps mean accuracy {maps.mean_accuracy:.4f} (>= 0.95) over {len(maps.folds)} folds; "
           f"runtime {benchmark['elapsed']:.0f} s incl. {benchmark['t_sim']:.0f} s simulation "
           f"(<= 600 s) with {benchmark['workers']} worker(s)")
    assert acc_ok
    assert time_ok


@pytest.mark.slow
def test_criterion_2_fusion_trend(benchmark):
    r = benchmark["reports"]
    maps = r[MAPS].mean_accuracy
    fused = r[MAPS + ("MBH",)].mean_accuracy
    singles = {c: r[(c,)].mean_accuracy for c in MAPS}
    ok = all(maps >= a - 0.02 for a in singles.values()) and fused >= maps - 0.02
    record(2, ok, f"maps {maps:.4f} vs " + ", ".join(f"{c} {a:.4f}" for c, a in singles.items())
           + f"; maps+MBH {fused:.4f}")
    assert ok


@pytest.fixture(scope="module")
def benchmark_features(benchmark):
    """Cached benchmark descriptors, plus HOF/HOG on one clip per class and subject pair."""
    rows = read_manifest(benchmark["manifest"])
    cfg = benchmark["cfg"]
    videos = collect_features(rows, cfg, MAPS + ("MBH",), benchmark["root"] / "run_a" / "cache")
    subset = [r for r in rows if r.id.endswith("_r0") and r.group in ("s00", "s06")]
    tracks = [video_features(r, cfg, ["MBH", "HOF", "HOG"]) for r in subset]
    return videos, tracks


@pytest.mark.slow
def test_criterion_3_descriptor_dimensions(benchmark_features):
    videos, tracks = benchmark_features
    counts = dict.fromkeys(DIMS, 0)
    bad = []
    for feats in [v.channels for v in videos] + tracks:
        for c, X in feats.items():
            counts[c] += len(X)
            if X.ndim != 2 or X.shape[1] != DIMS[c]:
                bad.append((c, X.shape))
    ok = not bad and all(counts.values())
    record(3, ok, ", ".join(f"{c}={DIMS[c]} ({counts[c]} descriptors)" for c in DIMS))
    assert ok, bad


def timed(fn):
    t = time.perf_counter()
    ok = fn()
    return ok, time.perf_counter() - t


def suite_motion_maps():
    rng = np.random.default_rng(40)
    for _ in range(100):
        v = rng.integers(0, 256, tuple(rng.integers(1, 9, 3))).astype(np.uint8)
        for m, ref in zip(compute_motion_maps(v, normalize=False), motion_maps_loops(v)):
            scale = np.maximum(np.abs(ref), 1e-300)
            if np.any((np.abs(m.grid - ref) / scale > 1e-9) & (ref != 0)) or np.any(m.grid[ref == 0] != 0):
                return False
    return True


def suite_rect_sums():
    rng = np.random.default_rng(41)
    for _ in range(200):
        h, w = rng.integers(1, 12, 2)
        g = rng.integers(-1000, 1000, (h, w))
        S = integral_image(g)
        for _ in range(20):
            r0, r1 = sorted(rng.integers(0, h + 1, 2))
            c0, c1 = sorted(rng.integers(0, w + 1, 2))
            if rect_sum(S, r0, c0, r1, c1) != rect_sum_loops(g.tolist(), r0, c0, r1, c1):
                return False
    return True


def suite_histograms():
    rng = np.random.default_rng(42)
    vols = rng.random((50, 15, 32, 32)) * 255
    flows = rng.normal(0, 1.0, (50, 15, 32, 32, 2))
    got = (hog_from_volume(vols), hof_from_volume(flows), mbh_from_volume(flows))
    for i in range(50):
        for g, ref in zip(got, (hog_loops(vols[i]), hof_loops(flows[i]), mbh_loops(flows[i]))):
            if not np.allclose(g[i], ref, rtol=1e-6, atol=1e-12):
                return False
    return True


def suite_encoding():
    rng = np.random.default_rng(43)
    for _ in range(100):
        k, d = rng.integers(1, 8), rng.integers(1, 5)
        C = rng.integers(-3, 4, (k, d)).astype(float)  # integer grid: many exact ties
        X = rng.integers(-3, 4, (rng.integers(1, 30), d)).astype(float)
        idx, _ = nearest_centroid(X, C)
        ref = nearest_centroid_loops(X, C)
        if idx.tolist() != ref:
            return False
        hist = np.bincount(ref, minlength=k).astype(float)
        if not np.array_equal(encode_video(X, Codebook("XY", C)), hist / np.linalg.norm(hist)):
            return False
    return True


def suite_knn():
    rng = np.random.default_rng(44)
    for _ in range(300):
        n = int(rng.integers(1, 20))
        X = rng.integers(-3, 4, (n, 3)).astype(float)
        y = [str(v) for v in rng.integers(0, 4, n)]
        x = rng.integers(-3, 4, 3).astype(float)
        k = int(rng.integers(1, 7))
        if knn_predict(X, y, x, k) != knn_loops(X, y, x, k):
            return False
    return True


def test_criterion_4_oracle_suites():
    # compile the numba oracles before timing
    hog_loops(np.zeros((15, 32, 32)))
    hof_loops(np.zeros((15, 32, 32, 2)))
    suites = {"motion maps": suite_motion_maps, "rect sums": suite_rect_sums,
              "HoG/HOF/MBH": suite_histograms, "encoding": suite_encoding, "KNN": suite_knn}
    results = {name: timed(fn) for name, fn in suites.items()}
    ok = all(passed and secs <= 5.0 for passed, secs in results.values())
    record(4, ok, ", ".join(f"{n} {'ok' if p else 'MISMATCH'} {s:.2f}s" for n, (p, s) in results.items()))
    assert ok, results


def test_criterion_5_optical_flow():
    rng = np.random.default_rng(2024)
    big = ndimage.gaussian_filter(rng.random((64, 64)) * 255, 1.5)
    zero_ok = not optical_flow(big, big).any()
    errors = []
    for _ in range(20):
        dx, dy = 0, 0
        while dx == 0 and dy == 0:
            dx, dy = (int(v) for v in rng.integers(-4, 5, 2))
        tex = ndimage.gaussian_filter(rng.random((80, 80)) * 255, 1.5)
        a = np.rint(tex[8:72, 8:72])
        b = np.rint(tex[8 - dy:72 - dy, 8 - dx:72 - dx])
        f = optical_flow(a, b)
        errors.append(float(np.hypot(f[..., 0] - dx, f[..., 1] - dy).mean()))
    ok = zero_ok and max(errors) <= 0.5
    record(5, ok, f"identical frames zero: {zero_ok}; 20 shifts, worst mean EPE {max(errors):.3f} px (<= 0.5)")
    assert ok


def random_stream(rng, n, w=128, h=128):
    t = np.sort(rng.integers(0, 2**31, n))
    return EventStream(w, h, t, rng.integers(0, w, n), rng.integers(0, h, n), rng.random(n) < 0.5)


def declared(fn, expected):
    try:
        fn()
    except expected:
        return True
    except Exception:
        return False
    return False


def test_criterion_6_event_io():
    rng = np.random.default_rng(6)
    trips = 0
    for _ in range(1000):
        s = random_stream(rng, int(rng.integers(0, 60)))
        a = serialize_events(s, "AEDAT2", DVS128)
        c = serialize_events(s, "CSV", DVS128)
        if parse_aedat(a, DVS128) == s and parse_csv_events(c, (128, 128)) == s \
                and serialize_events(parse_aedat(a), "AEDAT2", DVS128) == a:
            trips += 1

    failures = []
    for i in range(300):
        s = random_stream(rng, int(rng.integers(2, 40)))
        raw = serialize_events(s, "AEDAT2", DVS128)
        head = len(raw) - 8 * len(s)
        cut = raw[:len(raw) - int(rng.integers(1, 8))]
        if not declared(lambda: parse_aedat(cut), TruncatedRecord):
            failures.append(("truncated", i))
        # strictly decreasing timestamp pair
        j = int(rng.integers(1, len(s)))
        rec = bytearray(raw)
        t_prev = int.from_bytes(rec[head + 8 * (j - 1) + 4:head + 8 * j], "big")
        rec[head + 8 * j + 4:head + 8 * j + 8] = (t_prev - 1 if t_prev else 0).to_bytes(4, "big")
        if t_prev and not declared(lambda: parse_aedat(bytes(rec)), MonotonicityViolation):
            failures.append(("non-monotone", i))
        small = DVS128.with_geometry(16, 16)
        big = s.x.max() >= 16 or s.y.max() >= 16
        if big and not declared(lambda: parse_aedat(raw, small), AddressOutOfRange):
            failures.append(("out-of-range aedat", i))
        line = f"{i},{int(rng.integers(16, 500))},{int(rng.integers(0, 16))},1"
        if not declared(lambda: parse_csv_events(line, (16, 16)), AddressOutOfRange):
            failures.append(("out-of-range csv", i))
        back = f"5,1,1,1\n{int(rng.integers(0, 5))},1,1,0"
        if not declared(lambda: parse_csv_events(back, (16, 16)), MonotonicityViolation):
            failures.append(("non-monotone csv", i))
    for i in range(1000):
        blob = rng.bytes(int(rng.integers(0, 120)))
        for data in (blob, b"#!AER-DAT2.0\r\n" + blob):
            try:
                parse_aedat(data)
            except EventIOError:
                pass
            except Exception as exc:  # anything else is a crash
                failures.append(("crash", repr(exc)))
        try:
            parse_csv_events(blob, (16, 16))
        except EventIOError:
            pass
        except Exception as exc:
            failures.append(("csv crash", repr(exc)))
    ok = trips == 1000 and not failures
    record(6, ok, f"{trips}/1000 streams round-trip through AEDAT2 and CSV; fuzz failures: {len(failures)}")
    assert ok, failures[:5]


def test_criterion_7a_kmeans_objective():
    rng = np.random.default_rng(7)
    bad = 0
    for i in range(100):
        n, d = int(rng.integers(20, 200)), int(rng.integers(1, 10))
        X = rng.normal(size=(n, d)) * rng.random(d) * 5
        book = train_codebook(X, int(rng.integers(1, 12)), seed=i)
        obj = np.asarray(book.objective)
        bad += bool(np.any(np.diff(obj) > 1e-9 * max(1.0, obj[0])))
    record("7a", bad == 0, f"k-means objective non-increasing on {100 - bad}/100 random instances")
    assert bad == 0


@pytest.mark.slow
def test_criterion_7b_unit_norms(benchmark_features):
    videos, tracks = benchmark_features
    worst, zero_desc = 0.0, 0
    all_feats = [v.channels for v in videos] + tracks
    for feats in all_feats:
        for X in feats.values():
            n = np.linalg.norm(X, axis=1)
            zero_desc += int(np.sum(n == 0))
            if np.any(n > 0):
                worst = max(worst, float(np.abs(n[n > 0] - 1).max()))
    hist_worst, empty = 0.0, 0
    for c in MAPS + ("MBH",):
        sample = sample_training_features([v.channels[c] for v in videos], 5000, seed=1)
        book = train_codebook(sample, 50, seed=1, kind=c, max_iter=20)
        for v in videos:
            h = encode_video(v.channels[c], book)
            if h.any():
                hist_worst = max(hist_worst, abs(float(np.linalg.norm(h)) - 1))
            else:
                empty += 1
    ok = worst <= 1e-6 and hist_worst <= 1e-6
    record("7b", ok, f"max | ||d|| - 1 | descriptors {worst:.1e} ({zero_desc} zero), "
                     f"histograms {hist_worst:.1e} ({empty} empty)")
    assert ok


@pytest.mark.slow
def test_criterion_8_determinism(benchmark):
    root = benchmark["root"]
    same = {f: (root / "run_a" / f).read_bytes() == (root / "run_b" / f).read_bytes() for f in REPORT_FILES}
    ok = all(same.values())
    record(8, ok, "byte-identical across two full runs: " + ", ".join(f"{f} {'yes' if s else 'NO'}" for f, s in same.items()))
    assert ok


def test_criterion_9_full_scale_reproduction():
    record(9, "SKIP", "optional; needs the external UCF11 event recordings, see scripts/reproduce_ucf11.sh")
    pytest.skip("requires external data")
