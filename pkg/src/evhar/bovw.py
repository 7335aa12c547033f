"""Visual vocabularies: feature sampling, k-means codebooks, histogram encoding, fusion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .descriptors import l2_normalize
from .errors import DimensionMismatch, NoFeatures, TooFewSamples

CODEBOOK_VERSION = 1


@dataclass(frozen=True, eq=False)
class Codebook:
    kind: str
    centroids: np.ndarray  # (k, d)
    seed: int = 0
    # k-means objective after seeding and after every Lloyd iteration
    objective: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "version": CODEBOOK_VERSION,
            "kind": self.kind,
            "k": self.k,
            "d": self.d,
            "seed": self.seed,
            "centroids": self.centroids.ravel().tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        obj = json.loads(text)
        if obj.get("version") != CODEBOOK_VERSION:
            raise ValueError(f"unsupported codebook version {obj.get('version')!r}")
        c = np.array(obj["centroids"], dtype=np.float64).reshape(obj["k"], obj["d"])
        return cls(obj["kind"], c, obj["seed"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Codebook":
        return cls.from_json(Path(path).read_text())


def sample_training_features(per_video: Sequence[np.ndarray], budget: int, seed: int = 0) -> np.ndarray:
    """Draw up to ``budget`` rows, spread evenly over videos.

    Each video gets ``budget // n`` rows and the first ``budget % n`` videos one
    more; videos with fewer rows give all of them (the shortfall is not
    redistributed). Rows keep their original order within a video.
    """
    videos = [np.asarray(v, dtype=np.float64) for v in per_video]
    if not videos or all(len(v) == 0 for v in videos):
        raise NoFeatures("no training video produced any feature")
    n = len(videos)
    base, extra = divmod(int(budget), n)
    rng = np.random.default_rng(seed)
    picked = []
    for i, v in enumerate(videos):
        quota = base + (1 if i < extra else 0)
        if len(v) <= quota:
            picked.append(v)
        elif quota > 0:
            idx = np.sort(rng.choice(len(v), size=quota, replace=False))
            picked.append(v[idx])
    d = next(v.shape[1] for v in videos if len(v))
    return np.concatenate([p.reshape(-1, d) for p in picked])


def squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = X @ C.T
    d2 *= -2.0
    d2 += (X * X).sum(1)[:, None]
    d2 += (C * C).sum(1)[None, :]
    return np.maximum(d2, 0.0, out=d2)


def nearest_centroid(X: np.ndarray, C: np.ndarray, block: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Index of (and squared distance to) the nearest centroid; ties go to the lowest index.

    Uses the fast expansion, then recomputes rows whose best two candidates are
    too close to call so the assignment matches exact distances.
    """
    n, k = len(X), len(C)
    idx = np.zeros(n, np.int64)
    best = np.zeros(n)
    xx = (X * X).sum(1)
    cc = (C * C).sum(1)
    scale = xx + cc.max() + 1.0 if k else xx
    for s in range(0, n, block):
        e = min(s + block, n)
        d2 = X[s:e] @ C.T
        d2 *= -2.0
        d2 += xx[s:e, None]
        d2 += cc[None, :]
        rows = np.arange(e - s)
        i = np.argmin(d2, axis=1)
        idx[s:e] = i
        best[s:e] = d2[rows, i]
        if k > 1:
            d2[rows, i] = np.inf
            close = np.flatnonzero(d2.min(axis=1) - best[s:e] <= 1e-9 * scale[s:e])
            for r in close + s:
                exact = ((C - X[r]) ** 2).sum(1)
                idx[r] = int(np.argmin(exact))
                best[r] = exact[idx[r]]
    return idx, np.maximum(best, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centres = np.empty((k, X.shape[1]))
    centres[0] = X[rng.integers(n)]
    sq = (X * X).sum(1)

    def dist_to(c):
        return np.maximum(sq - 2.0 * (X @ c) + c @ c, 0.0)

    closest = dist_to(centres[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            i = int(rng.integers(n))
        else:
            i = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centres[j] = X[i]
        np.minimum(closest, dist_to(centres[j]), out=closest)
    return centres


def _cluster_sums(X: np.ndarray, labels: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Per-cluster sums of rows, accumulated in a fixed (stable-sorted) order."""
    sums = np.zeros((len(counts), X.shape[1]))
    order = np.argsort(labels, kind="stable")
    filled = np.flatnonzero(counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[filled]
    sums[filled] = np.add.reduceat(X[order], starts, axis=0)
    return sums


def train_codebook(features: np.ndarray, k: int, seed: int = 0, kind: str = "", max_iter: int = 100,
                   init: np.ndarray | None = None) -> Codebook:
    """k-means++ seeding followed by Lloyd iterations until assignments stop changing.

    A cluster that empties is re-seeded with the point farthest from its
    current centroid. ``init`` overrides the seeding.
    """
    X = np.asarray(features, dtype=np.float64)
    n = len(X)
    if n < k:
        raise TooFewSamples(f"{n} samples for {k} clusters")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng) if init is None else np.array(init, dtype=np.float64)
    labels, dist = nearest_centroid(X, C)
    history = [float(dist.sum())]
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        sums = _cluster_sums(X, labels, counts)
        newC = C.copy()
        filled = counts > 0
        newC[filled] = sums[filled] / counts[filled, None]
        for j in np.flatnonzero(~filled):
            far = int(np.argmax(dist))
            newC[j] = X[far]
            dist[far] = 0.0
        new_labels, new_dist = nearest_centroid(X, newC)
        C = newC
        history.append(float(new_dist.sum()))
        converged = np.array_equal(new_labels, labels) and filled.all()
        labels, dist = new_labels, new_dist
        if converged:
            break
    return Codebook(kind, C, seed, history)


def encode_video(descriptors: np.ndarray, codebook: Codebook) -> np.ndarray:
    """L2-normalised word-count histogram; an empty set gives all zeros."""
    D = np.asarray(descriptors, dtype=np.float64)
    if D.size == 0:
        return np.zeros(codebook.k)
    if D.ndim != 2 or D.shape[1] != codebook.d:
        raise DimensionMismatch(f"descriptor length {D.shape[-1]} != codebook dimension {codebook.d}")
    idx, _ = nearest_centroid(D, codebook.centroids)
    return l2_normalize(np.bincount(idx, minlength=codebook.k).astype(np.float64))


def fuse(histograms: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate already-normalised channel histograms, in the given order."""
    if not len(histograms):
        raise ValueError("nothing to fuse")
    return np.concatenate([np.asarray(h, dtype=np.float64) for h in histograms])
