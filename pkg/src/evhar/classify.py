"""One-vs-all linear SVMs, a KNN baseline and leave-one-group-out evaluation."""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit

from .bovw import encode_video, sample_training_features, train_codebook
from .errors import (
    DegenerateFeatures,
    DimensionMismatch,
    EmptyTrainSet,
    InvariantViolation,
    MissingGroup,
    SingleClass,
)

log = logging.getLogger(__name__)

MODEL_VERSION = 1
CHANNEL_ORDER = ("XY", "XT", "YT", "MBH", "HOF", "HOG")


@njit(cache=True)
def _dcd_epoch(X, y, alpha, w, qii, order, C):
    for i in order:
        if qii[i] <= 0.0:
            continue
        g = y[i] * np.dot(w, X[i]) - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if pg != 0.0:
            new = min(max(a - g / qii[i], 0.0), C)
            w += (new - a) * y[i] * X[i]
            alpha[i] = new


def _objectives(X, y, alpha, w, C):
    margins = y * (X @ w)
    ww = float(w @ w)
    primal = 0.5 * ww + C * float(np.maximum(0.0, 1.0 - margins).sum())
    dual = float(alpha.sum()) - 0.5 * ww
    return primal, dual


def binary_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, tol: float = 1e-3, max_epochs: int = 2000,
               seed: int = 0):
    """Hinge-loss linear SVM by dual coordinate descent.

    ``X`` already carries the constant bias column. Stops once the duality
    gap is at most ``tol``. Returns ``(w, history)`` where ``history`` holds
    ``(primal, dual)`` after every epoch.
    """
    n, d = X.shape
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.einsum("ij,ij->i", X, X)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(max_epochs):
        _dcd_epoch(X, y, alpha, w, qii, rng.permutation(n), C)
        primal, dual = _objectives(X, y, alpha, w, C)
        history.append((primal, dual))
        if primal - dual <= tol:
            break
    else:
        log.warning("SVM stopped at %d epochs with duality gap %.3g", max_epochs, history[-1][0] - history[-1][1])
    return w, history


@dataclass(frozen=True, eq=False)
class SvmModel:
    classes: list
    weights: np.ndarray  # (n_classes, d)
    biases: np.ndarray  # (n_classes,)
    C: float = 1.0
    channels: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"feature length {X.shape[1]} != model dimension {self.dim}")
        return X @ self.weights.T + self.biases

    def predict(self, X: np.ndarray) -> list:
        return [self.classes[i] for i in np.argmax(self.decision_function(X), axis=1)]

    def to_json(self) -> str:
        return json.dumps({
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "C": self.C,
            "channels": list(self.channels),
        })

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        obj = json.loads(text)
        if obj.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        return cls(obj["classes"], np.array(obj["weights"], dtype=np.float64).reshape(len(obj["classes"]), -1),
                   np.array(obj["biases"], dtype=np.float64), obj["C"], obj["channels"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SvmModel":
        return cls.from_json(Path(path).read_text())


def train_svm(X, y, C: float = 1.0, tol: float = 1e-3, seed: int = 0, channels=()) -> SvmModel:
    """One binary SVM per class (that class +1, the rest -1).

    The bias is learned as the weight of a constant input of 1, so it is
    regularised along with ``w``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = list(y)
    if C <= 0:
        raise ValueError("C must be positive")
    if len(X) < 2:
        raise EmptyTrainSet("need at least 2 training samples")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise SingleClass(f"only one class present: {classes}")
    if not np.any(X):
        raise DegenerateFeatures("all training features are zero")
    Xb = np.hstack([X, np.ones((len(X), 1))])
    lab = np.array([classes.index(v) for v in labels])
    W = np.zeros((len(classes), X.shape[1]))
    b = np.zeros(len(classes))
    hist = []
    for c in range(len(classes)):
        yc = np.where(lab == c, 1.0, -1.0)
        wc, h = binary_svm(Xb, yc, C, tol, seed=seed + c)
        W[c], b[c] = wc[:-1], wc[-1]
        hist.append(h)
    return SvmModel(classes, W, b, C, list(channels), hist)


def predict(model: SvmModel, x) -> tuple:
    """Predicted label and the per-class decision values for one sample."""
    scores = model.decision_function(x)[0]
    return model.classes[int(np.argmax(scores))], scores


def knn_predict(X_train, y_train, x, k_neighbors: int = 1):
    """Majority vote among the ``k`` Euclidean-nearest training samples.

    Distance ties keep training order. Vote ties go to the class whose
    voters are closer on average, then to the lowest class.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    if len(X_train) == 0:
        raise EmptyTrainSet("KNN needs at least one training sample")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    labels = list(y_train)
    classes = sorted(set(labels))
    d = np.sqrt(((X_train - np.asarray(x, dtype=np.float64)) ** 2).sum(1))
    near = np.argsort(d, kind="stable")[:k_neighbors]
    votes = {}
    for i in near:
        votes.setdefault(labels[i], []).append(d[i])
    best = max(len(v) for v in votes.values())
    tied = [c for c in classes if len(votes.get(c, ())) == best]
    return min(tied, key=lambda c: (float(np.mean(votes[c])), classes.index(c)))


class MajorityClassifier:
    """Predicts the most frequent training label (lowest label on ties)."""

    def __init__(self, y):
        labels = list(y)
        classes = sorted(set(labels))
        counts = [labels.count(c) for c in classes]
        self.label = classes[int(np.argmax(counts))]

    def predict(self, X):
        return [self.label] * len(X)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class VideoFeatures:
    id: str
    label: str
    group: str
    channels: dict  # channel name -> (n, d) descriptor array


@dataclass(frozen=True)
class CvConfig:
    k: Mapping[str, int] = field(default_factory=dict)
    default_k: int = 500
    budget: int = 100_000
    seed: int = 0
    classifier: str = "svm"  # svm | knn | majority
    C: float = 1.0
    svm_tol: float = 1e-3
    knn_k: int = 1
    codebook_mode: str = "per_fold"  # per_fold | shared (leaks test features into codebooks)

    def words(self, channel: str) -> int:
        return int(self.k.get(channel, self.default_k))


@dataclass
class EvalReport:
    channels: tuple
    classes: list
    folds: list  # group ids, in fold order
    fold_accuracy: list
    confusion: np.ndarray  # rows: true class, columns: predicted
    predictions: dict = field(default_factory=dict)  # video id -> predicted label
    train_ids: dict = field(default_factory=dict)  # fold group -> ids used for any training

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy)) if self.fold_accuracy else 0.0

    @property
    def pooled_accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    @property
    def per_class_accuracy(self) -> list:
        rows = self.confusion.sum(axis=1)
        return [float(self.confusion[i, i] / r) if r else 0.0 for i, r in enumerate(rows)]


def ordered_channels(channels: Sequence[str]) -> tuple:
    unknown = [c for c in channels if c not in CHANNEL_ORDER]
    if unknown:
        raise ValueError(f"unknown channels {unknown}; known: {CHANNEL_ORDER}")
    return tuple(c for c in CHANNEL_ORDER if c in channels)


def derive_seed(seed: int, *parts) -> int:
    """Stable sub-seed for a named component (independent of what else runs)."""
    words = [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence([seed, *words]).generate_state(1)[0])


def _fit_predict(cfg: CvConfig, X_tr, y_tr, X_te, seed: int, channels) -> list:
    if cfg.classifier == "svm":
        return train_svm(X_tr, y_tr, cfg.C, cfg.svm_tol, seed, channels).predict(X_te)
    if cfg.classifier == "knn":
        return [knn_predict(X_tr, y_tr, x, cfg.knn_k) for x in X_te]
    if cfg.classifier == "majority":
        return MajorityClassifier(y_tr).predict(X_te)
    raise ValueError(f"unknown classifier {cfg.classifier!r}")


def _encode_all(videos, channel, train_idx, cfg, fold_key):
    per_video = [videos[i].channels[channel] for i in train_idx]
    feats = sample_training_features(per_video, cfg.budget, derive_seed(cfg.seed, "sample", channel, fold_key))
    book = train_codebook(feats, cfg.words(channel), derive_seed(cfg.seed, "kmeans", channel, fold_key), channel)
    return np.stack([encode_video(v.channels[channel], book) for v in videos])


def cross_validate(videos: Sequence[VideoFeatures], channel_sets: Sequence[Sequence[str]], cfg: CvConfig = CvConfig(),
                   progress: Callable[[str], None] | None = None) -> dict:
    """Leave-one-group-out evaluation of several channel combinations at once.

    Codebooks are learned per fold from training videos only (unless
    ``cfg.codebook_mode == "shared"``) and reused by every combination that
    includes the channel. Returns ``{channel tuple: EvalReport}``.
    """
    if any(not v.group for v in videos):
        raise MissingGroup("every video needs a group id")
    groups = sorted({v.group for v in videos})
    if len(groups) < 2:
        raise MissingGroup(f"need at least 2 groups, got {groups}")
    sets = [ordered_channels(s) for s in channel_sets]
    needed = ordered_channels(sorted({c for s in sets for c in s}))
    classes = sorted({v.label for v in videos})
    labels = [v.label for v in videos]
    reports = {s: EvalReport(s, classes, [], [], np.zeros((len(classes), len(classes)), np.int64)) for s in sets}

    shared = {}
    if cfg.codebook_mode == "shared":
        log.warning("shared codebooks are trained on all videos, including held-out ones")
        for ch in needed:
            shared[ch] = _encode_all(videos, ch, range(len(videos)), cfg, "shared")
    elif cfg.codebook_mode != "per_fold":
        raise ValueError(f"unknown codebook_mode {cfg.codebook_mode!r}")

    for g in groups:
        test = [i for i, v in enumerate(videos) if v.group == g]
        train = [i for i, v in enumerate(videos) if v.group != g]
        train_ids = {videos[i].id for i in train}
        if train_ids & {videos[i].id for i in test}:
            raise InvariantViolation(f"fold {g}: training and held-out videos overlap")
        if progress:
            progress(f"fold {g}: {len(train)} train / {len(test)} test")
        encoded = shared or {ch: _encode_all(videos, ch, train, cfg, g) for ch in needed}
        y_tr = [labels[i] for i in train]
        for s in sets:
            X = np.hstack([encoded[ch] for ch in s])
            pred = _fit_predict(cfg, X[train], y_tr, X[test], derive_seed(cfg.seed, "svm", g), s)
            rep = reports[s]
            correct = 0
            for i, p in zip(test, pred):
                rep.confusion[classes.index(labels[i]), classes.index(p)] += 1
                rep.predictions[videos[i].id] = p
                correct += p == labels[i]
            rep.folds.append(g)
            rep.fold_accuracy.append(correct / len(test))
            rep.train_ids[g] = sorted(train_ids) if not shared else sorted(v.id for v in videos)
    return reports
