import numpy as np
import pytest

from evhar.classify import (
    CvConfig,
    MajorityClassifier,
    SvmModel,
    VideoFeatures,
    binary_svm,
    cross_validate,
    derive_seed,
    knn_predict,
    predict,
    train_svm,
)
from evhar.errors import (
    DegenerateFeatures,
    DimensionMismatch,
    EmptyTrainSet,
    InvariantViolation,
    MissingGroup,
    SingleClass,
)
from oracles import knn_loops


def blobs(rng, n=40):
    a = rng.normal((-3, -3), 0.5, (n, 2))
    b = rng.normal((3, 3), 0.5, (n, 2))
    return np.vstack([a, b]), ["a"] * n + ["b"] * n


def test_separable_blobs_fit_perfectly():
    X, y = blobs(np.random.default_rng(0))
    model = train_svm(X, y, C=1.0)
    assert model.predict(X) == y
    # hinge loss of the final solution
    margins = (np.where(np.array(y) == "b", 1, -1)) * (X @ model.weights[1] + model.biases[1])
    assert np.maximum(0, 1 - margins).sum() <= 1e-3
    for hist in model.history:
        primal, dual = hist[-1]
        assert primal - dual <= 1e-3


def test_dual_objective_improves_every_epoch():
    rng = np.random.default_rng(1)
    X = np.hstack([rng.normal(size=(80, 5)), np.ones((80, 1))])
    y = np.where(rng.random(80) < 0.5, 1.0, -1.0)
    _, hist = binary_svm(X, y, C=1.0, tol=1e-6)
    duals = [d for _, d in hist]
    assert all(b >= a - 1e-12 for a, b in zip(duals, duals[1:]))
    assert all(p >= d - 1e-9 for p, d in hist)


def test_duplicated_points_with_both_labels():
    rng = np.random.default_rng(2)
    P = rng.normal(size=(10, 3))
    X = np.vstack([P, P])
    y = ["a"] * 10 + ["b"] * 10
    acc = np.mean([p == t for p, t in zip(train_svm(X, y).predict(X), y)])
    assert acc == 0.5


def test_contract_errors():
    with pytest.raises(SingleClass):
        train_svm(np.eye(3), ["a"] * 3)
    with pytest.raises(DegenerateFeatures):
        train_svm(np.zeros((4, 2)), ["a", "b", "a", "b"])
    with pytest.raises(EmptyTrainSet):
        train_svm(np.ones((1, 2)), ["a"])


def test_predict_argmax_ties_and_dimension():
    model = SvmModel(["x", "y", "z"], np.eye(3), np.zeros(3))
    label, scores = predict(model, [0.9, 0.1, 0.1])
    assert label == "x" and scores.tolist() == [0.9, 0.1, 0.1]
    assert predict(model, [0.2, 0.5, 0.5])[0] == "y"
    with pytest.raises(DimensionMismatch):
        predict(model, [1.0, 2.0])


def test_prediction_scale_covariance():
    rng = np.random.default_rng(3)
    model = SvmModel(list("abcd"), rng.normal(size=(4, 6)), rng.normal(size=4))
    scaled = SvmModel(model.classes, model.weights * 7.5, model.biases * 7.5)
    X = rng.normal(size=(50, 6))
    assert model.predict(X) == scaled.predict(X)


def test_training_points_predict_their_labels_multiclass():
    rng = np.random.default_rng(4)
    centres = np.array([[0, 6], [6, 0], [-6, -6]])
    X = np.vstack([rng.normal(c, 0.4, (20, 2)) for c in centres])
    y = [c for c in "pqr" for _ in range(20)]
    assert train_svm(X, y).predict(X) == y


def test_svm_is_deterministic_and_serialises(tmp_path):
    X, y = blobs(np.random.default_rng(5), 15)
    a, b = train_svm(X, y, seed=3), train_svm(X, y, seed=3)
    np.testing.assert_array_equal(a.weights, b.weights)
    a.save(tmp_path / "m.json")
    back = SvmModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.weights, a.weights)
    np.testing.assert_array_equal(back.biases, a.biases)
    assert back.classes == a.classes


def test_knn_examples():
    X = np.array([[0.0, 0], [1, 0], [0, 1], [5, 5]])
    y = ["a", "b", "b", "c"]
    assert knn_predict(X, y, [5, 5], 1) == "c"
    assert knn_predict(X, y, [0.1, 0.1], 3) == "b"
    with pytest.raises(EmptyTrainSet):
        knn_predict(np.zeros((0, 2)), [], [0, 0], 1)


def test_knn_matches_exhaustive_oracle():
    rng = np.random.default_rng(6)
    for _ in range(200):
        n = int(rng.integers(1, 15))
        X = rng.integers(-3, 4, (n, 2)).astype(float)  # small integer grid makes distance ties common
        y = [str(v) for v in rng.integers(0, 3, n)]
        x = rng.integers(-3, 4, 2).astype(float)
        k = int(rng.integers(1, 6))
        assert knn_predict(X, y, x, k) == knn_loops(X, y, x, k)


def test_majority_classifier():
    assert MajorityClassifier(["b", "a", "b"]).predict([0, 0]) == ["b", "b"]
    assert MajorityClassifier(["b", "a"]).label == "a"


def toy_videos(groups_labels, seed=0):
    rng = np.random.default_rng(seed)
    vids = []
    for g, labels in groups_labels.items():
        for i, lab in enumerate(labels):
            vids.append(VideoFeatures(f"{g}{i}", lab, g, {"XY": rng.normal(size=(5, 64))}))
    return vids


def test_majority_stub_two_groups_by_hand():
    # fold A trains on B (majority b) -> 1 of 3 right; fold B trains on A (majority a) -> 1 of 3 right
    vids = toy_videos({"A": ["a", "a", "b"], "B": ["a", "b", "b"]})
    rep = cross_validate(vids, [["XY"]], CvConfig(default_k=2, classifier="majority"))[("XY",)]
    assert rep.folds == ["A", "B"]
    assert rep.fold_accuracy == [pytest.approx(1 / 3)] * 2
    assert rep.mean_accuracy == pytest.approx(1 / 3)
    np.testing.assert_array_equal(rep.confusion, [[1, 2], [2, 1]])
    assert rep.confusion.sum(axis=1).tolist() == [3, 3]
    assert rep.pooled_accuracy == pytest.approx(np.trace(rep.confusion) / 6)


def test_one_fold_per_group_and_no_leakage():
    labels = {f"s{g:02d}": ["a", "b"] for g in range(12)}
    vids = toy_videos(labels)
    reps = cross_validate(vids, [["XY"]], CvConfig(default_k=3, classifier="knn"))
    rep = reps[("XY",)]
    assert len(rep.folds) == 12
    for g in rep.folds:
        held_out = {v.id for v in vids if v.group == g}
        assert not held_out & set(rep.train_ids[g])
    assert sorted(rep.predictions) == sorted(v.id for v in vids)


def test_missing_groups():
    with pytest.raises(MissingGroup):
        cross_validate(toy_videos({"": ["a", "b"], "B": ["a"]}), [["XY"]], CvConfig(default_k=2))
    with pytest.raises(MissingGroup):
        cross_validate(toy_videos({"A": ["a", "b", "a"]}), [["XY"]], CvConfig(default_k=2))


def test_duplicate_ids_across_folds_are_caught():
    vids = toy_videos({"A": ["a", "b"], "B": ["a", "b"]})
    vids[2].id = vids[0].id
    with pytest.raises(InvariantViolation):
        cross_validate(vids, [["XY"]], CvConfig(default_k=2, classifier="majority"))


def test_single_channel_run_equals_its_slice_of_a_comparison():
    vids = toy_videos({g: ["a", "b", "a"] for g in "ABC"})
    for v in vids:
        v.channels["MBH"] = np.random.default_rng(len(v.id)).normal(size=(4, 192))
    cfg = CvConfig(default_k=3)
    alone = cross_validate(vids, [["XY"]], cfg)[("XY",)]
    together = cross_validate(vids, [["XY", "MBH"], ["XY"]], cfg)[("XY",)]
    assert alone.fold_accuracy == together.fold_accuracy and alone.predictions == together.predictions


def test_derive_seed_is_stable():
    assert derive_seed(0, "kmeans", "XY", "s01") == derive_seed(0, "kmeans", "XY", "s01")
    assert derive_seed(0, "kmeans", "XY", "s01") != derive_seed(0, "kmeans", "XT", "s01")
    assert derive_seed(0, "kmeans", "XY", "s01") != derive_seed(1, "kmeans", "XY", "s01")
