import itertools

import numpy as np
import pytest

from xsdc.labeling import (
    LabelAssignment,
    fit_final_classifier,
    hungarian_match,
    nn_propagate,
    predict_classes,
    spectral_cluster,
)
from xsdc.linalg import ridge_solve


# ---------------------------------------------------------------- propagation

def test_propagate_single_label_floods():
    X = np.random.default_rng(0).normal(size=(7, 3))
    out = nn_propagate(X, labeled_idx=[2], labels_S=[5])
    assert out.source == "nearest_neighbor"
    assert np.array_equal(out.labels, np.full(7, 5))


def test_propagate_keeps_labeled_rows():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 4))
    idx = np.array([0, 3, 11, 19])
    lab = np.array([2, 0, 1, 2])
    out = nn_propagate(X, idx, lab)
    assert np.array_equal(out.labels[idx], lab)


def test_propagate_matches_loop_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 5))
    idx = np.array([4, 9, 17, 25])
    lab = np.array([0, 1, 2, 1])
    out = nn_propagate(X, idx, lab)
    for i in range(30):
        if i in idx:
            continue
        d = [np.linalg.norm(X[i] - X[j]) for j in idx]
        assert out.labels[i] == lab[int(np.argmin(d))]


def test_propagate_distance_tie_prefers_lowest_index():
    # rows 0 and 2 are equidistant from row 1; index 0 must win
    X = np.array([[0.0], [1.0], [2.0]])
    out = nn_propagate(X, labeled_idx=[2, 0], labels_S=[7, 3])
    assert out.labels[1] == 3


def test_propagate_majority_vote():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [1.4]])
    out = nn_propagate(X, [0, 1, 2, 3], [1, 1, 0, 0], k_neighbors=3)
    # neighbors of row 4 at distances 0.4, 0.6, 1.4: labels 1, 1, 0
    assert out.labels[4] == 1


def test_propagate_vote_tie_prefers_lowest_label():
    X = np.array([[0.0], [2.0], [1.0]])
    out = nn_propagate(X, [0, 1], [4, 1], k_neighbors=2)
    assert out.labels[2] == 1


def test_propagate_validation():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError):
        nn_propagate(X, [], [])
    with pytest.raises(ValueError):
        nn_propagate(X, [0, 1], [0])
    with pytest.raises(ValueError):
        nn_propagate(X, [7], [0])
    with pytest.raises(ValueError):
        nn_propagate(X, [0, 1], [0, 1], k_neighbors=3)


# ------------------------------------------------------------------- spectral

def _block_equivalence(sizes, noise=0.0, seed=0):
    n = sum(sizes)
    M = np.zeros((n, n))
    start = 0
    for s in sizes:
        M[start : start + s, start : start + s] = 1.0
        start += s
    if noise:
        rng = np.random.default_rng(seed)
        M = M + noise * rng.normal(size=(n, n))
    return M


def test_spectral_recovers_blocks():
    M = _block_equivalence([6, 5, 7])
    out = spectral_cluster(M, k=3, seed=0)
    truth = np.repeat([0, 1, 2], [6, 5, 7])
    _, acc = hungarian_match(out.labels, truth)
    assert acc == 1.0
    assert out.source == "spectral"


def test_spectral_tolerates_noise():
    M = _block_equivalence([10, 10, 10], noise=0.05, seed=3)
    out = spectral_cluster(M, k=3, seed=0)
    truth = np.repeat([0, 1, 2], 10)
    _, acc = hungarian_match(out.labels, truth)
    assert acc == 1.0


def test_spectral_deterministic():
    M = _block_equivalence([4, 4], noise=0.3, seed=5)
    a = spectral_cluster(M, k=2, seed=11)
    b = spectral_cluster(M, k=2, seed=11)
    assert np.array_equal(a.labels, b.labels)


def test_spectral_identity_matrix_valid_output():
    out = spectral_cluster(np.eye(9), k=3, seed=0)
    assert out.labels.shape == (9,)
    assert set(np.unique(out.labels)) <= {0, 1, 2}


def test_spectral_k_one():
    out = spectral_cluster(np.eye(5), k=1, seed=0)
    assert np.array_equal(out.labels, np.zeros(5, dtype=np.int64))


def test_spectral_validation():
    with pytest.raises(ValueError):
        spectral_cluster(np.zeros((3, 4)), k=2)
    with pytest.raises(ValueError):
        spectral_cluster(np.eye(3), k=0)
    with pytest.raises(ValueError):
        spectral_cluster(np.eye(3), k=4)


# ------------------------------------------------------------------ hungarian

def test_hungarian_identity():
    labels = np.array([0, 1, 2, 0, 1, 2])
    mapping, acc = hungarian_match(labels, labels)
    assert np.array_equal(mapping, [0, 1, 2])
    assert acc == 1.0


def test_hungarian_pure_relabeling():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([2, 2, 0, 0, 1, 1])
    mapping, acc = hungarian_match(pred, truth)
    assert acc == 1.0
    assert np.array_equal(mapping[pred], truth)


def test_hungarian_matches_permutation_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        truth = rng.integers(0, 3, size=40)
        pred = rng.integers(0, 3, size=40)
        _, acc = hungarian_match(pred, truth, k=3)
        best = max(
            np.mean(np.array(perm)[pred] == truth)
            for perm in itertools.permutations(range(3))
        )
        assert acc == pytest.approx(best, abs=1e-12)


def test_hungarian_relabel_invariance():
    rng = np.random.default_rng(8)
    truth = rng.integers(0, 4, size=60)
    pred = rng.integers(0, 4, size=60)
    _, acc = hungarian_match(pred, truth, k=4)
    perm = np.array([2, 0, 3, 1])
    _, acc_perm = hungarian_match(perm[pred], truth, k=4)
    assert acc == pytest.approx(acc_perm, abs=1e-12)


def test_hungarian_validation():
    with pytest.raises(ValueError):
        hungarian_match([0, 1], [0])
    with pytest.raises(ValueError):
        hungarian_match([], [])
    with pytest.raises(ValueError):
        hungarian_match([0, -1], [0, 1])
    with pytest.raises(ValueError):
        hungarian_match([0, 3], [0, 1], k=2)


# ----------------------------------------------------------------- classifier

def test_classifier_separable_data_perfect():
    rng = np.random.default_rng(9)
    means = 8.0 * np.eye(3)
    phi = np.vstack(
        [rng.normal(loc=means[c], size=(15, 3)) for c in range(3)]
    )
    labels = np.repeat([0, 1, 2], 15)
    sol = fit_final_classifier(phi, labels, lam=1e-3)
    assert np.array_equal(predict_classes(sol, phi), labels)


def test_classifier_equals_one_hot_ridge():
    rng = np.random.default_rng(10)
    phi = rng.normal(size=(25, 4))
    labels = rng.integers(0, 3, size=25)
    sol = fit_final_classifier(phi, labels, lam=0.05)
    Y = np.zeros((25, 3))
    Y[np.arange(25), labels] = 1.0
    ref = ridge_solve(phi, Y, 0.05)
    np.testing.assert_allclose(sol.weights, ref.weights, rtol=0, atol=1e-12)
    np.testing.assert_allclose(sol.intercept, ref.intercept, rtol=0, atol=1e-12)


def test_classifier_k_wider_than_observed():
    phi = np.random.default_rng(11).normal(size=(10, 2))
    labels = np.zeros(10, dtype=int)
    sol = fit_final_classifier(phi, labels, lam=1.0, k=4)
    assert sol.weights.shape == (2, 4)
    assert np.array_equal(predict_classes(sol, phi), labels)


def test_classifier_score_tie_prefers_lowest_class():
    class Flat:
        def predict(self, phi):
            return np.zeros((phi.shape[0], 3))

    phi = np.zeros((4, 2))
    assert np.array_equal(predict_classes(Flat(), phi), np.zeros(4, dtype=int))


def test_classifier_validation():
    phi = np.zeros((5, 2))
    with pytest.raises(ValueError):
        fit_final_classifier(phi, np.array([0, 1]), lam=1.0)
    with pytest.raises(ValueError):
        fit_final_classifier(phi, np.array([0, 1, -1, 0, 1]), lam=1.0)
    with pytest.raises(ValueError):
        fit_final_classifier(phi, np.array([0, 1, 2, 0, 1]), lam=1.0, k=2)


def test_assignment_dataclass_defaults():
    a = LabelAssignment(labels=np.arange(3), source="ground_truth")
    assert a.matched_accuracy is None
