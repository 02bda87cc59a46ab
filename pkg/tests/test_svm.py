import math

import numpy as np
import pytest

from templadapt import svm
from templadapt.errors import (DimensionMismatch, InvalidArgument,
                               ZeroNormError)
from templadapt.synth import brute_force_svm, random_problem


def one_d_problem(c):
    return svm.SvmProblem(np.array([[1.0]]), np.array([[-1.0]]), c)


def test_rebalance_balanced_reduces_to_c():
    assert svm.rebalance_weights(1, 1, 10.0) == (10.0, 10.0)


def test_rebalance_derived_values():
    cp, cn = svm.rebalance_weights(3, 1000, 10.0)
    assert cp == pytest.approx(10.0 * 1003 / 6.0)
    assert cn == pytest.approx(5.015)


def test_rebalance_identity_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        np_, nn = int(rng.integers(1, 5000)), int(rng.integers(1, 5000))
        c = float(rng.uniform(0.01, 100))
        cp, cn = svm.rebalance_weights(np_, nn, c)
        assert cp * np_ == pytest.approx(cn * nn, rel=1e-15)


def test_rebalance_invalid_args():
    with pytest.raises(InvalidArgument):
        svm.rebalance_weights(0, 1, 10.0)
    with pytest.raises(InvalidArgument):
        svm.rebalance_weights(1, 1, 0.0)


@pytest.mark.parametrize("c", [1.0, 10.0, 100.0])
def test_train_1d_closed_form(c):
    clf = svm.train(one_d_problem(c))
    expected = 4 * c / (1 + 4 * c)
    assert clf.weights[0] == pytest.approx(expected, abs=1e-9)
    assert clf.weights[1] == pytest.approx(0.0, abs=1e-9)


def test_label_flip_negates_weights():
    prob = random_problem(5, d=3, n_pos=2, n_neg=4)
    flipped = svm.SvmProblem(prob.negatives, prob.positives, prob.c)
    # class weights swap consistently because counts swap too
    w1 = svm.train(prob).weights
    w2 = svm.train(flipped).weights
    assert np.allclose(w1, -w2, atol=1e-7)


def test_train_matches_brute_force():
    for seed in range(10):
        prob = random_problem(seed, d=2, n_pos=2, n_neg=5)
        clf = svm.train(prob)
        _, oracle_obj = brute_force_svm(prob)
        assert clf.objective_value == pytest.approx(oracle_obj, rel=1e-6)


def test_objective_never_exceeds_zero_weights():
    for seed in range(20):
        prob = random_problem(seed, d=4, n_pos=3, n_neg=7)
        cp, cn = prob.class_weights()
        clf = svm.train(prob)
        assert clf.objective_value <= cp * prob.n_pos + cn * prob.n_neg + 1e-12


def test_gradient_criterion_at_solution():
    for seed in range(20):
        prob = random_problem(seed, d=8, n_pos=2, n_neg=8)
        clf = svm.train(prob, tol=1e-10)
        x, y, cost = prob.augmented()
        w = clf.weights
        h = np.maximum(0.0, 1.0 - y * (x @ w))
        grad = w - 2.0 * (x.T @ (cost * y * h))
        assert np.linalg.norm(grad) <= 1e-10 * (1 + np.linalg.norm(w))


def test_train_deterministic_bitwise():
    prob = random_problem(3, d=16, n_pos=3, n_neg=20)
    w1 = svm.train(prob).weights
    w2 = svm.train(prob).weights
    assert np.array_equal(w1, w2)


def test_duplicate_features_act_as_multipliers():
    pos = np.array([[1.0, 0.5]])
    neg = np.array([[-1.0, 0.2], [-0.5, -0.3]])
    prob = svm.SvmProblem(pos, neg, 10.0)
    clf = svm.train(prob)
    assert np.all(np.isfinite(clf.weights))


def test_functional_margin():
    clf = svm.LinearClassifier(np.array([1.0, 0.0, 0.5]), 0.0, 0, 0.0)
    assert svm.functional_margin(clf, np.array([2.0, 3.0])) == pytest.approx(2.5)
    zero = svm.LinearClassifier(np.zeros(3), 0.0, 0, 0.0)
    assert svm.functional_margin(zero, np.array([2.0, 3.0])) == 0.0


def test_functional_margin_of_derived_classifier():
    clf = svm.train(one_d_problem(10.0))
    assert svm.functional_margin(clf, np.array([1.0])) == pytest.approx(40 / 41, abs=1e-8)


def test_functional_margin_dim_mismatch():
    clf = svm.LinearClassifier(np.array([1.0, 0.0, 0.5]), 0.0, 0, 0.0)
    with pytest.raises(DimensionMismatch):
        svm.functional_margin(clf, np.array([1.0, 2.0, 3.0]))


def test_geometric_margin():
    clf = svm.LinearClassifier(np.array([3.0, 4.0, 0.0]), 0.0, 0, 0.0)
    assert svm.geometric_margin(clf, np.array([1.0, 0.0])) == pytest.approx(3 / 5)
    clf2 = svm.LinearClassifier(np.array([1.0, 0.0, 1.0]), 0.0, 0, 0.0)
    assert svm.geometric_margin(clf2, np.array([1.0, 0.0])) == pytest.approx(2 / math.sqrt(2))


def test_geometric_margin_scale_invariant():
    rng = np.random.default_rng(9)
    w = rng.standard_normal(5)
    x = rng.standard_normal(4)
    g1 = svm.geometric_margin(svm.LinearClassifier(w, 0.0, 0, 0.0), x)
    g2 = svm.geometric_margin(svm.LinearClassifier(7.3 * w, 0.0, 0, 0.0), x)
    assert g1 == pytest.approx(g2)


def test_geometric_margin_zero_norm():
    clf = svm.LinearClassifier(np.zeros(3), 0.0, 0, 0.0)
    with pytest.raises(ZeroNormError):
        svm.geometric_margin(clf, np.array([1.0, 0.0]))


def test_problem_validation():
    with pytest.raises(InvalidArgument):
        svm.SvmProblem(np.zeros((0, 2)), np.ones((1, 2)), 10.0)
    with pytest.raises(DimensionMismatch):
        svm.SvmProblem(np.ones((1, 2)), np.ones((1, 3)), 10.0)
    with pytest.raises(InvalidArgument):
        svm.SvmProblem(np.ones((1, 2)), np.ones((1, 2)), -1.0)
