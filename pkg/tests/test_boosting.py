"""Boosted-trees learner tests, including a hand-computed single tree."""

import json
import math

import numpy as np
import pytest

from biasforge.boosting import BoostConfig, BoostedTreesClassifier, log_loss
from biasforge.exceptions import DegenerateDataError


def toy_separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, (n, 3))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    return X, y


class TestSingleTreeOracle:
    def test_hand_computed_stump(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = BoostedTreesClassifier(
            BoostConfig(n_rounds=1, max_depth=1, learning_rate=1.0,
                        min_leaf=1, reg_lambda=0.0)
        ).fit(X, y)
        # base margin logit(0.5)=0; gradients (0.5,0.5,-0.5,-0.5), hessians 0.25
        # left leaf: -G/H = -1/0.5 = -2; right leaf: +2
        scores = model.predict_score(X)
        expected_left = 1.0 / (1.0 + math.exp(2.0))
        expected_right = 1.0 / (1.0 + math.exp(-2.0))
        assert scores[0] == pytest.approx(expected_left, abs=1e-12)
        assert scores[3] == pytest.approx(expected_right, abs=1e-12)

    def test_regularized_newton_leaf(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0.0, 1.0])
        model = BoostedTreesClassifier(
            BoostConfig(n_rounds=1, max_depth=1, learning_rate=0.3,
                        min_leaf=1, reg_lambda=1.0)
        ).fit(X, y)
        # per-side G=+-0.5, H=0.25: leaf = -lr*G/(H+1) = -+0.12
        margins = model.predict_margin(X)
        assert margins[0] == pytest.approx(-0.3 * 0.5 / 1.25, abs=1e-12)
        assert margins[1] == pytest.approx(+0.3 * 0.5 / 1.25, abs=1e-12)


class TestTraining:
    def test_separable_toy_low_log_loss(self):
        X, y = toy_separable()
        model = BoostedTreesClassifier().fit(X, y)
        assert log_loss(y, model.predict_score(X)) < 0.1

    def test_train_loss_decreases_over_rounds(self):
        X, y = toy_separable(seed=3)
        losses = []
        for rounds in (1, 10, 40, 100):
            m = BoostedTreesClassifier(BoostConfig(n_rounds=rounds)).fit(X, y)
            losses.append(log_loss(y, m.predict_score(X)))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_constant_features_score_base_rate(self):
        n = 200
        X = np.full((n, 2), 3.7)
        y = (np.arange(n) < 60).astype(float)
        model = BoostedTreesClassifier().fit(X, y)
        assert np.allclose(model.predict_score(X), 0.3, atol=1e-9)

    def test_single_class_rejected(self):
        X = np.zeros((10, 1))
        with pytest.raises(DegenerateDataError):
            BoostedTreesClassifier().fit(X, np.ones(10))

    def test_min_leaf_respected(self):
        X, y = toy_separable(n=100, seed=5)
        model = BoostedTreesClassifier(BoostConfig(min_leaf=40, n_rounds=5)).fit(X, y)

        def leaf_counts(node, X_sub):
            if node.is_leaf:
                return [X_sub.shape[0]]
            mask = X_sub[:, node.feature] <= node.threshold
            return leaf_counts(node.left, X_sub[mask]) + leaf_counts(
                node.right, X_sub[~mask]
            )

        for tree in model.trees:
            for count in leaf_counts(tree, X):
                assert count >= 40 or count == X.shape[0]


class TestDeterminismAndSerialization:
    def test_bit_identical_artifacts(self):
        X, y = toy_separable(seed=7)
        a = BoostedTreesClassifier().fit(X, y).to_json_dict()
        b = BoostedTreesClassifier().fit(X, y).to_json_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_round_trip_predictions(self):
        X, y = toy_separable(seed=9)
        model = BoostedTreesClassifier(BoostConfig(n_rounds=30)).fit(
            X, y, feature_names=["a", "b", "c"]
        )
        blob = json.dumps(model.to_json_dict())
        clone = BoostedTreesClassifier.from_json_dict(json.loads(blob))
        X_test = np.random.default_rng(1).normal(0, 1, (100, 3))
        assert np.array_equal(model.predict_score(X_test), clone.predict_score(X_test))

    def test_feature_names_in_forest(self):
        X, y = toy_separable(seed=11)
        model = BoostedTreesClassifier(BoostConfig(n_rounds=2)).fit(
            X, y, feature_names=["income", "dpi", "noise"]
        )
        blob = model.to_json_dict()
        seen = set()

        def walk(node):
            if "feature" in node:
                seen.add(node["feature"])
                walk(node["left"])
                walk(node["right"])

        for t in blob["trees"]:
            walk(t)
        assert seen <= {"income", "dpi", "noise"}
        assert "income" in seen
