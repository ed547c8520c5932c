"""Boosted-tree engine: baselines, closed forms, monotone training loss, importance."""

import numpy as np
import pandas as pd
import pytest

from hreserve.errors import ConfigError, EstimabilityError
from hreserve.gbm import GbmFit, GbmParams, fit_gbm, gbm_importance


def gamma_split_frame(n_per_group=30, means=(2.0, 8.0), noisy=False, seed=0):
    rng = np.random.default_rng(seed)
    group = np.repeat(["lo", "hi"], n_per_group)
    mu = np.where(group == "lo", means[0], means[1])
    y = rng.gamma(4.0, mu / 4.0) if noisy else mu.astype(float)
    return pd.DataFrame({"group": group, "other": rng.normal(size=2 * n_per_group)}), y


class TestBaselines:
    def test_zero_trees_gamma_weighted_mean(self):
        frame, y = gamma_split_frame()
        w = np.linspace(0.5, 1.5, len(y))
        fit = fit_gbm(frame, y, "gamma", weights=w, params=GbmParams(n_trees=0))
        expected = np.sum(w * y) / np.sum(w)
        np.testing.assert_allclose(fit.predict(frame), expected, rtol=1e-12)

    def test_zero_trees_bernoulli_weighted_proportion(self):
        frame = pd.DataFrame({"x": np.arange(8.0)})
        y = np.array([1, 1, 1, 0, 0, 0, 0, 0], dtype=float)
        w = np.array([2.0] * 3 + [1.0] * 5)
        fit = fit_gbm(frame, y, "bernoulli", weights=w, params=GbmParams(n_trees=0))
        np.testing.assert_allclose(fit.predict(frame), 6 / 11, rtol=1e-12)


class TestSingleStump:
    def test_gamma_stump_recovers_group_means(self):
        frame, y = gamma_split_frame()
        params = GbmParams(n_trees=1, max_depth=1, shrinkage=1.0, bag_fraction=1.0,
                           min_samples_leaf=1)
        fit = fit_gbm(frame, y, "gamma", params=params, seed=0)
        pred = fit.predict(frame)
        np.testing.assert_allclose(pred[frame["group"] == "lo"], 2.0, atol=1e-6)
        np.testing.assert_allclose(pred[frame["group"] == "hi"], 8.0, atol=1e-6)

    def test_stump_importance_is_all_on_split_feature(self):
        frame, y = gamma_split_frame()
        params = GbmParams(n_trees=1, max_depth=1, shrinkage=1.0, bag_fraction=1.0,
                           min_samples_leaf=1)
        fit = fit_gbm(frame, y, "gamma", params=params, seed=0)
        importance = gbm_importance(fit)
        assert importance["group"] == pytest.approx(100.0, abs=1e-9)
        assert importance["other"] == 0.0


class TestTrainingDeviance:
    @pytest.mark.parametrize("loss", ["bernoulli", "gamma"])
    @pytest.mark.parametrize("bag", [1.0, 0.75])
    def test_non_increasing(self, loss, bag):
        rng = np.random.default_rng(3)
        n = 300
        frame = pd.DataFrame({
            "a": rng.normal(size=n),
            "b": rng.choice(["u", "v", "w"], size=n),
        })
        signal = 0.8 * frame["a"].to_numpy() + np.where(frame["b"] == "u", 0.5, -0.2)
        if loss == "bernoulli":
            y = (rng.uniform(size=n) < 1 / (1 + np.exp(-signal))).astype(float)
        else:
            y = rng.gamma(3.0, np.exp(signal) / 3.0)
        params = GbmParams(n_trees=60, max_depth=2, shrinkage=0.05, bag_fraction=bag)
        fit = fit_gbm(frame, y, loss, params=params, seed=5)
        path = np.asarray(fit.train_deviance)
        assert len(path) == 60
        assert (np.diff(path) <= 1e-9).all()

    def test_more_trees_fit_better(self):
        frame, y = gamma_split_frame(noisy=True, seed=2)
        params = GbmParams(n_trees=50, shrinkage=0.1, bag_fraction=1.0, min_samples_leaf=5)
        fit = fit_gbm(frame, y, "gamma", params=params, seed=1)
        assert fit.train_deviance[49] < fit.train_deviance[0]


class TestDeterminismAndStructure:
    def test_same_seed_identical_trees(self):
        frame, y = gamma_split_frame(noisy=True, seed=4)
        params = GbmParams(n_trees=20, bag_fraction=0.6, min_samples_leaf=3)
        a = fit_gbm(frame, y, "gamma", params=params, seed=9)
        b = fit_gbm(frame, y, "gamma", params=params, seed=9)
        assert a.trees == b.trees
        c = fit_gbm(frame, y, "gamma", params=params, seed=10)
        assert a.trees != c.trees

    def test_depth_bound_respected(self):
        def depth(node):
            if node["kind"] == "leaf":
                return 0
            return 1 + max(depth(node["left"]), depth(node["right"]))

        rng = np.random.default_rng(8)
        n = 400
        frame = pd.DataFrame({"a": rng.normal(size=n), "b": rng.normal(size=n)})
        y = rng.gamma(2.0, np.exp(0.5 * frame["a"].to_numpy()) / 2.0)
        params = GbmParams(n_trees=25, max_depth=2, bag_fraction=1.0, min_samples_leaf=5)
        fit = fit_gbm(frame, y, "gamma", params=params, seed=0)
        assert max(depth(t) for t in fit.trees) <= 2

    def test_serialization_round_trip(self):
        frame, y = gamma_split_frame(noisy=True, seed=6)
        fit = fit_gbm(frame, y, "gamma", params=GbmParams(n_trees=10), seed=3)
        again = GbmFit.from_dict(fit.to_dict())
        np.testing.assert_array_equal(fit.predict(frame), again.predict(frame))


class TestImportance:
    def test_empty_ensemble_errors(self):
        frame, y = gamma_split_frame()
        fit = fit_gbm(frame, y, "gamma", params=GbmParams(n_trees=0))
        with pytest.raises(EstimabilityError):
            gbm_importance(fit)

    def test_equal_gains_split_fifty_fifty(self):
        stump_a = {"kind": "split", "feature": 0, "type": "numeric", "threshold": 0.0,
                   "gain": 3.5, "left": {"kind": "leaf", "value": -1.0},
                   "right": {"kind": "leaf", "value": 1.0}}
        stump_b = {**stump_a, "feature": 1}
        fit = GbmFit(trees=[stump_a, stump_b], initial_value=0.0, shrinkage=1.0,
                     loss="gamma", features=["a", "b"], levels={}, params=GbmParams())
        importance = gbm_importance(fit)
        assert importance["a"] == pytest.approx(50.0, abs=1e-9)
        assert importance["b"] == pytest.approx(50.0, abs=1e-9)

    def test_scores_sum_to_hundred(self):
        rng = np.random.default_rng(12)
        n = 250
        frame = pd.DataFrame({
            "a": rng.normal(size=n),
            "b": rng.normal(size=n),
            "c": rng.choice(["x", "y"], size=n),
        })
        y = rng.gamma(2.0, np.exp(0.4 * frame["a"] - 0.3 * (frame["c"] == "x")) / 2.0)
        fit = fit_gbm(frame, y, "gamma", params=GbmParams(n_trees=40), seed=2)
        assert sum(gbm_importance(fit).values()) == pytest.approx(100.0, abs=1e-9)


class TestValidation:
    def test_bad_hyperparameters(self):
        frame, y = gamma_split_frame()
        for bad in (GbmParams(n_trees=-1), GbmParams(shrinkage=0.0),
                    GbmParams(bag_fraction=1.5), GbmParams(max_depth=0)):
            with pytest.raises(ConfigError):
                fit_gbm(frame, y, "gamma", params=bad)

    def test_gamma_nonpositive_response(self):
        frame, _ = gamma_split_frame()
        y = np.zeros(len(frame))
        with pytest.raises(ValueError, match="positive"):
            fit_gbm(frame, y, "gamma")

    def test_unknown_loss(self):
        frame, y = gamma_split_frame()
        with pytest.raises(ConfigError):
            fit_gbm(frame, y, "poisson")

    def test_categorical_split_on_level_subset(self):
        rng = np.random.default_rng(3)
        n = 200
        cat = rng.choice(["a", "b", "c", "d"], size=n)
        mu = np.where(np.isin(cat, ["a", "c"]), 2.0, 8.0)
        y = mu.astype(float)
        frame = pd.DataFrame({"cat": cat})
        params = GbmParams(n_trees=1, max_depth=1, shrinkage=1.0, bag_fraction=1.0,
                           min_samples_leaf=1)
        fit = fit_gbm(frame, y, "gamma", params=params, seed=0)
        pred = fit.predict(frame)
        np.testing.assert_allclose(pred[np.isin(cat, ["a", "c"])], 2.0, atol=1e-6)
        np.testing.assert_allclose(pred[np.isin(cat, ["b", "d"])], 8.0, atol=1e-6)
