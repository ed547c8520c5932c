"""Gradient-boosted regression trees for Bernoulli and gamma responses.

Each boosting step fits a shallow regression tree to the negative gradient of
the weighted loss and applies a loss-specific leaf update on the link scale:
a Newton step for Bernoulli, the closed-form weighted update for gamma.
Categorical features are split by level subsets found by ordering levels by
their mean residual; numeric features by exhaustive threshold scan.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, EstimabilityError, PredictionError
from .families import Gamma, get_family

logger = logging.getLogger(__name__)

_MIN_GAIN = 1e-12


@dataclass
class GbmParams:
    """Boosting hyperparameters. Defaults are engine defaults, not tuned values."""

    n_trees: int = 300
    max_depth: int = 2
    shrinkage: float = 0.05
    bag_fraction: float = 0.75
    min_samples_leaf: int = 10

    def validate(self) -> "GbmParams":
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must be >= 0, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.shrinkage <= 1:
            raise ConfigError(f"shrinkage must be in (0, 1], got {self.shrinkage}")
        if not 0 < self.bag_fraction <= 1:
            raise ConfigError(f"bag_fraction must be in (0, 1], got {self.bag_fraction}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        return self


@dataclass
class GbmFit:
    """A fitted boosted-tree ensemble on the link scale."""

    trees: list[dict]
    initial_value: float
    shrinkage: float
    loss: str
    features: list[str]
    levels: dict[str, list[str]]
    params: GbmParams
    train_deviance: list[float] = field(default_factory=list)
    dispersion: float | None = None

    def link_prediction(self, frame: pd.DataFrame) -> np.ndarray:
        cols = _encode_columns(frame, self.features, self.levels, warn_unseen=True)
        out = np.full(len(frame), self.initial_value, dtype=float)
        for tree in self.trees:
            out += self.shrinkage * _predict_tree(tree, cols, len(frame))
        return out

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        """Response-scale predictions: probability (bernoulli) or mean (gamma)."""
        return get_family(self.loss).inv_link(self.link_prediction(frame))

    def to_dict(self) -> dict:
        return {
            "trees": self.trees,
            "initial_value": self.initial_value,
            "shrinkage": self.shrinkage,
            "loss": self.loss,
            "features": self.features,
            "levels": self.levels,
            "params": self.params.__dict__,
            "train_deviance": self.train_deviance,
            "dispersion": self.dispersion,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GbmFit":
        payload = dict(payload)
        payload["params"] = GbmParams(**payload["params"])
        return cls(**payload)


def _encode_columns(frame, features, levels, warn_unseen=False):
    """Columns as ('num', float array) or ('cat', code array); unseen levels map to code 0."""
    cols = []
    for name in features:
        if name not in frame.columns:
            raise PredictionError(f"covariate column {name!r} required by the ensemble is missing")
        series = frame[name]
        if name in levels:
            cats = pd.Categorical(series.astype(str), categories=levels[name])
            codes = cats.codes.astype(np.int64)
            if warn_unseen and (codes < 0).any():
                unseen = sorted(set(series.astype(str)[codes < 0]))
                logger.warning("feature %r: unseen level(s) %s mapped to %r",
                               name, unseen, levels[name][0])
            cols.append(("cat", np.where(codes < 0, 0, codes)))
        else:
            arr = pd.to_numeric(series, errors="coerce").to_numpy(dtype=float)
            if np.isnan(arr).any():
                raise PredictionError(f"numeric feature {name!r} has missing values")
            cols.append(("num", arr))
    return cols


def _predict_tree(node, cols, n):
    out = np.empty(n, dtype=float)
    idx = np.arange(n)
    _fill_tree(node, cols, idx, out)
    return out


def _fill_tree(node, cols, idx, out):
    if node["kind"] == "leaf":
        out[idx] = node["value"]
        return
    kind, values = cols[node["feature"]]
    vals = values[idx]
    if kind == "num":
        left = vals <= node["threshold"]
    else:
        left = np.isin(vals, node["left_levels"])
    _fill_tree(node["left"], cols, idx[left], out)
    _fill_tree(node["right"], cols, idx[~left], out)


def _best_split(cols, idx, r, w, min_leaf):
    """Weighted least-squares gain scan; first feature / lowest split wins ties."""
    rw = r[idx] * w[idx]
    sw = w[idx]
    total_rw, total_w = rw.sum(), sw.sum()
    if total_w <= 0 or len(idx) < 2 * min_leaf:
        return None
    parent = total_rw**2 / total_w
    best = None
    best_gain = _MIN_GAIN
    for f, (kind, values) in enumerate(cols):
        vals = values[idx]
        if kind == "num":
            order = np.argsort(vals, kind="mergesort")
            v_sorted = vals[order]
            crw = np.cumsum(rw[order])
            cw = np.cumsum(sw[order])
            # candidate cut after position k (1-based count on the left)
            ks = np.arange(min_leaf, len(idx) - min_leaf + 1)
            if len(ks) == 0:
                continue
            distinct = v_sorted[ks - 1] < v_sorted[np.minimum(ks, len(idx) - 1)]
            ks = ks[distinct]
            if len(ks) == 0:
                continue
            lw, lrw = cw[ks - 1], crw[ks - 1]
            valid = (lw > 0) & (total_w - lw > 0)
            gains = np.where(
                valid, lrw**2 / np.where(lw > 0, lw, 1.0)
                + (total_rw - lrw) ** 2 / np.where(total_w - lw > 0, total_w - lw, 1.0) - parent,
                -np.inf)
            k_best = int(np.argmax(gains))
            if gains[k_best] > best_gain:
                best_gain = float(gains[k_best])
                threshold = float((v_sorted[ks[k_best] - 1] + v_sorted[ks[k_best]]) / 2.0)
                best = {"kind": "split", "feature": f, "type": "numeric",
                        "threshold": threshold, "gain": best_gain}
        else:
            present = np.unique(vals)
            if len(present) < 2:
                continue
            g_w = np.zeros(len(present))
            g_rw = np.zeros(len(present))
            g_n = np.zeros(len(present), dtype=np.int64)
            pos = np.searchsorted(present, vals)
            np.add.at(g_w, pos, sw)
            np.add.at(g_rw, pos, rw)
            np.add.at(g_n, pos, 1)
            order = np.argsort(g_rw / np.where(g_w > 0, g_w, 1.0), kind="mergesort")
            cw = np.cumsum(g_w[order])
            crw = np.cumsum(g_rw[order])
            cn = np.cumsum(g_n[order])
            for k in range(len(present) - 1):
                if cn[k] < min_leaf or len(idx) - cn[k] < min_leaf:
                    continue
                if cw[k] <= 0 or total_w - cw[k] <= 0:
                    continue
                gain = crw[k] ** 2 / cw[k] + (total_rw - crw[k]) ** 2 / (total_w - cw[k]) - parent
                if gain > best_gain:
                    best_gain = float(gain)
                    best = {"kind": "split", "feature": f, "type": "categorical",
                            "left_levels": [int(c) for c in present[order[:k + 1]]],
                            "gain": best_gain}
    return best


def _grow_tree(cols, idx, r, w, depth, params, leaf_value):
    if depth >= params.max_depth:
        return {"kind": "leaf", "value": leaf_value(idx)}
    split = _best_split(cols, idx, r, w, params.min_samples_leaf)
    if split is None:
        return {"kind": "leaf", "value": leaf_value(idx)}
    kind, values = cols[split["feature"]]
    vals = values[idx]
    if split["type"] == "numeric":
        left = vals <= split["threshold"]
    else:
        left = np.isin(vals, split["left_levels"])
    split["left"] = _grow_tree(cols, idx[left], r, w, depth + 1, params, leaf_value)
    split["right"] = _grow_tree(cols, idx[~left], r, w, depth + 1, params, leaf_value)
    return split


def fit_gbm(design: pd.DataFrame, responses, loss: str, weights=None,
            params: GbmParams | None = None, seed: int = 0,
            features=None) -> GbmFit:
    """Fit a boosted-tree layer on a covariate frame.

    `design` holds raw covariate columns (numeric or categorical); `features`
    restricts to a subset (defaults to every column).  Deterministic given
    `seed`, which drives the per-tree subsampling only.
    """
    if loss not in ("bernoulli", "gamma"):
        raise ConfigError(f"unsupported loss {loss!r}")
    params = (params or GbmParams()).validate()
    family = get_family(loss)
    y = family.validate_response(np.asarray(responses, dtype=float))
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if len(design) != n:
        raise ConfigError("design and responses have mismatched lengths")

    features = list(features) if features is not None else list(design.columns)
    levels: dict[str, list[str]] = {}
    for name in features:
        if not pd.api.types.is_numeric_dtype(design[name]):
            levels[name] = sorted(pd.unique(design[name].astype(str)))
    cols = _encode_columns(design, features, levels)

    if loss == "bernoulli":
        pbar = float(np.clip(w @ y / w.sum(), 1e-12, 1 - 1e-12))
        f0 = float(np.log(pbar / (1 - pbar)))
    else:
        f0 = float(np.log(w @ y / w.sum()))

    F = np.full(n, f0)
    rng = np.random.default_rng(seed)
    trees: list[dict] = []
    deviance_path: list[float] = []
    n_bag = max(1, int(np.floor(params.bag_fraction * n)))

    for _ in range(params.n_trees):
        mu = family.inv_link(F)
        if loss == "bernoulli":
            r = y - mu

            def leaf_value(idx, mu=mu):
                denom = float(np.sum(w[idx] * np.clip(mu[idx] * (1 - mu[idx]), 1e-10, None)))
                return float(np.sum(w[idx] * r[idx]) / denom)
        else:
            r = y / mu - 1.0

            def leaf_value(idx, F=F):
                num = float(np.sum(w[idx] * y[idx] * np.exp(-F[idx])))
                den = float(np.sum(w[idx]))
                return float(np.log(max(num / den, 1e-300)))

        bag = rng.choice(n, size=n_bag, replace=False) if n_bag < n else np.arange(n)
        tree = _grow_tree(cols, np.sort(bag), r, w, 0, params, leaf_value)
        trees.append(tree)
        F = F + params.shrinkage * _predict_tree(tree, cols, n)
        deviance_path.append(family.deviance(y, family.inv_link(F), w))

    dispersion = None
    if loss == "gamma":
        wn = w / w.mean()
        dispersion = Gamma.pearson_dispersion(y, family.inv_link(F), wn, dof=n)
    return GbmFit(trees=trees, initial_value=f0, shrinkage=params.shrinkage, loss=loss,
                  features=features, levels=levels, params=params,
                  train_deviance=deviance_path, dispersion=dispersion)


def _collect_gains(node, gains):
    if node["kind"] == "leaf":
        return
    gains[node["feature"]] += node["gain"]
    _collect_gains(node["left"], gains)
    _collect_gains(node["right"], gains)


def gbm_importance(fit: GbmFit) -> dict[str, float]:
    """Per-feature split-gain totals rescaled to sum to 100."""
    if not fit.trees:
        raise EstimabilityError("importance is undefined for an empty ensemble")
    gains = np.zeros(len(fit.features))
    for tree in fit.trees:
        _collect_gains(tree, gains)
    total = gains.sum()
    if total <= 0:
        return {name: 0.0 for name in fit.features}
    return {name: float(100.0 * g / total) for name, g in zip(fit.features, gains)}
