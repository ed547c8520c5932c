"""Development-year covariate-shift weights, fold assignment and weighted log-likelihood.

Training data is dominated by early development years while predictions
concern the late ones; weighting each observation by the ratio of future to
observed record counts for its development year corrects the imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import ConfigError, EstimabilityError, EvaluationError


@dataclass(frozen=True)
class WeightVector:
    """Per-development-year observation weights.

    Keys run from the first modelled development year to d.  For young
    portfolios (all n_i > 0) the formula-evaluated weights, j >= 2, increase
    strictly in j; the defined constant w_1 = 1 sits outside that guarantee.
    """

    w: Mapping[int, float]

    def __post_init__(self):
        for j, wj in self.w.items():
            if not np.isfinite(wj) or wj < 0:
                raise ConfigError(f"weight for dev_year {j} must be finite and >= 0, got {wj}")

    def __getitem__(self, j: int) -> float:
        return self.w[j]

    def __contains__(self, j: int) -> bool:
        return j in self.w

    def items(self):
        return self.w.items()

    def for_dev_years(self, dev_years) -> np.ndarray:
        """Vectorized lookup; raises if any dev_year has no weight."""
        js = np.asarray(dev_years, dtype=np.int64)
        out = np.empty(js.shape, dtype=float)
        table = self.w
        uncovered = set(np.unique(js)) - set(table)
        if uncovered:
            raise EvaluationError(f"no weight defined for dev_year(s) {sorted(uncovered)}")
        for j in np.unique(js):
            out[js == j] = table[int(j)]
        return out

    @classmethod
    def ones(cls, d: int, first_modeled_year: int = 1) -> "WeightVector":
        return cls({j: 1.0 for j in range(first_modeled_year, d + 1)})


def development_year_weights(reported_counts, d: int | None = None,
                             first_modeled_year: int = 1) -> WeightVector:
    """Covariate-shift weights w_j from the reported-claim counts n_1..n_d.

    w_j is the ratio of the number of development-year-j records in the
    prediction set (claims too young to have reached age j) to the number in
    the training set:

        w_j = sum(n_i, i = d-j+2 .. d) / sum(n_i, i = 1 .. d-j+1)

    The numerator range is empty for j = 1; that weight is defined as 1 so
    first-year observations contribute unweighted.
    """
    n = np.asarray(reported_counts, dtype=float)
    if d is None:
        d = len(n)
    if len(n) != d:
        raise ConfigError(f"expected {d} reported counts, got {len(n)}")
    if (n < 0).any():
        raise ConfigError("reported counts must be nonnegative")
    w: dict[int, float] = {}
    for j in range(first_modeled_year, d + 1):
        numerator = n[d - j + 1:].sum()   # reporting years d-j+2 .. d
        denominator = n[:d - j + 1].sum()  # reporting years 1 .. d-j+1
        if j == 1:
            w[j] = 1.0
            continue
        if denominator <= 0:
            raise EstimabilityError(
                f"degenerate exposure: no training records for dev_year {j} "
                f"(reporting years 1..{d - j + 1} are empty)")
        w[j] = float(numerator / denominator)
    return WeightVector(w)


def assign_folds(records, K: int, seed: int, stratify=None) -> np.ndarray:
    """Assign each observation a fold label in 1..K, balanced to within one.

    `records` may be a DataFrame (one observation per row) or an integer
    count.  Optionally stratify by a grouping series of the same length;
    by default folds are a uniform random partition of all observations.
    """
    n = records if isinstance(records, (int, np.integer)) else len(records)
    if K < 2:
        raise ConfigError(f"need at least 2 folds, got K={K}")
    if K > n:
        raise ConfigError(f"K={K} exceeds the {n} available observations")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    if stratify is None:
        perm = rng.permutation(n)
        labels[perm] = np.arange(n) % K + 1
        return labels
    groups = pd.Series(np.asarray(stratify)).groupby(pd.Series(np.asarray(stratify))).groups
    offset = 0
    for _, idx in groups.items():
        idx = np.asarray(idx)
        perm = rng.permutation(len(idx))
        labels[idx[perm]] = (np.arange(len(idx)) + offset) % K + 1
        offset += len(idx)
    return labels


def weighted_loglik(layer_fit, observations: pd.DataFrame, weights: WeightVector) -> float:
    """Sum of w_j * log f(response | covariates) over the observation rows.

    `layer_fit` is any fitted layer exposing `response`, `family`,
    `dispersion` and `predict(frame)`; see `hreserve.hrm.LayerModel`.
    """
    if len(observations) == 0:
        return 0.0
    mu = np.asarray(layer_fit.predict(observations), dtype=float)
    family = layer_fit.family
    if family.name == "gamma" and (mu <= 0).any():
        raise EvaluationError("gamma layer predicted a nonpositive mean")
    y = observations[layer_fit.response].to_numpy(dtype=float)
    w = weights.for_dev_years(observations["dev_year"].to_numpy())
    ll = family.logpdf(y, mu, getattr(layer_fit, "dispersion", None))
    return float(np.sum(w * ll))
