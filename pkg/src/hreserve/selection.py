"""Greedy forward covariate selection scored by hold-out weighted likelihood."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, FitError
from .hrm import LayerSpec, fit_layer
from .weights import WeightVector, assign_folds, weighted_loglik


@dataclass
class SelectionResult:
    selected: list[str]
    importance: dict[str, float]
    baseline_score: float
    final_score: float
    history: list[dict] = field(default_factory=list)


def _cv_score(frame: pd.DataFrame, folds: np.ndarray, response: str, covariates,
              family: str, weights: WeightVector, engine: str, engine_config,
              seed: int) -> float:
    """Sum of hold-out weighted log-likelihoods over the folds.

    A fold where the fit fails (separation, degenerate response) scores -inf,
    which removes the candidate from contention.
    """
    spec = LayerSpec(name="_selection", response=response, family=family,
                     engine=engine, covariates=list(covariates))
    total = 0.0
    for fold in np.unique(folds):
        train = frame.loc[folds != fold]
        held_out = frame.loc[folds == fold]
        try:
            model = fit_layer(train, spec, weights, engine_config, seed=seed)
        except FitError:
            return float("-inf")
        total += weighted_loglik(model, held_out, weights)
    return total


def forward_select(frame: pd.DataFrame, response: str, candidate_covariates,
                   family: str, weights: WeightVector, K: int = 5, seed: int = 0,
                   base_covariates=(), engine: str = "glm",
                   engine_config: dict | None = None) -> SelectionResult:
    """Iteratively add the candidate with the largest hold-out likelihood gain.

    Folds are assigned once, at the (claim, development year) observation
    level, by a uniform seeded permutation.  Selection stops when no remaining
    candidate strictly improves the hold-out weighted likelihood; an empty
    selection is a valid result.  Importance is each covariate's gain at the
    step it entered, rescaled to sum to 100.
    """
    candidates = list(candidate_covariates)
    if not candidates:
        raise ConfigError("forward selection needs at least one candidate covariate")
    folds = assign_folds(len(frame), K, seed)

    current = list(base_covariates)
    score = _cv_score(frame, folds, response, current, family, weights, engine,
                      engine_config, seed)
    baseline = score
    selected: list[str] = []
    gains: list[float] = []
    history: list[dict] = []
    remaining = [c for c in candidates if c not in current]
    while remaining:
        step_scores = {c: _cv_score(frame, folds, response, current + [c], family,
                                    weights, engine, engine_config, seed)
                       for c in remaining}
        best = max(step_scores, key=step_scores.get)
        history.append({"scores": step_scores, "current": list(current)})
        if not step_scores[best] > score:
            break
        gains.append(step_scores[best] - score)
        score = step_scores[best]
        selected.append(best)
        current.append(best)
        remaining.remove(best)

    total_gain = sum(gains)
    importance = ({c: float(100.0 * g / total_gain) for c, g in zip(selected, gains)}
                  if total_gain > 0 else {})
    return SelectionResult(selected=selected, importance=importance,
                           baseline_score=baseline, final_score=score, history=history)
