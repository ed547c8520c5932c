"""Design-matrix construction for the GLM engine.

Covariate tokens come in three forms:

* ``"age"`` -- used as-is; numeric dtypes pass through, everything else is
  dummy-encoded against a reference level fixed at fit time;
* ``"factor(dev_year)"`` -- force categorical treatment of a numeric column;
* ``"a*b"`` -- interaction of two categorical (or factor(...)) terms,
  encoded as one crossed factor.

Unseen categorical levels at prediction time fall back to the reference
level; a warning is logged.
"""

from __future__ import annotations

import logging
import re

import numpy as np
import pandas as pd

from .errors import PredictionError

logger = logging.getLogger(__name__)

_FACTOR_RE = re.compile(r"^factor\((?P<col>[^)]+)\)$")


def _parse_token(token: str) -> tuple[list[str], bool]:
    """Return (column names, force_categorical) for one covariate token."""
    token = token.strip()
    parts = [p.strip() for p in token.split("*")]
    cols = []
    for part in parts:
        m = _FACTOR_RE.match(part)
        cols.append(m.group("col").strip() if m else part)
    return cols, len(parts) > 1 or any(_FACTOR_RE.match(p) for p in parts)


class DesignBuilder:
    """Maps covariate frames to a fixed-layout numeric design matrix."""

    def __init__(self, covariates, intercept: bool = True):
        self.covariates = list(covariates)
        self.intercept = intercept
        self._terms: list[dict] | None = None

    @property
    def fitted(self) -> bool:
        return self._terms is not None

    def required_columns(self) -> list[str]:
        seen: list[str] = []
        for token in self.covariates:
            for col in _parse_token(token)[0]:
                if col not in seen:
                    seen.append(col)
        return seen

    def _raw_values(self, token: str, frame: pd.DataFrame) -> tuple[pd.Series, bool]:
        cols, force_cat = _parse_token(token)
        for col in cols:
            if col not in frame.columns:
                raise PredictionError(f"covariate column {col!r} required by term {token!r} is missing")
        if len(cols) == 1:
            series = frame[cols[0]]
            categorical = force_cat or not pd.api.types.is_numeric_dtype(series)
            if categorical:
                series = series.astype(str)
            return series, categorical
        combined = frame[cols[0]].astype(str)
        for col in cols[1:]:
            combined = combined + "|" + frame[col].astype(str)
        return combined, True

    def fit(self, frame: pd.DataFrame) -> "DesignBuilder":
        terms = []
        for token in self.covariates:
            values, categorical = self._raw_values(token, frame)
            if categorical:
                levels = sorted(pd.unique(values.to_numpy(dtype=object)))
                terms.append({"token": token, "kind": "categorical", "levels": levels})
            else:
                terms.append({"token": token, "kind": "numeric"})
        self._terms = terms
        return self

    def transform(self, frame: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
        """Return (X, column_names) for the rows of `frame`."""
        if self._terms is None:
            raise PredictionError("design builder used before fit")
        n = len(frame)
        columns: list[np.ndarray] = []
        names: list[str] = []
        if self.intercept:
            columns.append(np.ones(n))
            names.append("Intercept")
        for term in self._terms:
            token = term["token"]
            values, _ = self._raw_values(token, frame)
            if term["kind"] == "numeric":
                arr = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
                if np.isnan(arr).any():
                    raise PredictionError(
                        f"numeric covariate {token!r} has missing values; bin or impute first")
                columns.append(arr)
                names.append(token)
                continue
            levels = term["levels"]
            codes = pd.Categorical(values, categories=levels).codes
            if (codes < 0).any():
                unseen = sorted(set(values[codes < 0]))
                logger.warning("term %r: unseen level(s) %s mapped to reference %r",
                               token, unseen, levels[0])
                codes = np.where(codes < 0, 0, codes)
            for k, level in enumerate(levels[1:], start=1):
                columns.append((codes == k).astype(float))
                names.append(f"{token}[{level}]")
        X = np.column_stack(columns) if columns else np.empty((n, 0))
        return X, names

    def fit_transform(self, frame: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
        return self.fit(frame).transform(frame)

    def to_dict(self) -> dict:
        return {
            "covariates": self.covariates,
            "intercept": self.intercept,
            "terms": self._terms,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DesignBuilder":
        builder = cls(payload["covariates"], payload["intercept"])
        builder._terms = payload["terms"]
        return builder
