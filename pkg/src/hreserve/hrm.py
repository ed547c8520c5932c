"""Layered reserving model: ordered conditional models for the yearly update vector.

Each layer models one component of a claim-year's update (settlement flag,
payment flag, payment size).  Layers are fitted in order; the realized
outcomes of lower-indexed layers are legal covariates for higher ones, and
the joint weighted log-likelihood is the sum of the per-layer weighted
log-likelihoods.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import pandas as pd

from . import glm as _glm
from . import gbm as _gbm
from .data import Portfolio
from .design import DesignBuilder, _parse_token
from .errors import ConfigError, FitError, StateError
from .families import get_family
from .weights import WeightVector, development_year_weights, weighted_loglik

BASE_DEVELOPMENT_COLUMNS = ("dev_year", "calendar_year", "size_last_year", "total_amount_paid")


@dataclass
class LayerSpec:
    """Declaration of one layer: response, family, engine, covariates and filter.

    `filter` is a pandas expression over the modelling frame selecting the
    rows where the response is stochastic; outside the filter the layer takes
    `default_value` deterministically (e.g. size 0 in years without payment,
    forced settlement at the maximum delay).
    """

    name: str
    response: str
    family: str
    engine: str
    covariates: list[str] = field(default_factory=list)
    filter: str | None = None
    default_value: float = 0.0

    def __post_init__(self):
        if self.engine not in ("glm", "gbm"):
            raise ConfigError(f"layer {self.name!r}: unknown engine {self.engine!r}")
        get_family(self.family)

    def mask(self, frame: pd.DataFrame) -> np.ndarray:
        if self.filter is None:
            return np.ones(len(frame), dtype=bool)
        out = frame.eval(self.filter)
        return np.asarray(out, dtype=bool)


def validate_layer_specs(specs: Sequence[LayerSpec], static_columns: Sequence[str]) -> None:
    """Covariates may reference static fields, development history, or lower layers."""
    allowed = set(static_columns) | set(BASE_DEVELOPMENT_COLUMNS) | {"reporting_year"}
    names = set()
    for spec in specs:
        if spec.name in names:
            raise ConfigError(f"duplicate layer name {spec.name!r}")
        names.add(spec.name)
        for token in spec.covariates:
            for col in _parse_token(token)[0]:
                if col not in allowed:
                    raise ConfigError(
                        f"layer {spec.name!r}: covariate {col!r} is not a static field, "
                        "a development covariate, or a lower-indexed layer outcome")
        allowed.add(spec.response)


def a3_layers(d: int,
              close_covariates: Sequence[str] = ("factor(dev_year)",),
              payment_covariates: Sequence[str] = ("factor(dev_year)", "close"),
              size_covariates: Sequence[str] = ("factor(dev_year)",),
              engine: str = "glm") -> list[LayerSpec]:
    """The standard three-layer close/payment/size structure.

    Settlement at age d is forced rather than modelled, so the close layer is
    trained on dev_year < d only and defaults to 1 outside that filter.
    """
    return [
        LayerSpec("close", "close", "bernoulli", engine, list(close_covariates),
                  filter=f"dev_year < {d}", default_value=1.0),
        LayerSpec("payment", "payment", "bernoulli", engine, list(payment_covariates)),
        LayerSpec("size", "size", "gamma", engine, list(size_covariates),
                  filter="payment == 1", default_value=0.0),
    ]


class LayerModel:
    """A fitted layer: spec plus engine fit, scoring covariate frames directly."""

    def __init__(self, spec: LayerSpec, engine_fit, builder: DesignBuilder | None = None):
        self.spec = spec
        self.engine_fit = engine_fit
        self.builder = builder
        self.family = get_family(spec.family)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def response(self) -> str:
        return self.spec.response

    @property
    def dispersion(self):
        return getattr(self.engine_fit, "dispersion", None)

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        """Response-scale prediction (probability or mean) per row."""
        if self.builder is not None:
            X, names = self.builder.transform(frame)
            return self.engine_fit.predict(X, columns=names)
        return np.asarray(self.engine_fit.predict(frame), dtype=float)

    def weighted_loglik(self, frame: pd.DataFrame, weights: WeightVector) -> float:
        return weighted_loglik(self, frame.loc[self.spec.mask(frame)], weights)

    def to_dict(self) -> dict:
        payload = {"spec": asdict(self.spec), "engine": self.spec.engine,
                   "fit": self.engine_fit.to_dict()}
        if self.builder is not None:
            payload["builder"] = self.builder.to_dict()
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "LayerModel":
        spec = LayerSpec(**payload["spec"])
        if payload["engine"] == "glm":
            fit = _glm.GlmFit.from_dict(payload["fit"])
        else:
            fit = _gbm.GbmFit.from_dict(payload["fit"])
        builder = DesignBuilder.from_dict(payload["builder"]) if "builder" in payload else None
        return cls(spec, fit, builder)


MODEL_FORMAT_VERSION = 1


class HierarchicalModel:
    """Ordered fitted layers over an observation window."""

    def __init__(self, layers: Sequence[LayerModel], d: int, first_modeled_year: int = 1,
                 weights: WeightVector | None = None):
        self.layers = list(layers)
        self.d = d
        self.first_modeled_year = first_modeled_year
        self.weights = weights

    def layer(self, name: str) -> LayerModel:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def weighted_loglik(self, frame: pd.DataFrame, weights: WeightVector | None = None) -> float:
        """Joint weighted log-likelihood: the sum over layers by construction."""
        weights = weights or self.weights
        if weights is None:
            raise StateError("no weights stored on the model; pass them explicitly")
        return sum(layer.weighted_loglik(frame, weights) for layer in self.layers)

    def save(self, path) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "d": self.d,
            "first_modeled_year": self.first_modeled_year,
            "weights": {str(j): wj for j, wj in self.weights.items()} if self.weights else None,
            "layers": [layer.to_dict() for layer in self.layers],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)

    @classmethod
    def load(cls, path) -> "HierarchicalModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {version!r}")
        weights = None
        if payload.get("weights"):
            weights = WeightVector({int(j): wj for j, wj in payload["weights"].items()})
        layers = [LayerModel.from_dict(entry) for entry in payload["layers"]]
        return cls(layers, payload["d"], payload["first_modeled_year"], weights)


def _augment_first_year_static(frame: pd.DataFrame, portfolio: Portfolio) -> pd.DataFrame:
    """Copy year-1 outcomes onto every row as static covariates (mode 2)."""
    year1 = portfolio.records.loc[portfolio.records["dev_year"] == 1,
                                  ["claim_id", "close", "payment", "size"]]
    year1 = year1.rename(columns={"close": "close_year1", "payment": "payment_year1",
                                  "size": "size_year1"})
    out = frame.merge(year1, on="claim_id", how="left")
    for col in ("close_year1", "payment_year1", "size_year1"):
        out[col] = out[col].fillna(0.0)
    return out


def default_weights(portfolio: Portfolio, first_modeled_year: int = 1) -> WeightVector:
    """Covariate-shift weights for a portfolio, restricted to reachable dev years.

    The ratio formula runs over the tau reporting years of the window; only
    development years up to min(d, tau) carry observations.
    """
    tau = portfolio.window.tau
    full = development_year_weights(portfolio.reported_counts, tau, first_modeled_year)
    top = min(portfolio.window.d, tau)
    return WeightVector({j: full[j] for j in range(first_modeled_year, top + 1)})


def fit_layer(frame: pd.DataFrame, spec: LayerSpec, weights: WeightVector,
              engine_config: dict | None = None, seed: int = 0) -> LayerModel:
    """Fit one layer on the rows of `frame` passing its filter."""
    mask = spec.mask(frame)
    rows = frame.loc[mask]
    if len(rows) == 0:
        raise FitError(f"layer {spec.name!r}: no training rows pass filter {spec.filter!r}")
    y = rows[spec.response].to_numpy(dtype=float)
    w = weights.for_dev_years(rows["dev_year"].to_numpy())
    config = engine_config or {}
    if spec.engine == "glm":
        builder = DesignBuilder(spec.covariates).fit(rows)
        X, names = builder.transform(rows)
        if spec.family == "bernoulli":
            fit = _glm.fit_logistic(X, y, w, columns=names, **config)
        else:
            fit = _glm.fit_gamma(X, y, w, columns=names, **config)
        return LayerModel(spec, fit, builder)
    params = _gbm.GbmParams(**config) if config else _gbm.GbmParams()
    plain = []
    for tok in spec.covariates:
        cols, _ = _parse_token(tok)
        if len(cols) > 1:
            raise ConfigError(f"layer {spec.name!r}: interaction terms are a GLM feature; "
                              "trees model interactions on their own")
        plain.append(cols[0])
    fit = _gbm.fit_gbm(rows, y, loss=spec.family, weights=w, params=params, seed=seed,
                       features=plain)
    return LayerModel(spec, fit, None)


def fit_hrm(portfolio: Portfolio, layer_specs: Sequence[LayerSpec],
            weights: WeightVector | None = None, engine_configs: dict | None = None,
            seed: int = 0, first_modeled_year: int = 1) -> HierarchicalModel:
    """Fit the ordered layers on a portfolio's observed records.

    With `first_modeled_year=2` the first development year is treated as part
    of the static claim information: year-1 outcomes become static covariates
    and only records with dev_year >= 2 are modelled.
    """
    if first_modeled_year not in (1, 2):
        raise ConfigError(f"first_modeled_year must be 1 or 2, got {first_modeled_year}")
    frame = portfolio.training_frame()
    static_columns = list(portfolio.covariate_columns)
    if first_modeled_year == 2:
        frame = _augment_first_year_static(frame, portfolio)
        frame = frame.loc[frame["dev_year"] >= 2]
        static_columns += ["close_year1", "payment_year1", "size_year1"]
        if len(frame) == 0:
            raise FitError("no records with dev_year >= 2 to fit on")
    validate_layer_specs(layer_specs, static_columns)
    if weights is None:
        weights = default_weights(portfolio, first_modeled_year)
    engine_configs = engine_configs or {}
    layers = []
    for k, spec in enumerate(layer_specs):
        config = engine_configs.get(spec.name)
        layers.append(fit_layer(frame, spec, weights, config, seed=seed + k))
    return HierarchicalModel(layers, portfolio.window.d, first_modeled_year, weights)
