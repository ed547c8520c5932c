"""Shared fixtures and stub engines for the test suite."""

import numpy as np
import pandas as pd
import pytest

from hreserve.data import ObservationWindow, Portfolio
from hreserve.generator import CovariateSpec, GeneratorConfig, LayerTruth, generate
from hreserve.hrm import HierarchicalModel, LayerModel, LayerSpec
from hreserve.weights import WeightVector


class ConstantEngine:
    """Stub engine returning a fixed parameter for every row."""

    def __init__(self, value, dispersion=None):
        self.value = float(value)
        self.dispersion = dispersion

    def predict(self, frame):
        return np.full(len(frame), self.value)


def constant_layer(spec: LayerSpec, value, dispersion=None) -> LayerModel:
    return LayerModel(spec, ConstantEngine(value, dispersion))


def toy_model(d: int, p: float, q: float, mu: float, theta: float | None = 0.25
              ) -> HierarchicalModel:
    """Three-layer model with constant parameters, for enumeration oracles."""
    layers = [
        constant_layer(LayerSpec("close", "close", "bernoulli", "glm", [],
                                 filter=f"dev_year < {d}", default_value=1.0), p),
        constant_layer(LayerSpec("payment", "payment", "bernoulli", "glm", []), q),
        constant_layer(LayerSpec("size", "size", "gamma", "glm", [],
                                 filter="payment == 1", default_value=0.0), mu, theta),
    ]
    return HierarchicalModel(layers, d, 1, WeightVector.ones(d))


def one_open_claim_portfolio(d: int, observed_payment: float = 40.0) -> Portfolio:
    """A single claim, reported in year 1, observed for one year, still open."""
    window = ObservationWindow(1, 1, d)
    claims = pd.DataFrame({"claim_id": ["C1"], "reporting_year": [1]})
    records = pd.DataFrame({
        "claim_id": ["C1"], "reporting_year": [1], "dev_year": [1],
        "close": [0], "payment": [1 if observed_payment > 0 else 0],
        "size": [observed_payment],
    })
    return Portfolio(window, claims, records)


@pytest.fixture(scope="session")
def medium_config() -> GeneratorConfig:
    return GeneratorConfig(
        window=ObservationWindow(1, 4),
        claim_counts=[250, 250, 250, 250],
        settlement=LayerTruth(base=[0.35, 0.45, 0.55, 1.0],
                              effects={"weather": {"storm": 0.8}}),
        payment=LayerTruth(base=[0.8, 0.6, 0.5, 0.4]),
        size=LayerTruth(base=[100.0, 130.0, 150.0, 90.0],
                        effects={"weather": {"storm": 0.6}}),
        dispersion=0.5,
        payment_close_shift=0.2,
        covariates={"weather": CovariateSpec(levels={"normal": 0.9, "storm": 0.1})},
        seed=11,
    )


@pytest.fixture(scope="session")
def medium_portfolio(medium_config) -> Portfolio:
    return generate(medium_config)


@pytest.fixture(scope="session")
def multiplicative_config() -> GeneratorConfig:
    return GeneratorConfig(
        window=ObservationWindow(1, 5),
        claim_counts=[400, 500, 450, 550, 400],
        settlement=LayerTruth(base=[0.25, 0.35, 0.45, 0.55, 1.0]),
        payment=LayerTruth(base=[0.85, 0.65, 0.5, 0.35, 0.3]),
        size=LayerTruth(base=[120.0, 150.0, 170.0, 110.0, 80.0]),
        dispersion=0.6,
        inflation=[1.0, 1.05, 1.1, 1.15, 1.2],
        multiplicative_only=True,
        seed=7,
    )


@pytest.fixture(scope="session")
def multiplicative_portfolio(multiplicative_config) -> Portfolio:
    return generate(multiplicative_config)
