"""Synthetic portfolio generation from a fully specified ground-truth model.

The generator draws each claim's development year by year through the
close/payment/size layers, with per-development-year base rates and optional
covariate effects entering on the link scale (logit for the indicators, log
for the sizes).  Settlement is forced at the maximum delay and development
past the observation boundary is censored away, so the output reproduces the
usual triangular observation pattern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from .data import ColumnSpec, ObservationWindow, Portfolio, SchemaConfig
from .errors import ConfigError


@dataclass
class CovariateSpec:
    """Static covariate distribution: categorical level frequencies or a numeric range."""

    levels: dict[str, float] | None = None
    numeric_range: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.levels is None) == (self.numeric_range is None):
            raise ConfigError("covariate spec needs exactly one of levels / numeric_range")
        if self.levels is not None:
            total = sum(self.levels.values())
            if not np.isclose(total, 1.0):
                raise ConfigError(f"level frequencies must sum to 1, got {total}")


@dataclass
class LayerTruth:
    """Per-development-year base parameter plus covariate effects on the link scale.

    For the indicator layers `base` holds probabilities; for the size layer it
    holds means.  `effects` maps covariate name to either {level: offset} for
    categoricals or a slope for numerics.
    """

    base: list[float]
    effects: dict[str, dict[str, float] | float] = field(default_factory=dict)


@dataclass
class GeneratorConfig:
    window: ObservationWindow
    claim_counts: list[int]
    settlement: LayerTruth
    payment: LayerTruth
    size: LayerTruth
    dispersion: float
    payment_close_shift: float = 0.0
    inflation: list[float] | None = None
    covariates: dict[str, CovariateSpec] = field(default_factory=dict)
    multiplicative_only: bool = False
    seed: int = 0

    def __post_init__(self):
        tau, d = self.window.tau, self.window.d
        if len(self.claim_counts) != tau:
            raise ConfigError(f"claim_counts must have length tau={tau}")
        if any(c < 0 for c in self.claim_counts):
            raise ConfigError("claim counts must be nonnegative")
        for name, truth in (("settlement", self.settlement), ("payment", self.payment)):
            if len(truth.base) != d:
                raise ConfigError(f"{name}.base must have length d={d}")
            if any(not 0 <= p <= 1 for p in truth.base):
                raise ConfigError(f"{name} probabilities must lie in [0, 1]")
        if len(self.size.base) != d:
            raise ConfigError(f"size.base must have length d={d}")
        if any(m <= 0 for m in self.size.base):
            raise ConfigError("size means must be positive")
        if self.dispersion <= 0:
            raise ConfigError(f"dispersion must be positive, got {self.dispersion}")
        if self.inflation is not None:
            if len(self.inflation) != tau:
                raise ConfigError(f"inflation must have length tau={tau}")
            if any(g <= 0 for g in self.inflation):
                raise ConfigError("inflation factors must be positive")
        if self.multiplicative_only:
            if self.settlement.effects or self.payment.effects or self.size.effects:
                raise ConfigError("multiplicative-only mode forbids covariate effects")
            if self.payment_close_shift != 0.0:
                raise ConfigError("multiplicative-only mode forbids the close shift")

    # -- json ------------------------------------------------------------

    @classmethod
    def from_json(cls, path) -> "GeneratorConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        w = raw["window"]
        covs = {}
        for name, spec in raw.get("covariates", {}).items():
            if "levels" in spec:
                covs[name] = CovariateSpec(levels=spec["levels"])
            else:
                covs[name] = CovariateSpec(numeric_range=tuple(spec["range"]))
        return cls(
            window=ObservationWindow(w.get("start_year", 1), w["tau"], w.get("d")),
            claim_counts=list(raw["claim_counts"]),
            settlement=LayerTruth(**raw["settlement"]),
            payment=LayerTruth(base=raw["payment"]["base"],
                               effects=raw["payment"].get("effects", {})),
            size=LayerTruth(base=raw["size"]["base"], effects=raw["size"].get("effects", {})),
            dispersion=raw["size"].get("dispersion", raw.get("dispersion", 1.0)),
            payment_close_shift=raw["payment"].get("close_shift", 0.0),
            inflation=raw["size"].get("inflation"),
            covariates=covs,
            multiplicative_only=raw.get("multiplicative_only", False),
            seed=raw.get("seed", 0),
        )

    def to_json(self, path) -> None:
        raw = {
            "window": {"start_year": self.window.start_year, "tau": self.window.tau,
                       "d": self.window.d},
            "claim_counts": list(self.claim_counts),
            "settlement": {"base": list(self.settlement.base), "effects": self.settlement.effects},
            "payment": {"base": list(self.payment.base), "effects": self.payment.effects,
                        "close_shift": self.payment_close_shift},
            "size": {"base": list(self.size.base), "effects": self.size.effects,
                     "dispersion": self.dispersion,
                     **({"inflation": list(self.inflation)} if self.inflation else {})},
            "covariates": {
                name: ({"levels": spec.levels} if spec.levels is not None
                       else {"range": list(spec.numeric_range)})
                for name, spec in self.covariates.items()
            },
            "multiplicative_only": self.multiplicative_only,
            "seed": self.seed,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(raw, fh, indent=2)

    def schema(self) -> SchemaConfig:
        covs = {name: ColumnSpec("categorical" if spec.levels is not None else "numeric")
                for name, spec in self.covariates.items()}
        return SchemaConfig(covariates=covs, window=self.window)


def _effect_shift(truth: LayerTruth, claims: pd.DataFrame, rows: np.ndarray) -> np.ndarray:
    shift = np.zeros(rows.sum())
    for name, eff in truth.effects.items():
        col = claims.loc[rows, name]
        if isinstance(eff, dict):
            shift += col.map(eff).fillna(0.0).to_numpy(dtype=float)
        else:
            shift += float(eff) * col.to_numpy(dtype=float)
    return shift


def generate(config: GeneratorConfig) -> Portfolio:
    """Draw a full portfolio from the configured ground truth. Deterministic per seed."""
    window = config.window
    tau, d = window.tau, window.d
    rng = np.random.default_rng(config.seed)

    n_total = int(sum(config.claim_counts))
    reporting_year = np.repeat(np.arange(1, tau + 1), config.claim_counts)
    width = max(6, len(str(max(n_total, 1))))
    claims = pd.DataFrame({
        "claim_id": [f"C{k:0{width}d}" for k in range(n_total)],
        "reporting_year": reporting_year.astype(np.int64),
    })
    for name, spec in config.covariates.items():
        if spec.levels is not None:
            levels = list(spec.levels)
            probs = np.array([spec.levels[lv] for lv in levels], dtype=float)
            claims[name] = rng.choice(levels, size=n_total, p=probs / probs.sum())
        else:
            lo, hi = spec.numeric_range
            claims[name] = rng.uniform(lo, hi, size=n_total)

    inflation = np.ones(tau) if config.inflation is None else np.asarray(config.inflation, float)
    settled = np.zeros(n_total, dtype=bool)
    rows_out = []
    for j in range(1, d + 1):
        active = ~settled
        if not active.any():
            break
        m = int(active.sum())

        p = expit(logit(np.clip(config.settlement.base[j - 1], 1e-12, 1 - 1e-12))
                  + _effect_shift(config.settlement, claims, active))
        close = (rng.uniform(size=m) < p).astype(np.int64)
        if j == d:
            close[:] = 1  # settlement forced at the maximum delay

        q = expit(logit(np.clip(config.payment.base[j - 1], 1e-12, 1 - 1e-12))
                  + _effect_shift(config.payment, claims, active)
                  + config.payment_close_shift * close)
        payment = (rng.uniform(size=m) < q).astype(np.int64)

        mu = np.exp(np.log(config.size.base[j - 1])
                    + np.log(inflation[reporting_year[active] - 1])
                    + _effect_shift(config.size, claims, active))
        size = np.zeros(m)
        payers = payment == 1
        if payers.any():
            theta = config.dispersion
            size[payers] = rng.gamma(1.0 / theta, theta * mu[payers])

        rows_out.append(pd.DataFrame({
            "claim_id": claims.loc[active, "claim_id"].to_numpy(),
            "reporting_year": reporting_year[active],
            "dev_year": j,
            "close": close,
            "payment": payment,
            "size": size,
        }))
        settled[np.flatnonzero(active)[close == 1]] = True

    records = pd.concat(rows_out, ignore_index=True) if rows_out else pd.DataFrame(
        columns=["claim_id", "reporting_year", "dev_year", "close", "payment", "size"])
    # censor at the observation boundary
    records = records.loc[records["reporting_year"] + records["dev_year"] - 1 <= tau]
    return Portfolio(window, claims, records.reset_index(drop=True))
