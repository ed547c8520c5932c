"""Moving-window out-of-time evaluation of reserving models.

For each evaluation date the dataset is censored at that calendar year, the
configured models are refitted on the censored data (covariate selections
made on the first date are frozen for the rest of the window), and the
horizon-limited reserve prediction is compared against the realized
development.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .data import Portfolio
from .errors import ConfigError, EvaluationError, HreserveError
from .hrm import LayerSpec, a3_layers, default_weights, fit_hrm
from .selection import forward_select
from .simulate import rbns_reserve, simulate_paths
from .triangles import build_triangle, chain_ladder, crm_rbns, dcl_rbns, mack_se


def percentage_error(predicted: float, actual: float, cap: float | None = None) -> float:
    """Signed percentage error (predicted - actual) / actual * 100.

    Undefined for actual == 0; returns NaN so callers can report the entry as
    missing.  With `cap` set, the magnitude is clipped to +-cap.
    """
    if actual == 0:
        return float("nan")
    pe = (predicted - actual) / actual * 100.0
    if cap is not None:
        pe = float(np.clip(pe, -cap, cap))
    return float(pe)


def actual_development(portfolio: Portfolio, cutoff_year: int, horizon: int) -> float:
    """Realized payment total in the `horizon` calendar years after the cutoff,
    restricted to claims already reported at the cutoff."""
    records = portfolio.records
    mask = ((records["reporting_year"] <= cutoff_year)
            & (records["calendar_year"] > cutoff_year)
            & (records["calendar_year"] <= cutoff_year + horizon))
    return float(records.loc[mask, "size"].sum())


# -- model adapters -----------------------------------------------------------


class HrmReserver:
    """Layered individual model: refit per date, reserve via path simulation."""

    def __init__(self, name: str, layers: Sequence[LayerSpec] | None = None,
                 engine: str = "glm", engine_configs: dict | None = None,
                 candidate_covariates: dict[str, list[str]] | None = None,
                 selection_folds: int = 5, n_paths: int = 200,
                 first_modeled_year: int = 1, interval_level: float = 0.9):
        self.name = name
        self.layers = list(layers) if layers is not None else None
        self.engine = engine
        self.engine_configs = engine_configs
        self.candidate_covariates = candidate_covariates or {}
        self.selection_folds = selection_folds
        self.n_paths = n_paths
        self.first_modeled_year = first_modeled_year
        self.interval_level = interval_level
        self.selected_: dict[str, list[str]] | None = None

    def prepare(self, portfolio: Portfolio, seed: int) -> None:
        """First-date setup: run forward selection once for layers that ask for it."""
        if self.layers is None:
            self.layers = a3_layers(portfolio.window.d, engine=self.engine)
        if not self.candidate_covariates or self.selected_ is not None:
            return
        frame = portfolio.training_frame()
        weights = default_weights(portfolio, self.first_modeled_year)
        self.selected_ = {}
        for spec in self.layers:
            candidates = self.candidate_covariates.get(spec.name)
            if not candidates:
                continue
            rows = frame.loc[spec.mask(frame)]
            result = forward_select(rows, spec.response, candidates, spec.family,
                                    weights, K=self.selection_folds, seed=seed,
                                    base_covariates=spec.covariates, engine=spec.engine)
            self.selected_[spec.name] = result.selected
            spec.covariates = list(spec.covariates) + result.selected

    def evaluate(self, train: Portfolio, horizon: int, seed: int) -> dict:
        model = fit_hrm(train, self.layers, engine_configs=self.engine_configs,
                        seed=seed, first_modeled_year=self.first_modeled_year)
        sims = simulate_paths(model, train, self.n_paths, seed=seed, horizon=horizon)
        lo = (1 - self.interval_level) / 2
        report = rbns_reserve(sims, quantile_levels=(lo, 1 - lo), horizon=horizon)
        qs = sorted(report.quantiles.values())
        return {"predicted": report.point_estimate, "lower": qs[0], "upper": qs[-1]}


class ChainLadderReserver:
    """Classical chain ladder on the size triangle with a Mack normal interval."""

    def __init__(self, name: str = "chain_ladder", layer: str = "size",
                 interval_level: float = 0.9):
        self.name = name
        self.layer = layer
        self.interval_level = interval_level

    def prepare(self, portfolio: Portfolio, seed: int) -> None:
        pass

    def evaluate(self, train: Portfolio, horizon: int, seed: int) -> dict:
        triangle = build_triangle(train, self.layer)
        cl = chain_ladder(triangle)
        predicted = cl.reserve_at_horizon(horizon)
        out = {"predicted": predicted, "lower": float("nan"), "upper": float("nan")}
        if triangle.n_rows >= 3:
            try:
                mack = mack_se(triangle)
            except HreserveError:
                return out
            lo, hi = mack.interval(self.interval_level)
            # interval for the horizon-limited reserve, scaled proportionally
            scale = predicted / cl.reserve if cl.reserve > 0 else 0.0
            out["lower"], out["upper"] = lo * scale, hi * scale
        return out


class DclReserver:
    def __init__(self, name: str = "dcl"):
        self.name = name

    def prepare(self, portfolio: Portfolio, seed: int) -> None:
        pass

    def evaluate(self, train: Portfolio, horizon: int, seed: int) -> dict:
        result = dcl_rbns(train, horizon=horizon)
        return {"predicted": result.reserve, "lower": float("nan"), "upper": float("nan")}


class CrmReserver:
    def __init__(self, name: str = "crm"):
        self.name = name

    def prepare(self, portfolio: Portfolio, seed: int) -> None:
        pass

    def evaluate(self, train: Portfolio, horizon: int, seed: int) -> dict:
        result = crm_rbns(train, horizon=horizon)
        return {"predicted": result.reserve, "lower": float("nan"), "upper": float("nan")}


def build_reserver(config: dict):
    """Reserver factory for dict-style model configs (used by the CLI)."""
    kind = config.get("kind", "hrm")
    name = config.get("name", kind)
    if kind == "hrm":
        layers = None
        if "layers" in config:
            layers = [LayerSpec(**entry) for entry in config["layers"]]
        return HrmReserver(
            name, layers=layers, engine=config.get("engine", "glm"),
            engine_configs=config.get("engine_configs"),
            candidate_covariates=config.get("candidate_covariates"),
            n_paths=config.get("n_paths", 200),
            first_modeled_year=config.get("first_modeled_year", 1))
    if kind == "chain_ladder":
        return ChainLadderReserver(name, layer=config.get("layer", "size"))
    if kind == "dcl":
        return DclReserver(name)
    if kind == "crm":
        return CrmReserver(name)
    raise ConfigError(f"unknown model kind {kind!r}")


# -- the harness ------------------------------------------------------------


@dataclass
class EvaluationRun:
    """Per-date, per-model predictions against realized development."""

    results: pd.DataFrame
    dates: list[int]
    horizon: int
    cap: float | None = None
    selections: dict = field(default_factory=dict)

    def summaries(self) -> pd.DataFrame:
        return summarize(self)


def moving_window_eval(dataset: Portfolio, dates: Sequence[int], model_configs,
                       horizon_years: int, seed: int = 0, cap: float | None = None,
                       n_jobs: int = 1) -> EvaluationRun:
    """Censor, refit and score every configured model on every evaluation date.

    `dates` are calendar-year cutoffs inside the dataset window; each must
    leave at least one full training year and `horizon_years` of realized
    development.  `model_configs` holds reserver objects or config dicts.
    """
    if horizon_years < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon_years}")
    dates = sorted(int(t) for t in dates)
    tau = dataset.window.tau
    for t in dates:
        if t < 1 or t > tau:
            raise ConfigError(f"evaluation date {t} outside window [1, {tau}]")
        if t + horizon_years > tau:
            raise ConfigError(
                f"date {t} leaves no realized development for horizon {horizon_years}")

    reservers = [m if hasattr(m, "evaluate") else build_reserver(m) for m in model_configs]
    first_train = dataset.censored(dates[0])
    for k, reserver in enumerate(reservers):
        reserver.prepare(first_train, seed=seed + 1000 * k)

    def run_date(args) -> list[dict]:
        t_index, t = args
        train = dataset.censored(t)
        actual = actual_development(dataset, t, horizon_years)
        rows = []
        for k, reserver in enumerate(reservers):
            got = reserver.evaluate(train, horizon_years,
                                    seed=int(np.random.default_rng([seed, t_index, k])
                                             .integers(2**31)))
            rows.append({
                "date": t, "model": reserver.name,
                "predicted": got["predicted"], "actual": actual,
                "pe": percentage_error(got["predicted"], actual, cap),
                "lower": got.get("lower", float("nan")),
                "upper": got.get("upper", float("nan")),
            })
        return rows

    jobs = list(enumerate(dates))
    if n_jobs == 1 or len(jobs) == 1:
        all_rows = [run_date(job) for job in jobs]
    else:
        workers = None if n_jobs in (0, None) else n_jobs
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_rows = list(pool.map(run_date, jobs))
    results = pd.DataFrame([row for rows in all_rows for row in rows])
    selections = {r.name: r.selected_ for r in reservers
                  if getattr(r, "selected_", None) is not None}
    return EvaluationRun(results=results, dates=list(dates), horizon=horizon_years,
                         cap=cap, selections=selections)


def summarize(run: EvaluationRun) -> pd.DataFrame:
    """Mean percentage error and mean absolute percentage error per model.

    Undefined entries (actual == 0) are excluded and counted.
    """
    if len(run.results) == 0:
        raise EvaluationError("evaluation run is empty")
    rows = []
    for model, group in run.results.groupby("model", sort=False):
        pe = group["pe"].to_numpy(dtype=float)
        defined = pe[~np.isnan(pe)]
        if len(defined) == 0:
            raise EvaluationError(f"all percentage errors for model {model!r} are undefined")
        rows.append({
            "model": model,
            "mean_pe": float(defined.mean()),
            "mean_abs_pe": float(np.abs(defined).mean()),
            "n_dates": int(len(pe)),
            "n_excluded": int(np.isnan(pe).sum()),
        })
    return pd.DataFrame(rows)
