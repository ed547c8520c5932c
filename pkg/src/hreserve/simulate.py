"""Monte Carlo simulation of future claim development and the RBNS reserve report.

Future development years are simulated in chronological order and, within a
year, layer by layer, so simulated lower-layer outcomes feed higher layers of
the same year and all layers of later years.  Settlement is absorbing and is
forced at the maximum delay d.

Paths are simulated in fixed-size chunks with one RNG substream per chunk,
so increasing the path count extends the result without reshuffling the
paths already drawn.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Portfolio
from .errors import ConfigError, SimulationError, StateError
from .hrm import HierarchicalModel, _augment_first_year_static

CHUNK_PATHS = 64


@dataclass(frozen=True)
class SimulatedPath:
    path_id: int
    records: pd.DataFrame


class SimulationResult:
    """All simulated future records in one frame, one block per path.

    Columns: path_id, claim_id, reporting_year, dev_year, future_year,
    calendar_year plus one column per layer response.  Paths whose claims all
    settled immediately may contribute no rows but still count in `n_paths`.
    """

    def __init__(self, frame: pd.DataFrame, n_paths: int, responses: list[str]):
        self.frame = frame
        self.n_paths = n_paths
        self.responses = responses

    def __len__(self) -> int:
        return self.n_paths

    def __iter__(self):
        for pid in range(self.n_paths):
            yield SimulatedPath(pid, self.frame.loc[self.frame["path_id"] == pid])

    def path_totals(self, horizon: int | None = None, column: str = "size") -> np.ndarray:
        """Total future `column` per path (0 for paths without records)."""
        frame = self.frame
        if horizon is not None:
            frame = frame.loc[frame["future_year"] <= horizon]
        totals = np.zeros(self.n_paths)
        if len(frame) and column in frame.columns:
            got = frame.groupby("path_id")[column].sum()
            totals[got.index.to_numpy()] = got.to_numpy()
        return totals


def _claim_state(portfolio: Portfolio) -> pd.DataFrame:
    """Open claims with their observed age, last paid size and cumulative paid."""
    open_claims = portfolio.open_claims()
    if len(open_claims) == 0:
        return open_claims.assign(observed_years=[], last_size=[], paid_total=[])
    age = portfolio.window.observed_years(open_claims["reporting_year"].to_numpy())
    recs = portfolio.records
    recs = recs[recs["claim_id"].isin(open_claims["claim_id"])]
    paid = recs.groupby("claim_id")["size"].sum()
    last = recs.sort_values("dev_year").groupby("claim_id")["size"].last()
    state = open_claims.copy()
    state["observed_years"] = age
    state["paid_total"] = state["claim_id"].map(paid).fillna(0.0).to_numpy()
    state["last_size"] = state["claim_id"].map(last).fillna(0.0).to_numpy()
    return state


def _simulate_chunk(model: HierarchicalModel, state: pd.DataFrame, chunk_index: int,
                    seed: int, horizon: int | None) -> pd.DataFrame:
    rng = np.random.default_rng([seed, chunk_index])
    B, C = CHUNK_PATHS, len(state)
    n = B * C
    d = model.d

    static = pd.concat([state] * B, ignore_index=True)
    path_local = np.repeat(np.arange(B), C)
    tau_k = static["observed_years"].to_numpy(dtype=np.int64)
    settled = np.zeros(n, dtype=bool)
    last_size = static["last_size"].to_numpy(dtype=float).copy()
    paid_total = static["paid_total"].to_numpy(dtype=float).copy()
    static = static.drop(columns=["observed_years", "last_size", "paid_total"])

    responses = [layer.response for layer in model.layers]
    out: list[pd.DataFrame] = []
    j_start = int(tau_k.min()) + 1 if C else d + 1
    for j in range(j_start, d + 1):
        eligible = ~settled & (tau_k < j)
        if horizon is not None:
            eligible &= j <= tau_k + horizon
        if not eligible.any():
            if (settled | (tau_k + (horizon or d) < j)).all():
                break
            continue
        frame = static.loc[eligible].copy()
        frame["dev_year"] = j
        frame["calendar_year"] = frame["reporting_year"] + j - 1
        frame["size_last_year"] = last_size[eligible]
        frame["total_amount_paid"] = paid_total[eligible]

        m = int(eligible.sum())
        for layer in model.layers:
            values = np.full(m, layer.spec.default_value, dtype=float)
            if layer.response == "close" and j == d:
                values[:] = 1.0  # settlement forced at the maximum delay
            else:
                lmask = layer.spec.mask(frame)
                if lmask.any():
                    params = np.asarray(layer.predict(frame.loc[lmask]), dtype=float)
                    if layer.spec.family == "bernoulli":
                        draws = (rng.uniform(size=lmask.sum()) < params).astype(float)
                    else:
                        theta = layer.dispersion
                        if theta is not None and theta > 1e-12:
                            draws = rng.gamma(1.0 / theta, theta * params)
                        else:
                            draws = params
                    values[lmask] = draws
            frame[layer.response] = values

        if "close" in frame.columns:
            settled[eligible] |= frame["close"].to_numpy() == 1.0
        size_now = frame["size"].to_numpy() if "size" in frame.columns else np.zeros(m)
        paid_total[eligible] += size_now
        last_size[eligible] = size_now

        rec = frame[["claim_id", "reporting_year", "dev_year", "calendar_year", *responses]].copy()
        rec.insert(0, "path_id", path_local[eligible])
        rec["future_year"] = j - tau_k[eligible]
        out.append(rec)

    if not out:
        cols = ["path_id", "claim_id", "reporting_year", "dev_year", "calendar_year",
                *responses, "future_year"]
        return pd.DataFrame(columns=cols)
    return pd.concat(out, ignore_index=True)


def simulate_paths(model: HierarchicalModel, portfolio: Portfolio, n_paths: int,
                   seed: int = 0, horizon: int | None = None, n_jobs: int = 1) -> SimulationResult:
    """Simulate the future development of every open claim, `n_paths` times.

    Claims settled in the observed data, and claims whose observed age
    already equals d, generate nothing.  With `horizon` set, each claim is
    developed at most that many years past its observed age (sufficient for a
    horizon-limited reserve; identical in law to truncating full paths).
    Deterministic given `seed`.
    """
    if not getattr(model, "layers", None):
        raise StateError("model has no fitted layers")
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    if horizon is not None and horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")

    state = _claim_state(portfolio)
    if model.first_modeled_year == 2 and len(state):
        state = _augment_first_year_static(state, portfolio)
    responses = [layer.response for layer in model.layers]

    n_chunks = int(np.ceil(n_paths / CHUNK_PATHS))
    if len(state) == 0:
        empty = _simulate_chunk(model, state, 0, seed, horizon)
        return SimulationResult(empty, n_paths, responses)

    def run(c: int) -> pd.DataFrame:
        chunk = _simulate_chunk(model, state, c, seed, horizon)
        chunk["path_id"] = chunk["path_id"] + c * CHUNK_PATHS
        return chunk

    if n_jobs == 1 or n_chunks == 1:
        chunks = [run(c) for c in range(n_chunks)]
    else:
        workers = None if n_jobs in (0, None) else n_jobs
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(n_chunks)))
    frame = pd.concat(chunks, ignore_index=True)
    frame = frame.loc[frame["path_id"] < n_paths].reset_index(drop=True)
    return SimulationResult(frame, n_paths, responses)


@dataclass
class ReserveReport:
    """Point estimate, per-path totals and empirical quantile intervals."""

    point_estimate: float
    path_totals: np.ndarray
    quantiles: dict[float, float]
    by_calendar_year: pd.DataFrame
    n_paths: int
    horizon: int | None = None

    def to_dict(self) -> dict:
        return {
            "point_estimate": self.point_estimate,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "quantiles": {str(q): v for q, v in self.quantiles.items()},
            "path_total_sd": float(np.std(self.path_totals, ddof=1)) if self.n_paths > 1 else 0.0,
            "by_calendar_year": self.by_calendar_year.to_dict(orient="records"),
        }


def rbns_reserve(paths, quantile_levels=(0.05, 0.5, 0.95),
                 horizon: int | None = None) -> ReserveReport:
    """Aggregate simulated paths into a reserve estimate with prediction intervals.

    The point estimate is the mean of per-path total future payment sizes;
    quantiles are empirical order statistics of the same totals.  With
    `horizon` set, only the first `horizon` future years of each claim count.
    """
    if isinstance(paths, SimulationResult):
        result = paths
    else:
        paths = list(paths)
        if len(paths) == 0:
            raise SimulationError("empty path set")
        frames = [p.records.assign(path_id=p.path_id) for p in paths if len(p.records)]
        if frames:
            frame = pd.concat(frames, ignore_index=True)
        else:
            frame = pd.DataFrame(columns=["path_id", "claim_id", "reporting_year",
                                          "dev_year", "calendar_year", "future_year"])
        result = SimulationResult(frame, len(paths), [])
    if result.n_paths < 1:
        raise SimulationError("empty path set")
    for q in quantile_levels:
        if not 0 < q < 1:
            raise ConfigError(f"quantile level {q} outside (0, 1)")

    totals = result.path_totals(horizon=horizon)
    quantiles = {float(q): float(np.quantile(totals, q, method="inverted_cdf"))
                 for q in quantile_levels}

    frame = result.frame
    if horizon is not None and len(frame):
        frame = frame.loc[frame["future_year"] <= horizon]
    if len(frame):
        kwargs = {"open_claims": ("claim_id", "size")}
        if "payment" in frame.columns:
            kwargs["payments"] = ("payment", "sum")
        if "size" in frame.columns:
            kwargs["paid"] = ("size", "sum")
        agg = frame.groupby("calendar_year").agg(**kwargs)
        by_year = (agg / result.n_paths).reset_index()
    else:
        by_year = pd.DataFrame(columns=["calendar_year", "open_claims", "payments", "paid"])

    return ReserveReport(
        point_estimate=float(totals.mean()),
        path_totals=totals,
        quantiles=quantiles,
        by_calendar_year=by_year,
        n_paths=result.n_paths,
        horizon=horizon,
    )
