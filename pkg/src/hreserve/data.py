"""Claim-level data model: ingestion, validation and derived development covariates.

The canonical representation is long format: one row per (claim, development
year) carrying that year's close/payment/size outcome.  Static claim
covariates are stored once per claim and joined onto the records when a
modelling frame is needed.  A Portfolio is treated as immutable once built;
operations that change it return a new instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, SchemaError

RECORD_COLUMNS = ("claim_id", "reporting_year", "dev_year", "close", "payment", "size")
DERIVED_COLUMNS = ("calendar_year", "size_last_year", "total_amount_paid")


@dataclass(frozen=True)
class ObservationWindow:
    """Observation window: `tau` observed calendar years starting at `start_year`.

    `d` is the maximum settlement delay in development years; claims settle at
    age `d` at the latest.  By convention `d` defaults to `tau`.
    """

    start_year: int
    tau: int
    d: int | None = None

    def __post_init__(self):
        if self.d is None:
            object.__setattr__(self, "d", self.tau)
        if self.tau < 1:
            raise ConfigError(f"observation window needs tau >= 1, got {self.tau}")
        if self.d < 1:
            raise ConfigError(f"maximum settlement delay needs d >= 1, got {self.d}")

    def observed_years(self, reporting_year) -> int | np.ndarray:
        """Number of observed development years for a claim reported in `reporting_year`."""
        return np.minimum(self.d, self.tau - np.asarray(reporting_year) + 1)


@dataclass(frozen=True)
class Claim:
    claim_id: str
    reporting_year: int
    static_covariates: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class DevelopmentRecord:
    claim_id: str
    dev_year: int
    close: int
    payment: int
    size: float


@dataclass
class ColumnSpec:
    """Declared type of one covariate column: categorical, numeric or date.

    Numeric columns may carry binning breakpoints; `bin_continuous` turns them
    into half-open interval labels.
    """

    kind: str
    breakpoints: list[float] | None = None
    na_label: str = "NA"

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric", "date"):
            raise ConfigError(f"unknown column kind {self.kind!r}")


@dataclass
class SchemaConfig:
    """Covariate schema for the portfolio CSV plus an optional explicit window."""

    covariates: dict[str, ColumnSpec] = field(default_factory=dict)
    window: ObservationWindow | None = None

    @classmethod
    def from_json(cls, path) -> "SchemaConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        covs = {
            name: ColumnSpec(
                kind=spec.get("type", "categorical"),
                breakpoints=spec.get("breakpoints"),
                na_label=spec.get("na_label", "NA"),
            )
            for name, spec in raw.get("covariates", {}).items()
        }
        window = None
        if "window" in raw:
            w = raw["window"]
            window = ObservationWindow(w.get("start_year", 1), w["tau"], w.get("d"))
        return cls(covariates=covs, window=window)

    def to_json(self, path) -> None:
        raw: dict = {"covariates": {}}
        for name, spec in self.covariates.items():
            entry: dict = {"type": spec.kind}
            if spec.breakpoints is not None:
                entry["breakpoints"] = list(spec.breakpoints)
            if spec.na_label != "NA":
                entry["na_label"] = spec.na_label
            raw["covariates"][name] = entry
        if self.window is not None:
            raw["window"] = {
                "start_year": self.window.start_year,
                "tau": self.window.tau,
                "d": self.window.d,
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(raw, fh, indent=2)


def bin_continuous(values, breakpoints: Sequence[float], na_label: str = "NA") -> np.ndarray:
    """Map numeric values to half-open interval labels.

    Intervals are [a, b): a value equal to a breakpoint belongs to the
    interval starting there.  Labels follow the usual actuarial display
    style: "5-" below the first breakpoint, "[5,21]" between breakpoints,
    "21+" from the last breakpoint on.  Missing values map to `na_label`.
    """
    bps = [float(b) for b in breakpoints]
    if len(bps) < 1:
        raise ConfigError("binning needs at least one breakpoint")
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise ConfigError(f"breakpoints must be strictly increasing, got {bps}")

    def fmt(x: float) -> str:
        return f"{x:g}"

    labels = [f"{fmt(bps[0])}-"]
    labels += [f"[{fmt(lo)},{fmt(hi)}]" for lo, hi in zip(bps, bps[1:])]
    labels.append(f"{fmt(bps[-1])}+")

    arr = pd.to_numeric(pd.Series(values), errors="coerce").to_numpy(dtype=float)
    idx = np.searchsorted(bps, arr, side="right")
    out = np.asarray(labels, dtype=object)[np.clip(idx, 0, len(labels) - 1)]
    out[np.isnan(arr)] = na_label
    return out


def _as_int01(series: pd.Series, name: str) -> pd.Series:
    values = pd.to_numeric(series, errors="coerce")
    bad = values.isna() | ~values.isin((0, 1))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"column {name!r} must be 0/1; offending data row {row + 1}")
    return values.astype(np.int64)


class Portfolio:
    """A window of observed claims and their development records.

    `claims` has one row per claim (claim_id, reporting_year, static
    covariates); `records` has one row per (claim_id, dev_year) with the
    outcome columns close/payment/size and the derived development
    covariates.  Instances are immutable by convention: mutate nothing after
    construction, share freely across threads.
    """

    def __init__(self, window: ObservationWindow, claims: pd.DataFrame, records: pd.DataFrame,
                 validate: bool = True):
        self.window = window
        self.claims = claims.reset_index(drop=True)
        records = records.reset_index(drop=True)
        if not set(DERIVED_COLUMNS) <= set(records.columns):
            records = _derive_record_covariates(self.claims, records)
        self.records = records
        if validate:
            self._validate()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_objects(cls, window: ObservationWindow, claims: Iterable[Claim],
                     records: Iterable[DevelopmentRecord]) -> "Portfolio":
        claim_rows = []
        for c in claims:
            row = {"claim_id": c.claim_id, "reporting_year": c.reporting_year}
            row.update(c.static_covariates)
            claim_rows.append(row)
        claims_df = pd.DataFrame(claim_rows, columns=None if claim_rows else ["claim_id", "reporting_year"])
        rec_df = pd.DataFrame([r.__dict__ for r in records])
        if len(rec_df):
            rec_df = rec_df.merge(claims_df[["claim_id", "reporting_year"]], on="claim_id", how="left")
        else:
            rec_df = pd.DataFrame(columns=list(RECORD_COLUMNS))
        return cls(window, claims_df, rec_df)

    # -- invariants ----------------------------------------------------------

    def _validate(self) -> None:
        claims, records = self.claims, self.records
        for col in ("claim_id", "reporting_year"):
            if col not in claims.columns:
                raise SchemaError(f"claims table misses required column {col!r}")
        rep = claims["reporting_year"]
        if len(claims) and ((rep < 1) | (rep > self.window.tau)).any():
            bad = claims.loc[(rep < 1) | (rep > self.window.tau), "claim_id"].iloc[0]
            raise DataError(f"claim {bad!r}: reporting_year outside [1, {self.window.tau}]")
        if claims["claim_id"].duplicated().any():
            dup = claims.loc[claims["claim_id"].duplicated(), "claim_id"].iloc[0]
            raise DataError(f"duplicate claim_id {dup!r} in claims table")

        for col in RECORD_COLUMNS:
            if col not in records.columns:
                raise SchemaError(f"records table misses required column {col!r}")
        if len(records) == 0:
            return

        unknown = ~records["claim_id"].isin(claims["claim_id"])
        if unknown.any():
            raise DataError(f"record references unknown claim_id "
                            f"{records.loc[unknown, 'claim_id'].iloc[0]!r}")
        dup = records.duplicated(subset=["claim_id", "dev_year"])
        if dup.any():
            cid, j = records.loc[dup, ["claim_id", "dev_year"]].iloc[0]
            raise DataError(f"duplicate record for claim {cid!r}, dev_year {j}")

        size = records["size"].to_numpy(dtype=float)
        payment = records["payment"].to_numpy()
        if (size < 0).any():
            row = int(np.flatnonzero(size < 0)[0])
            raise DataError(f"negative size at data row {row + 1}")
        mismatch = (size > 0) != (payment == 1)
        if mismatch.any():
            row = int(np.flatnonzero(mismatch)[0])
            raise DataError(
                f"size/payment inconsistency at data row {row + 1}: "
                f"size={size[row]}, payment={payment[row]}")

        tau_k = self.window.observed_years(records["reporting_year"].to_numpy())
        j = records["dev_year"].to_numpy()
        if (j < 1).any() or (j > tau_k).any():
            row = int(np.flatnonzero((j < 1) | (j > tau_k))[0])
            raise DataError(f"dev_year outside [1, tau_k] at data row {row + 1}")

        # settlement is absorbing: no record may follow a close = 1 year
        close_year = records["dev_year"].where(records["close"] == 1)
        first_close = close_year.groupby(records["claim_id"], sort=False).transform("min")
        reopened = records["dev_year"] > first_close.fillna(np.inf)
        if reopened.any():
            cid = records.loc[reopened, "claim_id"].iloc[0]
            raise DataError(f"claim {cid!r} has records after settlement (reopening not allowed)")

    # -- accessors -----------------------------------------------------------

    @property
    def reported_counts(self) -> np.ndarray:
        """Number of reported claims per reporting year, n_1..n_tau."""
        counts = np.zeros(self.window.tau, dtype=np.int64)
        if len(self.claims):
            got = self.claims["reporting_year"].value_counts()
            counts[got.index.to_numpy() - 1] = got.to_numpy()
        return counts

    @property
    def n_claims(self) -> int:
        return len(self.claims)

    @property
    def covariate_columns(self) -> list[str]:
        return [c for c in self.claims.columns if c not in ("claim_id", "reporting_year")]

    def training_frame(self) -> pd.DataFrame:
        """Records joined with the static claim covariates, one row per claim-year."""
        return self.records.merge(self.claims, on=["claim_id", "reporting_year"], how="left")

    def observed_age(self) -> pd.Series:
        """tau_k per claim, indexed like `claims`."""
        return pd.Series(self.window.observed_years(self.claims["reporting_year"].to_numpy()),
                         index=self.claims.index, name="observed_years")

    def open_claims(self) -> pd.DataFrame:
        """Claims still unsettled at the window edge with observed age < d."""
        if len(self.records) == 0:
            return self.claims.iloc[0:0]
        settled = self.records.loc[self.records["close"] == 1, "claim_id"].unique()
        age = self.observed_age()
        mask = (~self.claims["claim_id"].isin(settled)) & (age < self.window.d)
        return self.claims.loc[mask]

    def censored(self, cutoff_year: int) -> "Portfolio":
        """Portfolio as it would have been observed at the end of `cutoff_year`.

        Keeps claims reported up to the cutoff and records with calendar year
        up to the cutoff; the window shrinks to tau = cutoff_year.
        """
        if not 1 <= cutoff_year <= self.window.tau:
            raise ConfigError(f"cutoff {cutoff_year} outside window [1, {self.window.tau}]")
        window = ObservationWindow(self.window.start_year, cutoff_year, self.window.d)
        claims = self.claims.loc[self.claims["reporting_year"] <= cutoff_year]
        records = self.records.loc[self.records["calendar_year"] <= cutoff_year]
        return Portfolio(window, claims.copy(), records.copy(), validate=False)

    # -- io --------------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write the long-format CSV (derived columns are recomputed on ingest)."""
        out = self.records.drop(columns=list(DERIVED_COLUMNS), errors="ignore")
        statics = self.claims.drop(columns=["reporting_year"])
        out = out.merge(statics, on="claim_id", how="left")
        out.to_csv(path, index=False)

    def __repr__(self) -> str:  # pragma: no cover
        return (f"Portfolio(tau={self.window.tau}, d={self.window.d}, "
                f"claims={self.n_claims}, records={len(self.records)})")


def _derive_record_covariates(claims: pd.DataFrame, records: pd.DataFrame) -> pd.DataFrame:
    """Fill calendar_year, size_last_year and total_amount_paid on a record frame."""
    records = records.sort_values(["claim_id", "dev_year"], kind="mergesort").reset_index(drop=True)
    if len(records) == 0:
        for col in DERIVED_COLUMNS:
            records[col] = pd.Series(dtype=float)
        return records
    records["calendar_year"] = records["reporting_year"] + records["dev_year"] - 1
    # size in the previous development year: join on (claim, dev_year - 1),
    # robust to gaps in the record history
    prev = records[["claim_id", "dev_year", "size"]].copy()
    prev["dev_year"] = prev["dev_year"] + 1
    prev = prev.rename(columns={"size": "size_last_year"})
    records = records.merge(prev, on=["claim_id", "dev_year"], how="left")
    records["size_last_year"] = records["size_last_year"].fillna(0.0)
    cum = records.groupby("claim_id", sort=False)["size"].cumsum()
    records["total_amount_paid"] = (cum - records["size"]).astype(float)
    return records


def derive_development_covariates(portfolio: Portfolio) -> Portfolio:
    """Recompute the derived development covariates, returning a new Portfolio."""
    records = portfolio.records.drop(columns=list(DERIVED_COLUMNS), errors="ignore")
    records = _derive_record_covariates(portfolio.claims, records)
    return Portfolio(portfolio.window, portfolio.claims, records, validate=False)


def ingest_csv(path, schema: SchemaConfig) -> Portfolio:
    """Read a long-format portfolio CSV against a schema.

    The file must carry the record columns claim_id, reporting_year,
    dev_year, close, payment, size plus every covariate declared in the
    schema.  Static covariates must be constant within a claim.
    """
    raw = pd.read_csv(path)
    missing = [c for c in RECORD_COLUMNS if c not in raw.columns]
    missing += [c for c in schema.covariates if c not in raw.columns]
    if missing:
        raise SchemaError(f"missing column(s) in {path}: {', '.join(sorted(set(missing)))}")

    if len(raw) == 0:
        window = schema.window or ObservationWindow(1, 1)
        claims = pd.DataFrame(columns=["claim_id", "reporting_year", *schema.covariates])
        records = pd.DataFrame(columns=list(RECORD_COLUMNS))
        return Portfolio(window, claims, records)

    raw = raw.copy()
    raw["claim_id"] = raw["claim_id"].astype(str)
    for col in ("reporting_year", "dev_year"):
        raw[col] = pd.to_numeric(raw[col]).astype(np.int64)
    raw["close"] = _as_int01(raw["close"], "close")
    raw["payment"] = _as_int01(raw["payment"], "payment")
    raw["size"] = pd.to_numeric(raw["size"]).astype(float)

    for name, spec in schema.covariates.items():
        if spec.kind == "categorical":
            raw[name] = raw[name].astype(object).where(raw[name].notna(), spec.na_label).astype(str)
        elif spec.kind == "numeric":
            raw[name] = pd.to_numeric(raw[name], errors="coerce")
        elif spec.kind == "date":
            raw[name] = pd.to_datetime(raw[name], errors="coerce")

    static_cols = ["reporting_year", *schema.covariates]
    varying = raw.groupby("claim_id")[static_cols].nunique(dropna=False)
    bad = varying.gt(1).any(axis=1)
    if bad.any():
        cid = varying.index[bad][0]
        cols = varying.columns[varying.loc[cid].gt(1)].tolist()
        raise DataError(f"claim {cid!r} has non-constant static column(s): {', '.join(cols)}")

    claims = raw.sort_values(["claim_id", "dev_year"]).groupby("claim_id", as_index=False).first()
    claims = claims[["claim_id", *static_cols]]
    records = raw[list(RECORD_COLUMNS)].sort_values(["claim_id", "dev_year"]).reset_index(drop=True)

    window = schema.window
    if window is None:
        tau = int((raw["reporting_year"] + raw["dev_year"] - 1).max())
        window = ObservationWindow(1, tau)
    return Portfolio(window, claims, records)
