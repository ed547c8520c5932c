"""Core data model: ingestion, validation, binning, derived covariates."""

import numpy as np
import pandas as pd
import pytest

from hreserve.data import (
    ColumnSpec,
    ObservationWindow,
    Portfolio,
    SchemaConfig,
    bin_continuous,
    derive_development_covariates,
    ingest_csv,
)
from hreserve.errors import ConfigError, DataError, SchemaError


def make_schema(tau=2, d=None, **covariates):
    covs = {name: ColumnSpec(kind) for name, kind in covariates.items()}
    return SchemaConfig(covariates=covs, window=ObservationWindow(1, tau, d))


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


CSV_TWO_CLAIMS = """claim_id,reporting_year,dev_year,close,payment,size,cause
A,1,1,0,1,100.0,storm
A,1,2,1,1,50.0,storm
B,1,1,0,0,0.0,fire
B,1,2,0,1,25.0,fire
"""


class TestIngest:
    def test_round_trip_two_claims(self, tmp_path):
        path = write_csv(tmp_path, CSV_TWO_CLAIMS)
        p = ingest_csv(path, make_schema(tau=2, cause="categorical"))
        assert p.n_claims == 2
        assert len(p.records) == 4
        assert list(p.reported_counts) == [2, 0]

    def test_empty_file_header_only(self, tmp_path):
        path = write_csv(tmp_path, "claim_id,reporting_year,dev_year,close,payment,size\n")
        p = ingest_csv(path, make_schema(tau=2))
        assert p.n_claims == 0
        assert len(p.records) == 0

    def test_size_payment_inconsistency_names_row(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size\n"
                "A,1,1,0,1,10.0\n"
                "A,1,2,0,0,50.0\n")
        path = write_csv(tmp_path, text)
        with pytest.raises(DataError, match="row 2"):
            ingest_csv(path, make_schema(tau=2))

    def test_missing_column_names_it(self, tmp_path):
        path = write_csv(tmp_path, "claim_id,reporting_year,dev_year,close,size\nA,1,1,0,0\n")
        with pytest.raises(SchemaError, match="payment"):
            ingest_csv(path, make_schema(tau=1))

    def test_missing_covariate_column(self, tmp_path):
        path = write_csv(tmp_path, CSV_TWO_CLAIMS)
        with pytest.raises(SchemaError, match="region"):
            ingest_csv(path, make_schema(tau=2, region="categorical"))

    def test_duplicate_claim_year(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size\n"
                "A,1,1,0,1,10.0\n"
                "A,1,1,0,1,20.0\n")
        with pytest.raises(DataError, match="duplicate"):
            ingest_csv(write_csv(tmp_path, text), make_schema(tau=2))

    def test_record_for_unknown_claim_rejected(self):
        window = ObservationWindow(1, 2)
        claims = pd.DataFrame({"claim_id": ["A"], "reporting_year": [1]})
        records = pd.DataFrame({
            "claim_id": ["B"], "reporting_year": [1], "dev_year": [1],
            "close": [0], "payment": [0], "size": [0.0],
        })
        with pytest.raises(DataError, match="unknown claim_id"):
            Portfolio(window, claims, records)

    def test_record_after_settlement_rejected(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size\n"
                "A,1,1,1,1,10.0\n"
                "A,1,2,0,0,0.0\n")
        with pytest.raises(DataError, match="settlement"):
            ingest_csv(write_csv(tmp_path, text), make_schema(tau=2))

    def test_dev_year_beyond_observed_age(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size\n"
                "A,2,2,0,0,0.0\n")
        # claim reported in year 2 of a 2-year window: only dev year 1 observable
        with pytest.raises(DataError, match="dev_year"):
            ingest_csv(write_csv(tmp_path, text), make_schema(tau=2))

    def test_inconsistent_static_covariate(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size,cause\n"
                "A,1,1,0,0,0.0,storm\n"
                "A,1,2,0,0,0.0,fire\n")
        with pytest.raises(DataError, match="cause"):
            ingest_csv(write_csv(tmp_path, text), make_schema(tau=2, cause="categorical"))

    def test_missing_categorical_becomes_na_level(self, tmp_path):
        text = ("claim_id,reporting_year,dev_year,close,payment,size,cause\n"
                "A,1,1,0,0,0.0,\n")
        p = ingest_csv(write_csv(tmp_path, text), make_schema(tau=1, cause="categorical"))
        assert p.claims["cause"].iloc[0] == "NA"


class TestRoundTrip:
    def test_emit_ingest_is_identity(self, tmp_path, medium_portfolio):
        path = tmp_path / "portfolio.csv"
        medium_portfolio.to_csv(path)
        schema = SchemaConfig(covariates={"weather": ColumnSpec("categorical")},
                              window=medium_portfolio.window)
        again = ingest_csv(path, schema)
        pd.testing.assert_frame_equal(
            again.records.reset_index(drop=True),
            medium_portfolio.records.reset_index(drop=True),
            check_dtype=False,
        )
        pd.testing.assert_frame_equal(
            again.claims.sort_values("claim_id").reset_index(drop=True),
            medium_portfolio.claims.sort_values("claim_id").reset_index(drop=True),
            check_dtype=False, check_like=True,
        )

    def test_reported_counts_sum_to_claims(self, medium_portfolio):
        assert medium_portfolio.reported_counts.sum() == medium_portfolio.n_claims


class TestBinning:
    def test_table_style_labels(self):
        out = bin_continuous([3, 10, 30], [5, 21])
        assert list(out) == ["5-", "[5,21]", "21+"]

    def test_missing_maps_to_na(self):
        out = bin_continuous([np.nan, 7], [5, 21])
        assert list(out) == ["NA", "[5,21]"]

    def test_breakpoint_belongs_to_right_interval(self):
        out = bin_continuous([5, 21], [5, 21])
        assert list(out) == ["[5,21]", "21+"]

    def test_non_increasing_breakpoints_rejected(self):
        with pytest.raises(ConfigError):
            bin_continuous([1.0], [5, 5])
        with pytest.raises(ConfigError):
            bin_continuous([1.0], [])

    def test_multiple_interior_bins(self):
        out = bin_continuous([0, 45, 55, 70], [40, 50, 65])
        assert list(out) == ["40-", "[40,50]", "[50,65]", "65+"]


class TestDerivedCovariates:
    def make_portfolio(self, sizes, closes=None, tau=3):
        n = len(sizes)
        closes = closes or [0] * n
        window = ObservationWindow(1, tau)
        claims = pd.DataFrame({"claim_id": ["A"], "reporting_year": [1]})
        records = pd.DataFrame({
            "claim_id": ["A"] * n, "reporting_year": [1] * n,
            "dev_year": list(range(1, n + 1)),
            "close": closes,
            "payment": [1 if s > 0 else 0 for s in sizes],
            "size": [float(s) for s in sizes],
        })
        return Portfolio(window, claims, records)

    def test_two_year_history(self):
        p = self.make_portfolio([100.0, 50.0], tau=2)
        year2 = p.records.loc[p.records["dev_year"] == 2].iloc[0]
        assert year2["size_last_year"] == 100.0
        assert year2["total_amount_paid"] == 100.0

    def test_first_year_has_empty_history(self):
        p = self.make_portfolio([100.0, 50.0], tau=2)
        year1 = p.records.loc[p.records["dev_year"] == 1].iloc[0]
        assert year1["size_last_year"] == 0.0
        assert year1["total_amount_paid"] == 0.0

    def test_gap_year_with_no_payment(self):
        p = self.make_portfolio([10.0, 0.0, 5.0])
        year3 = p.records.loc[p.records["dev_year"] == 3].iloc[0]
        assert year3["size_last_year"] == 0.0
        assert year3["total_amount_paid"] == 10.0

    def test_calendar_year_offset(self):
        p = self.make_portfolio([10.0, 0.0, 5.0])
        assert list(p.records["calendar_year"]) == [1, 2, 3]

    def test_rederivation_is_idempotent(self, medium_portfolio):
        again = derive_development_covariates(medium_portfolio)
        pd.testing.assert_frame_equal(again.records, medium_portfolio.records)


class TestCensoring:
    def test_censored_drops_future(self, medium_portfolio):
        cut = medium_portfolio.censored(2)
        assert cut.window.tau == 2
        assert (cut.records["calendar_year"] <= 2).all()
        assert (cut.claims["reporting_year"] <= 2).all()

    def test_censored_out_of_range(self, medium_portfolio):
        with pytest.raises(ConfigError):
            medium_portfolio.censored(99)

    def test_open_claims_excludes_settled_and_aged_out(self, medium_portfolio):
        open_claims = medium_portfolio.open_claims()
        settled = medium_portfolio.records.loc[
            medium_portfolio.records["close"] == 1, "claim_id"]
        assert not open_claims["claim_id"].isin(set(settled)).any()
        age = medium_portfolio.window.observed_years(open_claims["reporting_year"].to_numpy())
        assert (age < medium_portfolio.window.d).all()
