"""Moving-window evaluation: metrics, leakage, determinism, translation invariance."""

import numpy as np
import pandas as pd
import pytest

from hreserve.data import ObservationWindow, Portfolio
from hreserve.errors import ConfigError, EvaluationError
from hreserve.evaluation import (
    ChainLadderReserver,
    DclReserver,
    EvaluationRun,
    HrmReserver,
    actual_development,
    moving_window_eval,
    percentage_error,
    summarize,
)
from hreserve.generator import CovariateSpec, GeneratorConfig, LayerTruth, generate
from hreserve.hrm import a3_layers


class TestPercentageError:
    def test_basic_cases(self):
        assert percentage_error(110, 100) == pytest.approx(10.0)
        assert percentage_error(100, 100) == 0.0
        assert percentage_error(90, 100) == pytest.approx(-10.0)

    def test_cap(self):
        assert percentage_error(500, 100, cap=100) == 100.0
        assert percentage_error(0, 100, cap=50) == -50.0

    def test_zero_actual_is_missing(self):
        assert np.isnan(percentage_error(10, 0))


class TestSummarize:
    def make_run(self, pes, model="m"):
        frame = pd.DataFrame({
            "date": range(len(pes)), "model": model,
            "predicted": 1.0, "actual": 1.0, "pe": pes,
        })
        return EvaluationRun(results=frame, dates=list(range(len(pes))), horizon=1)

    def test_symmetric_pair(self):
        out = summarize(self.make_run([10.0, -10.0]))
        assert out["mean_pe"].iloc[0] == pytest.approx(0.0)
        assert out["mean_abs_pe"].iloc[0] == pytest.approx(10.0)

    def test_singleton(self):
        out = summarize(self.make_run([7.32]))
        assert out["mean_pe"].iloc[0] == pytest.approx(7.32)
        assert out["mean_abs_pe"].iloc[0] == pytest.approx(7.32)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(0)
        pes = rng.normal(size=50).tolist()
        out = summarize(self.make_run(pes))
        assert out["mean_abs_pe"].iloc[0] >= abs(out["mean_pe"].iloc[0])

    def test_excluded_entries_counted(self):
        out = summarize(self.make_run([10.0, float("nan"), 20.0]))
        assert out["n_excluded"].iloc[0] == 1
        assert out["mean_pe"].iloc[0] == pytest.approx(15.0)

    def test_all_undefined_raises(self):
        with pytest.raises(EvaluationError):
            summarize(self.make_run([float("nan")] * 3))


class TestActualDevelopment:
    def test_hand_built_three_claim_dataset(self):
        window = ObservationWindow(1, 3)
        claims = pd.DataFrame({"claim_id": ["A", "B", "C"], "reporting_year": [1, 1, 3]})
        records = pd.DataFrame({
            "claim_id": ["A", "A", "A", "B", "B", "C"],
            "reporting_year": [1, 1, 1, 1, 1, 3],
            "dev_year": [1, 2, 3, 1, 2, 1],
            "close": [0, 0, 1, 0, 1, 1],
            "payment": [1, 1, 0, 0, 1, 1],
            "size": [10.0, 20.0, 0.0, 0.0, 7.0, 99.0],
        })
        portfolio = Portfolio(window, claims, records)
        # cutoff year 1, horizon 1: payments in calendar year 2 for claims A, B
        assert actual_development(portfolio, 1, 1) == pytest.approx(27.0)
        # claim C is reported after the cutoff and never counts
        assert actual_development(portfolio, 1, 2) == pytest.approx(27.0)


def eval_config(seed=31, tau=5, n_per_year=150):
    return GeneratorConfig(
        window=ObservationWindow(1, tau),
        claim_counts=[n_per_year] * tau,
        settlement=LayerTruth(base=[0.35, 0.45, 0.5, 0.6, 1.0][:tau]),
        payment=LayerTruth(base=[0.8, 0.6, 0.5, 0.4, 0.35][:tau]),
        size=LayerTruth(base=[100.0, 120.0, 140.0, 110.0, 80.0][:tau]),
        dispersion=0.5,
        covariates={"weather": CovariateSpec(levels={"normal": 0.9, "storm": 0.1})},
        seed=seed,
    )


class OracleReserver:
    """Peeks at the realized development; the error must be exactly zero."""

    name = "oracle"

    def __init__(self, dataset):
        self.dataset = dataset

    def prepare(self, portfolio, seed):
        pass

    def evaluate(self, train, horizon, seed):
        actual = actual_development(self.dataset, train.window.tau, horizon)
        return {"predicted": actual}


class TestMovingWindow:
    def test_oracle_model_has_zero_error(self):
        dataset = generate(eval_config())
        run = moving_window_eval(dataset, [3, 4], [OracleReserver(dataset)], 1)
        assert np.allclose(run.results["pe"], 0.0)

    def test_date_validation(self):
        dataset = generate(eval_config())
        with pytest.raises(ConfigError, match="outside"):
            moving_window_eval(dataset, [9], [DclReserver()], 1)
        with pytest.raises(ConfigError, match="realized"):
            moving_window_eval(dataset, [5], [DclReserver()], 1)
        with pytest.raises(ConfigError):
            moving_window_eval(dataset, [3], [DclReserver()], 0)

    def test_deterministic_given_seed(self):
        dataset = generate(eval_config())
        models = [HrmReserver("hglm", a3_layers(
            dataset.window.d, close_covariates=["factor(dev_year)"],
            size_covariates=["factor(dev_year)"]), n_paths=32),
            ChainLadderReserver()]
        a = moving_window_eval(dataset, [3], models, 2, seed=5)
        models2 = [HrmReserver("hglm", a3_layers(
            dataset.window.d, close_covariates=["factor(dev_year)"],
            size_covariates=["factor(dev_year)"]), n_paths=32),
            ChainLadderReserver()]
        b = moving_window_eval(dataset, [3], models2, 2, seed=5)
        pd.testing.assert_frame_equal(a.results, b.results)

    def test_no_leakage_from_post_cutoff_records(self):
        dataset = generate(eval_config(seed=77))
        cutoff = 3
        poisoned_records = dataset.records.copy()
        future = poisoned_records["calendar_year"] > cutoff
        poisoned_records.loc[future & (poisoned_records["payment"] == 1), "size"] = 1e9
        poisoned = Portfolio(dataset.window, dataset.claims, poisoned_records,
                             validate=False)

        def predictions(ds):
            run = moving_window_eval(
                ds, [cutoff],
                [ChainLadderReserver(), DclReserver(),
                 HrmReserver("hglm", a3_layers(ds.window.d), n_paths=16)],
                2, seed=3)
            return run.results.set_index("model")["predicted"]

        clean = predictions(dataset)
        dirty = predictions(poisoned)
        pd.testing.assert_series_equal(clean, dirty)

    def test_translation_invariance(self):
        dataset = generate(eval_config(seed=13, tau=4))
        shifted_claims = dataset.claims.copy()
        shifted_claims["reporting_year"] += 1
        shifted_records = dataset.records.copy()
        shifted_records["reporting_year"] += 1
        shifted_records = shifted_records.drop(
            columns=["calendar_year", "size_last_year", "total_amount_paid"])
        shifted = Portfolio(ObservationWindow(1, 5, dataset.window.d + 1),
                            shifted_claims, shifted_records)
        models = lambda: [ChainLadderReserver(), DclReserver()]  # noqa: E731
        base = moving_window_eval(dataset, [2, 3], models(), 1, seed=1)
        moved = moving_window_eval(shifted, [3, 4], models(), 1, seed=1)
        np.testing.assert_allclose(base.results["pe"].to_numpy(),
                                   moved.results["pe"].to_numpy(), rtol=1e-9)

    def test_selection_runs_once_and_is_frozen(self):
        dataset = generate(eval_config(seed=41))
        reserver = HrmReserver(
            "hglm",
            a3_layers(dataset.window.d, close_covariates=["factor(dev_year)"],
                      payment_covariates=["factor(dev_year)", "close"],
                      size_covariates=["factor(dev_year)"]),
            candidate_covariates={"size": ["weather"]},
            n_paths=8)
        run = moving_window_eval(dataset, [3, 4], [reserver], 1, seed=2)
        assert "hglm" in run.selections
        assert set(run.selections["hglm"]) <= {"size"}
        # prepare() again must not re-select or duplicate covariates
        size_covs = [s for s in reserver.layers if s.name == "size"][0].covariates
        reserver.prepare(dataset.censored(3), seed=0)
        assert size_covs == [s for s in reserver.layers if s.name == "size"][0].covariates

    def test_hrm_gbm_engine_with_configs(self):
        dataset = generate(eval_config(seed=23))
        gbm_configs = {name: {"n_trees": 20, "min_samples_leaf": 5}
                       for name in ("close", "payment", "size")}
        reserver = HrmReserver(
            "hgbm",
            a3_layers(dataset.window.d, close_covariates=["dev_year", "weather"],
                      payment_covariates=["dev_year", "close"],
                      size_covariates=["dev_year", "weather"], engine="gbm"),
            engine_configs=gbm_configs, n_paths=8)
        run = moving_window_eval(dataset, [3], [reserver], 1, seed=4)
        assert np.isfinite(run.results["predicted"]).all()

    def test_summary_shapes(self):
        dataset = generate(eval_config(seed=19))
        run = moving_window_eval(dataset, [3, 4], [ChainLadderReserver(), DclReserver()],
                                 1, seed=0, cap=100.0)
        table = run.summaries()
        assert set(table["model"]) == {"chain_ladder", "dcl"}
        assert (table["n_dates"] == 2).all()
        assert (run.results["pe"].abs() <= 100.0).all()
