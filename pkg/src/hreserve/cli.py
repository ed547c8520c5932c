"""Command-line interface: thin wrappers around the library operations.

Every run writes a manifest (inputs, seed, tool version) into the output
directory so results can be reproduced.  Figures are rendered for the
reporting subcommands next to the CSV/JSON artifacts.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import Portfolio, SchemaConfig, ingest_csv
from .errors import ConfigError, HreserveError, SchemaError
from .evaluation import moving_window_eval, summarize
from .generator import GeneratorConfig, generate
from .glm import fit_gamma, fit_logistic
from .design import DesignBuilder
from .gbm import gbm_importance
from .hrm import HierarchicalModel, LayerSpec, a3_layers, fit_hrm
from .simulate import rbns_reserve, simulate_paths
from .triangles import Triangle, build_triangle, chain_ladder, crm_rbns, dcl_rbns, lrt_bridge, mack_se

DEFAULT_SEED = 42


def _write_manifest(out: Path, subcommand: str, args: argparse.Namespace) -> None:
    inputs = {}
    for key in ("config", "data", "schema", "model", "triangle"):
        value = getattr(args, key, None)
        if value:
            inputs[key] = str(Path(value).resolve())
    manifest = {
        "tool": "hreserve",
        "version": __version__,
        "subcommand": subcommand,
        "argv": sys.argv[1:],
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_portfolio(args) -> Portfolio:
    if not args.data or not args.schema:
        raise ConfigError("this subcommand needs --data and --schema")
    schema = SchemaConfig.from_json(args.schema)
    return ingest_csv(args.data, schema)


def _load_layer_specs(payload: dict, d: int) -> list[LayerSpec]:
    layers = payload.get("layers", "a3")
    if layers == "a3":
        return a3_layers(d, engine=payload.get("engine", "glm"))
    return [LayerSpec(**entry) for entry in layers]


def cmd_generate(args) -> int:
    out = _out_dir(args)
    config = GeneratorConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    portfolio = generate(config)
    portfolio.to_csv(out / "portfolio.csv")
    config.schema().to_json(out / "schema.json")
    _write_manifest(out, "generate", args)
    print(f"generated {portfolio.n_claims} claims / {len(portfolio.records)} records "
          f"-> {out / 'portfolio.csv'}")
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    with open(args.model, encoding="utf-8") as fh:
        payload = json.load(fh)
    specs = _load_layer_specs(payload, portfolio.window.d)
    weights = None
    if payload.get("weighting", "development_year") == "none":
        from .weights import WeightVector

        weights = WeightVector.ones(min(portfolio.window.d, portfolio.window.tau),
                                    payload.get("first_modeled_year", 1))
    model = fit_hrm(portfolio, specs, weights=weights,
                    engine_configs=payload.get("engine_configs"),
                    seed=args.seed, first_modeled_year=payload.get("first_modeled_year", 1))
    model.save(out / "fitted_model.json")

    frame = portfolio.training_frame()
    summary = {"layers": {}, "weights": {str(j): w for j, w in model.weights.items()}}
    for layer in model.layers:
        entry = {"engine": layer.spec.engine,
                 "loglik": layer.weighted_loglik(frame, model.weights)}
        if layer.spec.engine == "glm":
            entry["coefficients"] = layer.engine_fit.coefficients
            entry["dispersion"] = layer.engine_fit.dispersion
        else:
            entry["importance"] = gbm_importance(layer.engine_fit)
        summary["layers"][layer.name] = entry
    with open(out / "fit_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    _write_manifest(out, "fit", args)
    print(f"fitted {len(model.layers)} layers -> {out / 'fitted_model.json'}")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    model = HierarchicalModel.load(args.model)
    result = simulate_paths(model, portfolio, args.paths, seed=args.seed,
                            horizon=args.horizon, n_jobs=args.threads)
    result.frame.to_csv(out / "paths.csv", index=False)
    _write_manifest(out, "simulate", args)
    print(f"simulated {result.n_paths} paths ({len(result.frame)} future records) "
          f"-> {out / 'paths.csv'}")
    return 0


def cmd_reserve(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    model = HierarchicalModel.load(args.model)
    levels = tuple(float(q) for q in args.quantiles.split(","))
    result = simulate_paths(model, portfolio, args.paths, seed=args.seed,
                            horizon=args.horizon, n_jobs=args.threads)
    report = rbns_reserve(result, quantile_levels=levels, horizon=args.horizon)
    with open(out / "reserve.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    pd.DataFrame({"path_id": np.arange(report.n_paths),
                  "total": report.path_totals}).to_csv(out / "path_totals.csv", index=False)
    report.by_calendar_year.to_csv(out / "by_calendar_year.csv", index=False)
    from .plots import save_reserve_figure

    save_reserve_figure(report, out / "reserve_distribution.png")
    _write_manifest(out, "reserve", args)
    print(f"RBNS reserve {report.point_estimate:,.2f} "
          f"({', '.join(f'q{q:g}={v:,.0f}' for q, v in sorted(report.quantiles.items()))}) "
          f"-> {out / 'reserve.json'}")
    return 0


def cmd_triangle(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    triangle = build_triangle(portfolio, args.layer)
    triangle.to_csv(out / "triangle.csv")
    from .plots import save_triangle_figure

    save_triangle_figure(triangle, out / "triangle.png")
    _write_manifest(out, "triangle", args)
    print(f"{args.layer} triangle ({triangle.n_rows}x{triangle.n_dev}) -> {out / 'triangle.csv'}")
    return 0


def cmd_chainladder(args) -> int:
    out = _out_dir(args)
    triangle = Triangle.from_csv(args.triangle)
    cl = chain_ladder(triangle)
    payload = {
        "factors": cl.factors.tolist(),
        "reserve": cl.reserve,
        "reserve_by_row": cl.reserve_by_row.tolist(),
        "ultimates": cl.ultimates.tolist(),
    }
    if triangle.n_rows >= 3:
        mack = mack_se(triangle)
        lo, hi = mack.interval(0.95)
        payload["mack"] = {
            "sigma2": mack.sigma2.tolist(),
            "se_by_row": mack.se_by_row.tolist(),
            "se_total": mack.se_total,
            "interval_95": [lo, hi],
        }
    with open(out / "chainladder.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    pd.DataFrame(cl.completed,
                 index=pd.Index(range(1, triangle.n_rows + 1), name="reporting_year"),
                 columns=[str(j) for j in range(1, triangle.n_dev + 1)]
                 ).to_csv(out / "completed.csv")
    from .plots import save_chainladder_figure

    save_chainladder_figure(cl, out / "chainladder.png")
    _write_manifest(out, "chainladder", args)
    print(f"development factors: {np.round(cl.factors, 4).tolist()}")
    print(f"RBNS reserve: {cl.reserve:,.2f}"
          + (f"  (Mack se {payload['mack']['se_total']:,.2f})" if "mack" in payload else ""))
    return 0


def cmd_dcl(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    result = dcl_rbns(portfolio, horizon=args.horizon)
    payload = {
        "payment_probabilities": result.params.payment_probabilities.tolist(),
        "mean_sizes": result.params.mean_sizes.tolist(),
        "inflation": result.params.inflation.tolist(),
        "reserve": result.reserve,
    }
    with open(out / "dcl.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    _write_manifest(out, "dcl", args)
    print(f"DCL reserve: {result.reserve:,.2f} -> {out / 'dcl.json'}")
    return 0


def cmd_crm(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    result = crm_rbns(portfolio, horizon=args.horizon)
    payload = {
        "payment_intensities": result.params.payment_intensities.tolist(),
        "row_effects": result.params.row_effects.tolist(),
        "col_effects": result.params.col_effects.tolist(),
        "reserve": result.reserve,
    }
    with open(out / "crm.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    _write_manifest(out, "crm", args)
    print(f"CRM reserve: {result.reserve:,.2f} -> {out / 'crm.json'}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    with open(args.config, encoding="utf-8") as fh:
        payload = json.load(fh)
    run = moving_window_eval(portfolio, payload["dates"], payload["models"],
                             payload.get("horizon", 2), seed=args.seed,
                             cap=payload.get("cap"), n_jobs=args.threads)
    run.results.to_csv(out / "evaluation.csv", index=False)
    summary = summarize(run)
    summary.to_json(out / "summary.json", orient="records", indent=2)
    from .plots import save_evaluation_figure

    save_evaluation_figure(run.results, out / "percentage_error.png", cap=run.cap)
    _write_manifest(out, "evaluate", args)
    print(summary.to_string(index=False))
    return 0


def cmd_bridge_test(args) -> int:
    out = _out_dir(args)
    portfolio = _load_portfolio(args)
    frame = portfolio.training_frame()
    response = args.response
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    if not covariates:
        raise ConfigError("--covariates must name at least one covariate")
    if response == "size":
        frame = frame.loc[frame["payment"] == 1]
        fitter = fit_gamma
    elif response in ("close", "payment"):
        fitter = fit_logistic
    else:
        raise ConfigError(f"unknown response {response!r}")

    base = ["factor(reporting_year)", "factor(dev_year)"]
    y = frame[response].to_numpy(dtype=float)
    X0, names0 = DesignBuilder(base).fit_transform(frame)
    X1, names1 = DesignBuilder(base + covariates).fit_transform(frame)
    reduced = fitter(X0, y, columns=names0)
    full = fitter(X1, y, columns=names1)
    dof = len(full.coefficients) - len(reduced.coefficients)
    result = lrt_bridge(full.loglik, reduced.loglik, dof)
    payload = {
        "response": response,
        "covariates": covariates,
        "statistic": result.statistic,
        "dof": result.dof,
        "p_value": result.p_value,
        "reduced_loglik": reduced.loglik,
        "full_loglik": full.loglik,
    }
    with open(out / "bridge_test.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    _write_manifest(out, "bridge-test", args)
    verdict = "rejects" if result.p_value < 0.05 else "does not reject"
    print(f"LRT statistic {result.statistic:.4f} on {result.dof} dof, "
          f"p = {result.p_value:.4g}: {verdict} the aggregate model at the 5% level")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hreserve",
        description="Layered claims reserving: generate, fit, simulate and evaluate.")
    parser.add_argument("--version", action="version", version=f"hreserve {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, data=False, model=False, config=False, triangle=False, seed_default=DEFAULT_SEED):
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=seed_default,
                       help=f"random seed (default: {seed_default})")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads, 0 = auto (default: 1)")
        if data:
            p.add_argument("--data", required=True, help="portfolio CSV")
            p.add_argument("--schema", required=True, help="schema JSON")
        if model:
            p.add_argument("--model", required=True, help="model JSON")
        if config:
            p.add_argument("--config", required=True, help="config JSON")
        if triangle:
            p.add_argument("--triangle", required=True, help="triangle CSV")

    p = sub.add_parser("generate", help="draw a synthetic portfolio from a generator config")
    common(p, config=True, seed_default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit the layered model described by a model config")
    common(p, data=True, model=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate future development from a fitted model")
    common(p, data=True, model=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reserve", help="simulate and report the RBNS reserve with intervals")
    common(p, data=True, model=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--quantiles", default="0.05,0.5,0.95",
                   help="comma-separated quantile levels (default: 0.05,0.5,0.95)")
    p.set_defaults(func=cmd_reserve)

    p = sub.add_parser("triangle", help="aggregate one layer into a runoff triangle")
    common(p, data=True)
    p.add_argument("--layer", default="size", choices=["size", "payment", "close"])
    p.set_defaults(func=cmd_triangle)

    p = sub.add_parser("chainladder", help="chain ladder with Mack standard errors")
    common(p, triangle=True)
    p.set_defaults(func=cmd_chainladder)

    p = sub.add_parser("dcl", help="payment-probability / mean-size / inflation fit")
    common(p, data=True)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_dcl)

    p = sub.add_parser("crm", help="count/size two-layer aggregate fit")
    common(p, data=True)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_crm)

    p = sub.add_parser("evaluate", help="moving-window out-of-time evaluation")
    common(p, data=True, config=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bridge-test", help="LRT of covariate effects against the "
                                           "multiplicative aggregate model")
    common(p, data=True)
    p.add_argument("--response", required=True, choices=["close", "payment", "size"])
    p.add_argument("--covariates", required=True,
                   help="comma-separated covariates for the full model")
    p.set_defaults(func=cmd_bridge_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 3
    except HreserveError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
