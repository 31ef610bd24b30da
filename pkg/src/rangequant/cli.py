"""Batch driver: one JSON config runs the pipeline end to end.

    rangequant <subcommand> --config <path> [--out <dir>]

Subcommands ``simulate``, ``estimate``, ``fit``, ``roll``, ``forecast``,
``evaluate`` and ``report`` each read the previous stage's CSV outputs
from the run directory and persist their own, so stages are restartable;
``run`` chains them all.  Exit codes: 0 success, 2 config validation
error, 1 stage failure.  ``RANGEQUANT_THREADS`` caps the per-asset
worker pool.

Config keys (all optional except where noted; defaults in brackets):

    seed                int   master seed [0]
    out_dir             str   run directory (or --out)
    data.mode           "simulate" | "csv"  [simulate]
    data.n_assets       int   simulated panel width [4]
    data.days           int   simulated days [600]
    data.sim            object of SimSpec overrides (n, m, sigma, ...)
    data.intraday       {asset: csv path}       (csv mode, required)
    data.vix            csv path of the raw vix level (csv mode)
    data.sp500          csv path of daily returns (csv mode)
    estimator.m         int   prices per subinterval [5]
    estimator.lambda_n_paths  int [200000]
    estimator.lambda_seed     int [seed]
    model.kind          "market" | "asset:<name>" [market]
    model.restricted    [coef names] for the restricted comparison [lag1, sp500]
    fit.taus            estimation grid [0.05..0.95 step 0.05]
    fit.bootstrap_B     int [1000]
    roll.window, roll.step    [500, 1]
    forecast.window, forecast.step  [100, 10]
    forecast.taus       density grid [0.02..0.98 step 0.02]
    forecast.benchmark_innov  "gaussian" | "nig" [nig]
    evaluate.dm_taus    [0.1, 0.5, 0.9]
    evaluate.split_date ISO date for the two-subperiod Berkowitz [none]
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import __version__, pipeline, quantreg
from .density import DEFAULT_TAU_GRID
from .errors import ConfigError, RangequantError
from .evaluate import berkowitz, pit_to_z
from .features import DESIGN_COLUMNS
from .ingest import load_daily, load_intraday
from .quantreg import bootstrap, fit, n_windows, pseudo_r1, roll, xi_w_test
from .rangevol import cached_lambda_grid, day_estimates
from .simulate import SimSpec, simulate, write_intraday_csv, write_truth_csv

ESTIMATION_TAUS = np.round(np.arange(0.05, 0.95 + 1e-9, 0.05), 10)
_FLOAT_FMT = "%.12g"


def thread_cap() -> int:
    env = os.environ.get("RANGEQUANT_THREADS")
    limit = os.cpu_count() or 1
    if env is None:
        return limit
    try:
        return max(1, min(int(env), limit))
    except ValueError as exc:
        raise ConfigError(f"RANGEQUANT_THREADS must be an integer, got {env!r}") from exc


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "rangequant_run"
    data: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    roll: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)
    evaluate: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str, out_override: str | None = None) -> "RunConfig":
        try:
            with open(path) as handle:
                raw = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        for key in raw:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        cfg = cls(**raw)
        if out_override:
            cfg.out_dir = out_override
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        for section in ("data", "estimator", "model", "fit", "roll", "forecast", "evaluate"):
            if not isinstance(getattr(self, section), dict):
                raise ConfigError(f"{section}: must be an object")
        mode = self.data.get("mode", "simulate")
        if mode not in ("simulate", "csv"):
            raise ConfigError("data.mode: must be 'simulate' or 'csv'")
        if mode == "csv":
            if "intraday" not in self.data:
                raise ConfigError("data.intraday: required in csv mode")
            for key in ("vix", "sp500"):
                if key not in self.data:
                    raise ConfigError(f"data.{key}: required in csv mode")
        for key, grid in (("fit.taus", self.taus_fit()), ("forecast.taus", self.taus_density())):
            grid = np.asarray(grid)
            if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
                raise ConfigError(f"{key}: grid must ascend strictly inside (0,1)")
        for key, window, step in (
            ("roll", *self.roll_window_step()),
            ("forecast", *self.forecast_window_step()),
        ):
            if window < 10:
                raise ConfigError(f"{key}.window: too small")
            if step < 1:
                raise ConfigError(f"{key}.step: must be >= 1")
        kind = self.model.get("kind", "market")
        if kind != "market" and not kind.startswith("asset:"):
            raise ConfigError("model.kind: must be 'market' or 'asset:<name>'")
        innov = self.forecast.get("benchmark_innov", "nig")
        if innov not in ("gaussian", "nig"):
            raise ConfigError("forecast.benchmark_innov: must be 'gaussian' or 'nig'")

    # -- derived getters ----------------------------------------------------

    def taus_fit(self) -> np.ndarray:
        return np.asarray(self.fit.get("taus", ESTIMATION_TAUS), dtype=float)

    def taus_density(self) -> np.ndarray:
        return np.asarray(self.forecast.get("taus", DEFAULT_TAU_GRID), dtype=float)

    def roll_window_step(self) -> tuple[int, int]:
        return int(self.roll.get("window", 500)), int(self.roll.get("step", 1))

    def forecast_window_step(self) -> tuple[int, int]:
        return int(self.forecast.get("window", 100)), int(self.forecast.get("step", 10))

    def estimator_m(self) -> int:
        return int(self.estimator.get("m", 5))

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _update_manifest(cfg: RunConfig, stage: str, info: dict) -> None:
    path = cfg.path("manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path) as handle:
            manifest = json.load(handle)
    manifest.setdefault("version", __version__)
    manifest.setdefault("seed", cfg.seed)
    manifest.setdefault("stages", {})[stage] = info
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)


def _write_csv(frame: pd.DataFrame, path: str) -> None:
    frame.to_csv(path, index=False, float_format=_FLOAT_FMT)


# ---------------------------------------------------------------------------
# Stages


def stage_simulate(cfg: RunConfig) -> None:
    started = time.time()
    n_assets = int(cfg.data.get("n_assets", 4))
    days = int(cfg.data.get("days", 600))
    sim_over = dict(cfg.data.get("sim", {}))
    rng = np.random.default_rng(cfg.seed)
    assets = [f"A{i:02d}" for i in range(n_assets)]
    for i, asset in enumerate(assets):
        spec = SimSpec(
            days=days,
            seed=cfg.seed + 1000 + i,
            **{
                k: sim_over.get(k, v)
                for k, v in dict(
                    n=78, m=cfg.estimator_m(), sigma=0.01,
                    vol_model="sqrt_diffusion", jump_intensity=0.3, jump_sd=0.02,
                    noise_omega=2e-4, drift=0.0,
                ).items()
            },
        )
        sims = simulate(spec)
        write_intraday_csv(sims, cfg.path(f"intraday_{asset}.csv"))
        write_truth_csv(sims, cfg.path(f"truth_{asset}.csv"))
    dates = [s.day.date.isoformat() for s in sims]
    # synthetic macro covariates: mean-reverting log-vix, iid market return
    logvix = np.empty(days)
    level = np.log(20.0)
    for t in range(days):
        level = np.log(20.0) + 0.97 * (level - np.log(20.0)) + 0.05 * rng.standard_normal()
        logvix[t] = level
    _write_csv(pd.DataFrame({"date": dates, "value": np.exp(logvix)}), cfg.path("vix.csv"))
    _write_csv(
        pd.DataFrame({"date": dates, "value": 0.01 * rng.standard_normal(days)}),
        cfg.path("sp500.csv"),
    )
    _update_manifest(cfg, "simulate", {
        "assets": assets, "days": days, "seed": cfg.seed,
        "elapsed_s": round(time.time() - started, 3),
    })


def _asset_files(cfg: RunConfig) -> dict[str, str]:
    if cfg.data.get("mode", "simulate") == "csv":
        return dict(cfg.data["intraday"])
    manifest_path = cfg.path("manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError("simulate stage has not run: no manifest in the run directory")
    with open(manifest_path) as handle:
        assets = json.load(handle)["stages"]["simulate"]["assets"]
    return {a: cfg.path(f"intraday_{a}.csv") for a in assets}


def stage_estimate(cfg: RunConfig) -> None:
    started = time.time()
    m = cfg.estimator_m()
    n_paths = int(cfg.estimator.get("lambda_n_paths", 200_000))
    lam_seed = int(cfg.estimator.get("lambda_seed", cfg.seed))
    grid = cached_lambda_grid(m, n_paths, lam_seed, cache_path=cfg.path("lambda_cache.csv"))
    rows = []
    rejected = []
    for asset, path in sorted(_asset_files(cfg).items()):
        loaded = load_intraday(path, m)
        rejected += [(asset, d.isoformat(), why) for d, why in loaded.rejected]
        for day in loaded.days:
            est = day_estimates(day, grid)
            rows.append(
                (asset, day.date.isoformat(), est.rv, est.rrv, est.rbv, est.rqq,
                 est.omega2, est.rrv_bvbc, est.z_tp, est.jump)
            )
    frame = pd.DataFrame(
        rows,
        columns=["asset", "date", "rv", "rrv", "rbv", "rqq", "omega2",
                 "rrv_bvbc", "z_tp", "jump"],
    )
    _write_csv(frame, cfg.path("estimates.csv"))
    _update_manifest(cfg, "estimate", {
        "m": m, "lambda_n_paths": n_paths, "lambda_seed": lam_seed,
        "n_days": len(frame), "rejected": rejected,
        "elapsed_s": round(time.time() - started, 3),
    })


def _load_covariate(cfg: RunConfig, name: str) -> pd.Series:
    if cfg.data.get("mode", "simulate") == "csv":
        return load_daily(cfg.data[name], name)
    return load_daily(cfg.path(f"{name}.csv"), name)


def _build_design(cfg: RunConfig):
    frame = pd.read_csv(cfg.path("estimates.csv"), parse_dates=["date"])
    frame["date"] = frame["date"].dt.date
    vix = _load_covariate(cfg, "vix")
    sp500 = _load_covariate(cfg, "sp500")
    kind = cfg.model.get("kind", "market")
    if kind == "market":
        panel, _, _ = pipeline.market_panel(frame, vix, sp500)
    else:
        panel = pipeline.asset_panel(frame, kind.split(":", 1)[1], vix, sp500)
    return pipeline.design_from_panel(panel)


def stage_fit(cfg: RunConfig) -> None:
    started = time.time()
    design = _build_design(cfg)
    taus = cfg.taus_fit()
    B = int(cfg.fit.get("bootstrap_B", 1000))
    boot_seed = int(cfg.fit.get("bootstrap_seed", cfg.seed + 7))
    restricted_names = tuple(cfg.model.get("restricted", ("lag1", "sp500")))
    extra = tuple(c for c in DESIGN_COLUMNS if c not in restricted_names and c != "const")
    restricted = design.subset(restricted_names)
    coef_rows, comp_rows = [], []
    end_date = design.dates[-1]
    for tau in taus:
        full_fit = fit(design, tau)
        boot = bootstrap(design, tau, B, boot_seed)
        for name, est, se, pv in zip(
            full_fit.column_names, full_fit.beta, boot.se, boot.p_values
        ):
            coef_rows.append((end_date, tau, name, est, se, pv))
        res_fit = fit(restricted, tau)
        test = xi_w_test(full_fit, boot, extra)
        comp_rows.append(
            (tau, pseudo_r1(full_fit, design.y, tau), pseudo_r1(res_fit, design.y, tau),
             test["stat"], test["p_value"])
        )
    _write_csv(
        pd.DataFrame(coef_rows, columns=["window_end", "tau", "coef_name",
                                         "estimate", "se", "p_value"]),
        cfg.path("coefficients.csv"),
    )
    _write_csv(
        pd.DataFrame(comp_rows, columns=["tau", "r1_unrestricted", "r1_restricted",
                                         "xi_w_stat", "xi_w_p_value"]),
        cfg.path("r1_comparison.csv"),
    )
    _update_manifest(cfg, "fit", {
        "taus": list(map(float, taus)), "bootstrap_B": B, "bootstrap_seed": boot_seed,
        "n_obs": design.n_obs, "restricted": list(restricted_names),
        "elapsed_s": round(time.time() - started, 3),
    })


def stage_roll(cfg: RunConfig) -> None:
    started = time.time()
    design = _build_design(cfg)
    window, step = cfg.roll_window_step()
    taus = cfg.taus_fit()
    result = roll(design, taus, window, step)
    rows = []
    for w_i in range(result.count):
        for t_i, tau in enumerate(result.taus):
            for c_i, name in enumerate(result.column_names):
                rows.append((result.end_dates[w_i], tau, name,
                             result.coef_cube[w_i, t_i, c_i], np.nan, np.nan))
    _write_csv(
        pd.DataFrame(rows, columns=["window_end", "tau", "coef_name",
                                    "estimate", "se", "p_value"]),
        cfg.path("rolling_coefficients.csv"),
    )
    _update_manifest(cfg, "roll", {
        "window": window, "step": step, "n_windows": result.count,
        "expected_windows": n_windows(design.n_obs, window, step),
        "n_failures": len(result.failures),
        "elapsed_s": round(time.time() - started, 3),
    })


def stage_forecast(cfg: RunConfig) -> None:
    started = time.time()
    design = _build_design(cfg)
    window, step = cfg.forecast_window_step()
    taus = cfg.taus_density()
    innov = cfg.forecast.get("benchmark_innov", "nig")
    model_recs = pipeline.rolling_quantile_forecasts(design, window, step, taus)
    bench_recs = pipeline.rolling_benchmark_forecasts(design, window, step, taus, innov)
    for name, recs in (("quantile", model_recs), ("harx_gjr", bench_recs)):
        scores = pipeline.score_forecasts(recs, taus)
        scores.insert(0, "model", name)
        _write_csv(scores, cfg.path(f"forecast_scores_{name}.csv"))
        qrows = []
        for rec in recs:
            for tau, q in zip(taus, rec.quantiles):
                qrows.append((name, rec.date, tau, q))
        _write_csv(
            pd.DataFrame(qrows, columns=["model", "date", "tau", "quantile"]),
            cfg.path(f"forecast_quantiles_{name}.csv"),
        )
    _update_manifest(cfg, "forecast", {
        "window": window, "step": step, "benchmark_innov": innov,
        "n_forecasts": len(model_recs),
        "elapsed_s": round(time.time() - started, 3),
    })


def _read_records(cfg: RunConfig, name: str, taus: np.ndarray) -> list[pipeline.ForecastRecord]:
    scores = pd.read_csv(cfg.path(f"forecast_scores_{name}.csv"))
    quants = pd.read_csv(cfg.path(f"forecast_quantiles_{name}.csv"))
    qmap = {d: g.sort_values("tau")["quantile"].to_numpy()
            for d, g in quants.groupby("date")}
    records = []
    for row in scores.itertuples():
        records.append(pipeline.ForecastRecord(
            date=row.date, y=row.y, y_std=row.y_std,
            log_density=row.log_density, pit=row.pit,
            quantiles=qmap[row.date],
        ))
    return records


def stage_evaluate(cfg: RunConfig) -> None:
    started = time.time()
    taus = cfg.taus_density()
    dm_taus = tuple(cfg.evaluate.get("dm_taus", (0.1, 0.5, 0.9)))
    model_recs = _read_records(cfg, "quantile", taus)
    bench_recs = _read_records(cfg, "harx_gjr", taus)
    report = pipeline.evaluate_forecasts(model_recs, bench_recs, taus, dm_taus)
    rows = report.rows("quantile_vs_harx_gjr")
    bench_z = pit_to_z([r.pit for r in bench_recs])
    bench_b = berkowitz(bench_z)
    rows.append({"model": "harx_gjr", "test": "berkowitz", "variant": "",
                 "stat": bench_b["lr"], "p_value": bench_b["p_value"],
                 "n": len(bench_recs)})
    split = cfg.evaluate.get("split_date")
    if split:
        split_date = dt.date.fromisoformat(split)
        z = pit_to_z([r.pit for r in model_recs])
        dates = [pd.Timestamp(r.date).date() for r in model_recs]
        first = z[[d <= split_date for d in dates]]
        second = z[[d > split_date for d in dates]]
        for label, part in (("pre", first), ("post", second)):
            b = berkowitz(part)
            rows.append({"model": "quantile", "test": "berkowitz",
                         "variant": label, "stat": b["lr"],
                         "p_value": b["p_value"], "n": len(part)})
    _write_csv(pd.DataFrame(rows, columns=["model", "test", "variant",
                                           "stat", "p_value", "n"]),
               cfg.path("evaluation.csv"))
    _update_manifest(cfg, "evaluate", {
        "dm_taus": list(map(float, dm_taus)), "n_eval": report.n_eval,
        "elapsed_s": round(time.time() - started, 3),
    })


def stage_report(cfg: RunConfig) -> None:
    """Wide coefficient surfaces (date x tau per coefficient) and summaries."""
    started = time.time()
    rolling = pd.read_csv(cfg.path("rolling_coefficients.csv"))
    outputs = []
    for coef in rolling.coef_name.unique():
        sel = rolling[rolling.coef_name == coef]
        wide = sel.pivot(index="window_end", columns="tau", values="estimate")
        out = cfg.path(f"report_surface_{coef}.csv")
        wide.to_csv(out, float_format=_FLOAT_FMT)
        outputs.append(os.path.basename(out))
    coefs = pd.read_csv(cfg.path("coefficients.csv"))
    key_taus = [t for t in (0.1, 0.5, 0.9) if np.isclose(coefs.tau, t).any()]
    table = coefs[np.isclose(coefs.tau.to_numpy()[:, None], key_taus).any(axis=1)]
    _write_csv(table[["tau", "coef_name", "estimate", "se", "p_value"]],
               cfg.path("report_quantile_table.csv"))
    for name in ("r1_comparison.csv", "evaluation.csv"):
        if os.path.exists(cfg.path(name)):
            frame = pd.read_csv(cfg.path(name))
            _write_csv(frame, cfg.path("report_" + name))
            outputs.append("report_" + name)
    _update_manifest(cfg, "report", {
        "outputs": outputs, "elapsed_s": round(time.time() - started, 3),
    })


STAGES = {
    "simulate": stage_simulate,
    "estimate": stage_estimate,
    "fit": stage_fit,
    "roll": stage_roll,
    "forecast": stage_forecast,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run(cfg: RunConfig, stages=None) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    names = list(STAGES) if stages is None else list(stages)
    if cfg.data.get("mode", "simulate") == "csv" and "simulate" in names and stages is None:
        names.remove("simulate")
    for name in names:
        try:
            STAGES[name](cfg)
        except RangequantError as exc:
            print(f"stage {name} failed: {exc}", file=sys.stderr)
            return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rangequant",
        description="Realized range volatility quantile modeling pipeline",
    )
    parser.add_argument("subcommand", choices=list(STAGES) + ["run"])
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default=None, help="run directory (overrides config)")
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    stages = None if args.subcommand == "run" else [args.subcommand]
    return run(cfg, stages)


if __name__ == "__main__":
    sys.exit(main())
