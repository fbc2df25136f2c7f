"""Command-line interface.

Every subcommand takes a YAML configuration and an output directory and
writes delimited results, a JSON result document and diagnostic figures into
that directory.  Exit codes: 0 success, 2 configuration or usage error, 3
data error, 4 degenerate fit, 5 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np
import pandas as pd

from . import io, moments, report
from .fit import (
    DegenerateFitError,
    estimate_autoconv,
    estimate_eta,
    refit_study,
    run_fit,
    select_r_grid,
    zeta_hat,
)
from .io import ConfigError, DataError
from .kinetics import KineticRates, ground_truth_descriptors
from .spatial import Dataset, sample_ibcpp, sample_proteins
from .summaries import (
    build_pair_table,
    estimate_signal_time_cdf,
    gamma2_from_cdf,
    lagged_pcf_from_pairs,
    pair_lag_fraction,
    pcf_from_pairs,
    stoyan_bandwidth,
)

__all__ = ["main"]

_SEED_ENV = "PALM_BLINK_SEED"
_THREADS_ENV = "PALM_BLINK_THREADS"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="palm-blink",
        description="Simulate blinking localization data and estimate kinetic rates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "simulate a blinking localization acquisition",
        "fit": "estimate blinking rates from a localization table",
        "summaries": "compute spatial and temporal summaries of a localization table",
        "refit-study": "simulate replicates and re-estimate rates on each",
        "model-curves": "tabulate model lag curves at given rates",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument(
            "--threads", type=int, default=None,
            help="worker processes for replicate studies",
        )
        if name in ("fit", "summaries"):
            sp.add_argument(
                "--trim-start", type=float, default=None,
                help="drop localizations before this time and shift the origin [s]",
            )
    return parser


def _resolve(cli_value, env_name: str, config: dict, key: str, default: int) -> int:
    """Integer setting with precedence: CLI flag, environment, config, default."""
    if cli_value is not None:
        return int(cli_value)
    env = os.environ.get(env_name)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"environment variable {env_name} must be an integer") from exc
    return int(config.get(key, default))


def _data_path(config_path: str, data: str) -> Path:
    path = Path(data)
    return path if path.is_absolute() else Path(config_path).parent / path


def _read_dataset(cfg: dict, args) -> Dataset:
    window = io.config_window(cfg["window"])
    noise_region = io.config_window(cfg["noise_region"]) if "noise_region" in cfg else None
    dataset = io.read_localizations(
        _data_path(args.config, cfg["data"]),
        window,
        cfg["exposure"],
        cfg["duration"],
        noise_region=noise_region,
    )
    trim = args.trim_start if args.trim_start is not None else cfg.get("trim_start", 0.0)
    if trim:
        dataset = dataset.trimmed(float(trim))
    return dataset


def _cmd_simulate(cfg: dict, args, out: Path, seed: int, threads: int) -> int:
    window = io.config_window(cfg["window"])
    noise_region = io.config_window(cfg["noise_region"]) if "noise_region" in cfg else None
    model = io.config_model(cfg["kinetics"])
    layout = io.config_layout(cfg["layout"])
    sigma = io.config_sigma(cfg["sigma"])
    rng = np.random.default_rng(seed)
    proteins = sample_proteins(layout, window, rng)
    dataset = sample_ibcpp(
        proteins, model, window, sigma, cfg["exposure"], cfg["duration"], rng,
        noise_intensity=cfg.get("noise_intensity", 0.0), noise_region=noise_region,
    )
    io.write_localizations(out / "localizations.csv", dataset, include_cluster_id=True)

    truth = ground_truth_descriptors(model, cfg["exposure"], seed=seed)
    n_noise = int((dataset.cluster_id < 0).sum())
    results = {
        "seed": seed,
        "n_proteins": len(proteins),
        "n_localizations": dataset.n,
        "n_signal": dataset.n - n_noise,
        "n_noise": n_noise,
        "truth": {
            "mean_g": truth.mean_g,
            "bleach_probability": truth.bleach_probability,
            "mean_lifetime": truth.mean_lifetime,
            "lifetime_quantiles": {f"{p:g}": q for p, q in truth.lifetime_quantiles.items()},
        },
        "proteins": proteins,
    }
    io.write_json(out / "result.json", io.make_result_document("simulate", cfg, results))
    report.save_simulation_figure(out / "simulation.png", dataset)
    return 0


def _cmd_fit(cfg: dict, args, out: Path, seed: int, threads: int) -> int:
    dataset = _read_dataset(cfg, args)
    fit_config = io.config_fit(cfg, seed=seed)
    result = run_fit(dataset, fit_config)

    diag = result.diagnostics
    io.write_curves(
        out / "pcf.csv",
        {"r": diag["r_grid"], "pcf": diag["pcf"], "autoconv": diag["autoconv"]},
    )
    io.write_curves(
        out / "zeta.csv",
        {
            "u": diag["u_final"],
            "zeta": diag["zeta_final"],
            "zeta_model": diag["zeta_model"],
            "gamma2": diag["gamma2_final"],
            "gamma2_observed": diag["gamma2o_final"],
        },
    )
    results = {
        "seed": seed,
        "rates": {
            "r_f": result.rates.r_f,
            "r_d": result.rates.r_d,
            "r_r": result.rates.r_r,
            "r_b": result.rates.r_b,
        },
        "r_f_raw": result.r_f_raw,
        "objective": result.objective,
        "u_star": result.u_star,
        "pearson_r": diag["pearson_r"],
        "eta": {
            "eta": result.eta.eta,
            "eta_raw": result.eta.eta_raw,
            "lambda_o": result.eta.lambda_o,
            "lambda_e": result.eta.lambda_e,
            "n_roi": result.eta.n_roi,
            "n_noise": result.eta.n_noise,
        },
        "descriptors": {
            "mean_g": result.descriptors.mean_g,
            "bleach_probability": result.descriptors.bleach_probability,
            "mean_lifetime": result.descriptors.mean_lifetime,
            "lifetime_quantiles": {
                f"{p:g}": q for p, q in result.descriptors.lifetime_quantiles.items()
            },
            "n_observed": result.descriptors.n_observed,
            "n_total": result.descriptors.n_total,
        },
    }
    if "timings" in diag:
        results["timings"] = diag["timings"]
    io.write_json(out / "result.json", io.make_result_document("fit", cfg, results))
    report.save_fit_figure(out / "fit.png", result)
    return 0


def _cmd_summaries(cfg: dict, args, out: Path, seed: int, threads: int) -> int:
    dataset = _read_dataset(cfg, args)
    fit_config = io.config_fit(cfg, seed=seed)
    eta_est = estimate_eta(dataset)
    roi = dataset.subset(dataset.in_roi)
    if roi.n < 2:
        raise DataError("need at least two in-window localizations")

    def autoconv_fn(r):
        return estimate_autoconv(roi.sigma, r, fit_config.autoconv_pairs, fit_config.seed)

    bandwidth = stoyan_bandwidth(eta_est.lambda_o, fit_config.bandwidth_coefficient)
    r_grid = select_r_grid(dataset, bandwidth, autoconv_fn, fit_config)
    autoconv = autoconv_fn(r_grid)
    table = build_pair_table(dataset, float(r_grid[-1]) + bandwidth, fit_config.edge_correction)
    pcf = pcf_from_pairs(table, r_grid, bandwidth)

    u = np.linspace(
        0.0,
        cfg.get("u_max", fit_config.initial_u_max),
        cfg.get("u_points", fit_config.initial_u_points),
    )
    lagged = lagged_pcf_from_pairs(table, r_grid, u, bandwidth)
    g2o = pair_lag_fraction(roi.t, u)
    time_cdf = estimate_signal_time_cdf(roi.t, eta_est.eta, dataset.duration)
    g2 = gamma2_from_cdf(time_cdf, u)
    zeta = zeta_hat(lagged, pcf, g2, g2o, autoconv, eta_est.lambda_o, eta_est.eta)

    io.write_curves(out / "pcf.csv", {"r": r_grid, "pcf": pcf, "autoconv": autoconv})
    io.write_curves(
        out / "timestats.csv",
        {"u": u, "zeta": zeta, "gamma2": g2, "gamma2_observed": g2o},
    )
    io.write_curves(
        out / "time_cdf.csv", {"t": time_cdf.support, "cdf": time_cdf.cdf}
    )
    results = {
        "seed": seed,
        "bandwidth": bandwidth,
        "n_localizations": roi.n,
        "n_pairs": int(table.d.size),
        "eta": {
            "eta": eta_est.eta,
            "eta_raw": eta_est.eta_raw,
            "lambda_o": eta_est.lambda_o,
            "lambda_e": eta_est.lambda_e,
        },
    }
    io.write_json(out / "result.json", io.make_result_document("summaries", cfg, results))
    report.save_summaries_figure(out / "summaries.png", r_grid, pcf, autoconv, u, zeta)
    return 0


def _cmd_refit_study(cfg: dict, args, out: Path, seed: int, threads: int) -> int:
    window = io.config_window(cfg["window"])
    noise_region = io.config_window(cfg["noise_region"]) if "noise_region" in cfg else None
    model = io.config_model(cfg["kinetics"])
    layout = io.config_layout(cfg["layout"])
    sigma = io.config_sigma(cfg["sigma"])
    fit_config = io.config_fit(cfg, seed=seed)
    study = refit_study(
        model,
        layout,
        window,
        sigma,
        cfg["exposure"],
        cfg["duration"],
        cfg["n_replicates"],
        seed=seed,
        noise_intensity=cfg.get("noise_intensity", 0.0),
        noise_region=noise_region,
        config=fit_config,
        n_workers=threads,
    )
    pd.DataFrame(study.replicates).to_csv(out / "replicates.csv", index=False)
    truth = {
        "r_f": getattr(model, "r_f", None),
        "r_d": getattr(model, "r_d", None),
        "r_r": getattr(model, "r_r", None),
        "r_b": getattr(model, "r_b", None),
    }
    results = {
        "seed": seed,
        "n_replicates": cfg["n_replicates"],
        "n_failed": study.n_failed,
        "truth": {k: v for k, v in truth.items() if v is not None},
        "summary": study.summary,
    }
    io.write_json(out / "result.json", io.make_result_document("refit-study", cfg, results))
    report.save_study_figure(
        out / "study.png", study, {k: v for k, v in truth.items() if v is not None}
    )
    return 0


def _cmd_model_curves(cfg: dict, args, out: Path, seed: int, threads: int) -> int:
    model = io.config_model(cfg["kinetics"])
    if not isinstance(model, KineticRates):
        raise ConfigError("model curves require four_state kinetics")
    delta = cfg["exposure"]
    u = np.linspace(0.0, cfg.get("u_max", 60.0), cfg.get("u_points", 601))
    lag_cdf = moments.pair_lag_cdf(u, model.r_d, model.r_r, model.r_b, delta)
    v_max = cfg.get("v_max", np.pi / delta)
    v = np.linspace(1e-3, v_max, cfg.get("v_points", 2000))
    cf = moments.pair_lag_cf(v, model.r_d, model.r_r, model.r_b, delta)

    io.write_curves(out / "lag_cdf.csv", {"u": u, "cdf": lag_cdf})
    io.write_curves(
        out / "pair_cf.csv", {"v": v, "re": cf.real, "im": cf.imag, "abs": np.abs(cf)}
    )
    e_g, e_g2 = moments.frame_count_moments(model.r_d, model.r_r, model.r_b, delta)
    results = {
        "mean_g": e_g,
        "second_moment_g": e_g2,
        "mean_cocluster_count": moments.mean_cocluster_count(
            model.r_d, model.r_r, model.r_b, delta
        ),
        "mean_cocluster_limit": moments.mean_cocluster_limit(model.r_d, model.r_r, model.r_b),
    }
    io.write_json(out / "result.json", io.make_result_document("model-curves", cfg, results))
    report.save_model_curves_figure(out / "model_curves.png", u, lag_cdf, v, cf)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "summaries": _cmd_summaries,
    "refit-study": _cmd_refit_study,
    "model-curves": _cmd_model_curves,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = io.load_config(args.config)
        io.validate_config(cfg, args.command)
        seed = _resolve(args.seed, _SEED_ENV, cfg, "seed", 0)
        threads = _resolve(args.threads, _THREADS_ENV, cfg, "threads", 1)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, args, out, seed, threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DegenerateFitError as exc:
        print(f"degenerate fit: {exc}", file=sys.stderr)
        return 4
    except Exception:
        traceback.print_exc()
        return 5


if __name__ == "__main__":
    sys.exit(main())
