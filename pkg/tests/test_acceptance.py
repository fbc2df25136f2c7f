"""Acceptance checks: one test per documented end-to-end criterion.

Each test asserts the agreed tolerance bands and reports the measured
values in its failure message, so the ``pytest -v`` lines double as the
acceptance record.
"""

import numpy as np
import pytest

from palmblink import (
    ContinuousTrace,
    Dataset,
    Window,
    cdf_from_cf,
    discretize_trace,
    estimate_markstat,
    estimate_pcf,
    frame_count_moments,
    mean_cocluster_count,
    mean_cocluster_limit,
    pair_lag_cdf,
    pair_lag_cf,
    stoyan_bandwidth,
)
from palmblink.cli import main
from mc_oracle import mc_pair_lag_curves
from test_io_cli import FIT_KNOBS, fit_config, simulate_config

DELTA = 0.04


def _within(value, lo, hi, label):
    assert lo <= value <= hi, f"{label} = {value:.4g} outside [{lo}, {hi}]"


def test_criterion_1_short_lived_rate_recovery(short_study):
    s = short_study.summary
    assert short_study.n_failed == 0, f"{short_study.n_failed} replicates failed"
    _within(s["r_f"]["mean"] * 1e3, 3.75, 4.25, "mean activation rate x 1e3")
    _within(s["r_b"]["mean"], 2.85, 3.35, "mean bleaching rate")
    _within(s["r_d"]["mean"], 5.9, 7.7, "mean dark-entry rate")
    _within(s["r_r"]["mean"], 0.93, 1.25, "mean dark-return rate")
    _within(s["mean_g"]["mean"], 10.9, 11.8, "mean frame count")
    _within(s["bleach_probability"]["mean"], 0.29, 0.34, "mean bleach probability")
    _within(s["lifetime_q99"]["mean"], 12.9, 15.0, "mean lifetime 99% quantile")


def test_criterion_2_long_lived_descriptors(long_study):
    s = long_study.summary
    assert long_study.n_failed == 0, f"{long_study.n_failed} replicates failed"
    _within(s["lifetime_q99"]["mean"], 42.0, 48.0, "mean lifetime 99% quantile")
    _within(s["bleach_probability"]["mean"], 0.175, 0.21, "mean bleach probability")


def test_criterion_3_multi_dark_descriptors(three_dark_study):
    s = three_dark_study.summary
    assert three_dark_study.n_failed == 0, f"{three_dark_study.n_failed} replicates failed"
    _within(s["mean_g"]["mean"], 14.3, 16.6, "mean frame count")
    _within(s["lifetime_q50"]["mean"], 4.1, 5.0, "mean lifetime median")


def test_criterion_4_moment_formulas_match_simulation(short_rates, long_rates):
    # closed-form mean frame count at the short-lived reference rates
    mean_g, _ = frame_count_moments(6.0, 1.0, 3.0, DELTA)
    assert abs(mean_g - 11.294) <= 0.02, f"E[G] = {mean_g:.4f} not within 11.294 +/- 0.02"

    # characteristic function and lag distribution against large simulations
    v = np.linspace(0.05, 70.0, 281)
    u = np.linspace(0.0, 60.0, 121)
    for label, model, args in (
        ("short-lived", short_rates, (6.0, 1.0, 3.0)),
        ("long-lived", long_rates, (12.0, 0.5, 3.0)),
    ):
        cf_mc, cdf_mc, _ = mc_pair_lag_curves(model, DELTA, v, u)
        cf_err = float(np.abs(pair_lag_cf(v, *args, DELTA) - cf_mc).max())
        assert cf_err <= 0.02, f"{label} pair-lag cf sup error {cf_err:.4f} > 0.02"
        cdf_err = float(np.abs(pair_lag_cdf(u, *args, DELTA) - cdf_mc).max())
        assert cdf_err <= 0.02, f"{label} pair-lag cdf sup error {cdf_err:.4f} > 0.02"

    # small-exposure clumping limit
    limit = mean_cocluster_limit(6.0, 1.0, 3.0)
    product = 1e-4 * mean_cocluster_count(6.0, 1.0, 3.0, 1e-4)
    rel = abs(product - limit) / limit
    assert rel <= 0.01, (
        f"delta * cocluster count {product:.6f} deviates {rel:.2%} from limit {limit:.6f}"
    )


def test_criterion_5_inversion_self_test():
    u = np.linspace(0.0, 10.0, 101)
    cdf = cdf_from_cf(u, lambda v: 1.0 / (1.0 - 1j * v), v_max=1e4, v_step=np.pi / 40.0)
    err = float(np.abs(cdf - (1.0 - np.exp(-u))).max())
    assert err < 1e-3, f"unit-exponential inversion sup error {err:.2e} >= 1e-3"


def test_criterion_6_poisson_pcf_unbiased():
    side, duration = 5000.0, 100.0
    win = Window(0.0, side, 0.0, side)
    lam = 2000.0 / win.area
    bw = stoyan_bandwidth(lam)
    r = np.linspace(2.0 * bw, 1250.0, 50)
    rng = np.random.default_rng(606)
    curves = []
    first = None
    for _ in range(20):
        n = int(rng.poisson(2000.0))
        ds = Dataset(
            x=rng.uniform(0.0, side, n),
            y=rng.uniform(0.0, side, n),
            t=rng.uniform(1e-6, duration, n),
            sigma=np.full(n, 10.0),
            window=win,
            exposure=DELTA,
            duration=duration,
        )
        curves.append(estimate_pcf(ds, r, bandwidth=bw))
        if first is None:
            first = ds
    mean_curve = np.mean(curves, axis=0)
    dev = float(np.abs(mean_curve - 1.0).max())
    assert dev <= 0.05, f"mean Poisson pcf deviates {dev:.3f} from 1 (> 5%)"

    # the unit-mark statistic must reproduce the pcf exactly
    plain = estimate_pcf(first, r, bandwidth=bw)
    marked = estimate_markstat(first, lambda ti, tj: np.ones(ti.size), r, bandwidth=bw)
    assert np.array_equal(plain, marked), "unit-mark statistic differs from pcf"


def test_criterion_7_discretization_example():
    trace = ContinuousTrace(
        ((0.5 * DELTA, 1.3 * DELTA), (4.2 * DELTA, 7.6 * DELTA))
    )
    cluster = discretize_trace(trace, DELTA)
    frames = cluster.frame_indices(DELTA)
    np.testing.assert_array_equal(frames, [1, 2, 5, 6, 7, 8])
    assert cluster.g == 6
    assert cluster.t_x == pytest.approx(DELTA)
    np.testing.assert_allclose(
        cluster.offsets, np.array([0.0, 1.0, 4.0, 5.0, 6.0, 7.0]) * DELTA, atol=1e-12
    )


def _run_cli(tmp_path, mode, cfg_path, out_name, threads):
    out = tmp_path / out_name
    code = main(
        [mode, "--config", str(cfg_path), "--out", str(out), "--threads", str(threads)]
    )
    assert code == 0, f"{mode} exited with {code}"
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def _assert_identical(a, b, mode):
    assert set(a) == set(b), f"{mode} produced different file sets"
    diff = [name for name in a if a[name] != b[name]]
    assert not diff, f"{mode} outputs differ across thread counts: {diff}"


def test_criterion_8_cli_byte_determinism(tmp_path):
    import yaml

    sim_cfg, _ = simulate_config(
        tmp_path, layout={"type": "csr", "n_points": 150}, duration=500
    )
    a = _run_cli(tmp_path, "simulate", sim_cfg, "sim_a", 1)
    b = _run_cli(tmp_path, "simulate", sim_cfg, "sim_b", 2)
    _assert_identical(a, b, "simulate")
    # keep one dataset in place for the estimation modes
    (tmp_path / "sim_a" / "localizations.csv").replace(tmp_path / "localizations.csv")

    fit_cfg, _ = fit_config(tmp_path, "localizations.csv", duration=500)
    a = _run_cli(tmp_path, "fit", fit_cfg, "fit_a", 1)
    b = _run_cli(tmp_path, "fit", fit_cfg, "fit_b", 2)
    _assert_identical(a, b, "fit")

    summ_cfg, _ = fit_config(
        tmp_path, "localizations.csv", mode="summaries", duration=500, u_max=20, u_points=10
    )
    a = _run_cli(tmp_path, "summaries", summ_cfg, "summ_a", 1)
    b = _run_cli(tmp_path, "summaries", summ_cfg, "summ_b", 2)
    _assert_identical(a, b, "summaries")

    study = {
        "mode": "refit-study",
        "seed": 4,
        "window": {"x_min": 0, "x_max": 2000, "y_min": 0, "y_max": 2000},
        "exposure": 0.04,
        "duration": 500,
        "kinetics": {"type": "four_state", "r_f": 0.004, "r_d": 6.0, "r_r": 1.0, "r_b": 3.0},
        "layout": {"type": "csr", "n_points": 150},
        "sigma": {"type": "gamma"},
        "n_replicates": 2,
        "fit": dict(FIT_KNOBS),
    }
    study_cfg = tmp_path / "study.yaml"
    study_cfg.write_text(yaml.safe_dump(study), encoding="utf-8")
    a = _run_cli(tmp_path, "refit-study", study_cfg, "study_a", 1)
    b = _run_cli(tmp_path, "refit-study", study_cfg, "study_b", 2)
    _assert_identical(a, b, "refit-study")

    curves = {
        "mode": "model-curves",
        "exposure": 0.04,
        "kinetics": {"type": "four_state", "r_f": 0.004, "r_d": 6.0, "r_r": 1.0, "r_b": 3.0},
        "u_max": 30,
        "u_points": 301,
    }
    curves_cfg = tmp_path / "curves.yaml"
    curves_cfg.write_text(yaml.safe_dump(curves), encoding="utf-8")
    a = _run_cli(tmp_path, "model-curves", curves_cfg, "curves_a", 1)
    b = _run_cli(tmp_path, "model-curves", curves_cfg, "curves_b", 2)
    _assert_identical(a, b, "model-curves")
