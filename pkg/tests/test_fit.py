"""Tests for the moment-based rate estimation pipeline."""

import numpy as np
import pytest

from palmblink import (
    CsrLayout,
    Dataset,
    DegenerateFitError,
    FiberLayout,
    FitConfig,
    FixedSigma,
    GammaSigma,
    KineticRates,
    Window,
    derived_descriptors,
    estimate_activation_rate,
    estimate_autoconv,
    estimate_eta,
    fit_rates,
    mean_time_corrections,
    model_zeta,
    pair_lag_cdf,
    refit_study,
    run_fit,
    sample_ibcpp,
    sample_proteins,
    select_r_grid,
    zeta_hat,
)

DELTA = 0.04

# light optimizer settings for the small end-to-end fixtures; the session
# studies exercise the defaults
FAST = FitConfig(
    initial_u_max=30.0,
    initial_u_points=12,
    final_u_points=16,
    optimizer_maxiter=150,
    min_points=100,
)


def small_simulation(seed, scale=1.0):
    win = Window(0.0, 3000.0 * scale, 0.0, 3000.0 * scale)
    region = Window(3200.0 * scale, 4200.0 * scale, 0.0, 3000.0 * scale)
    rng = np.random.default_rng(seed)
    proteins = sample_proteins(CsrLayout(n_points=150), win, rng)
    rates = KineticRates(r_f=0.004, r_d=6.0, r_r=1.0, r_b=3.0)
    # scaling the rate parameter scales the uncertainty draws with the window
    ds = sample_ibcpp(
        proteins,
        rates,
        win,
        GammaSigma(rate=0.375 / scale),
        DELTA,
        500.0,
        rng,
        noise_intensity=2e-6 / scale**2,
        noise_region=region,
    )
    return ds


@pytest.fixture(scope="module")
def small_fit():
    ds = small_simulation(77)
    return ds, run_fit(ds, FAST)


class TestFitConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            FitConfig(edge_correction="isotropic")
        with pytest.raises(ValueError):
            FitConfig(rate_lower=2.0, rate_upper=1.0)
        with pytest.raises(ValueError):
            FitConfig(final_u_points=1)


class TestEta:
    def test_intensity_bookkeeping(self):
        win = Window(0.0, 1000.0, 0.0, 1000.0)
        region = Window(1200.0, 2200.0, 0.0, 1000.0)
        gx, gy = np.meshgrid(np.linspace(25.0, 975.0, 20), np.linspace(25.0, 975.0, 20))
        nx = np.linspace(1250.0, 2150.0, 8)
        x = np.concatenate([gx.ravel(), nx])
        y = np.concatenate([gy.ravel(), np.full(8, 500.0)])
        n = x.size
        ds = Dataset(
            x=x,
            y=y,
            t=np.linspace(1.0, 99.0, n),
            sigma=np.full(n, 10.0),
            window=win,
            exposure=DELTA,
            duration=100.0,
            noise_region=region,
        )
        est = estimate_eta(ds)
        assert est.n_roi == 400
        assert est.n_noise == 8
        assert est.lambda_o == pytest.approx(4e-4)
        assert est.lambda_e == pytest.approx(8e-6)
        assert est.eta == pytest.approx(0.98, abs=1e-12)
        assert est.eta_raw == pytest.approx(0.98, abs=1e-12)

    def test_without_region_warns_and_assumes_pure_signal(self):
        win = Window(0.0, 100.0, 0.0, 100.0)
        ds = Dataset(
            x=np.array([10.0, 20.0]),
            y=np.array([10.0, 20.0]),
            t=np.array([1.0, 2.0]),
            sigma=np.array([5.0, 5.0]),
            window=win,
            exposure=DELTA,
            duration=10.0,
        )
        with pytest.warns(UserWarning):
            est = estimate_eta(ds)
        assert est.eta == 1.0
        assert est.n_noise == 0


class TestAutoconv:
    def test_constant_sigma_closed_form(self):
        sigma = np.full(50, 15.0)
        r = np.array([0.0, 20.0, 60.0])
        got = estimate_autoconv(sigma, r, n_pairs=1_000)
        np.testing.assert_allclose(got, FixedSigma(15.0).autoconv(r), rtol=1e-12)

    def test_matches_full_pair_average(self):
        rng = np.random.default_rng(40)
        sigma = GammaSigma().sample(500, rng)
        r = np.array([0.0, 30.0, 60.0, 100.0])
        got = estimate_autoconv(sigma, r, n_pairs=200_000, seed=1)
        s2 = sigma[:, None] ** 2 + sigma[None, :] ** 2
        full = np.array(
            [np.mean(np.exp(-(ri**2) / (2.0 * s2)) / (2.0 * np.pi * s2)) for ri in r]
        )
        np.testing.assert_allclose(got, full, rtol=0.01)

    def test_deterministic_in_seed(self):
        sigma = np.array([5.0, 9.0, 14.0])
        r = np.linspace(0.0, 50.0, 7)
        a = estimate_autoconv(sigma, r, n_pairs=500, seed=3)
        b = estimate_autoconv(sigma, r, n_pairs=500, seed=3)
        np.testing.assert_array_equal(a, b)


class TestRGrid:
    @staticmethod
    def _row_dataset(n, spacing, side):
        win = Window(0.0, side, 0.0, side)
        x = 10.0 + spacing * np.arange(n)
        return Dataset(
            x=x,
            y=np.full(n, side / 2.0),
            t=np.linspace(1.0, 99.0, n),
            sigma=np.full(n, 10.0),
            window=win,
            exposure=DELTA,
            duration=100.0,
        )

    def test_trivial_spacing_grid(self):
        # bandwidth 5 and unit nearest-neighbor spacing with the relative
        # autoconvolution level crossing near 100 give the grid 10, 11, ..,
        # 100 up to probe resolution
        ds = self._row_dataset(81, 1.0, 300.0)
        s = 100.0 / (2.0 * np.sqrt(np.log(1000.0)))
        grid = select_r_grid(ds, 5.0, FixedSigma(s).autoconv, FitConfig())
        assert grid.size == 91
        np.testing.assert_allclose(grid, np.arange(10.0, 101.0), atol=0.1)

    def test_absolute_threshold_crossing(self):
        ds = self._row_dataset(40, 0.2, 100.0)
        config = FitConfig(autoconv_threshold=1e-3, autoconv_threshold_relative=False)
        grid = select_r_grid(ds, 2.0, FixedSigma(2.0).autoconv, config)
        # exp(-r^2/16) / (16 pi) crosses 1e-3 at r = 6.917
        expected = np.sqrt(16.0 * np.log(1.0 / (1e-3 * 16.0 * np.pi)))
        assert grid[0] == pytest.approx(4.0)
        assert grid[-1] == pytest.approx(expected, abs=0.06)

    def test_zero_spacing_falls_back_to_fixed_count(self):
        ds = self._row_dataset(30, 0.0, 200.0)
        config = FitConfig(fallback_r_points=57)
        grid = select_r_grid(ds, 5.0, FixedSigma(19.0).autoconv, config)
        assert grid.size == 57

    def test_point_cap(self):
        ds = self._row_dataset(200, 0.01, 1000.0)
        config = FitConfig(max_r_points=123)
        grid = select_r_grid(ds, 5.0, FixedSigma(40.0).autoconv, config)
        assert grid.size == 123


class TestZetaProjection:
    def test_recovers_planted_coefficients(self):
        rng = np.random.default_rng(41)
        n_r, n_u = 60, 4
        hh = np.exp(-np.linspace(0.0, 3.0, n_r))
        pcf = 1.0 + 0.1 * rng.standard_normal(n_r)
        g2 = np.array([0.1, 0.2, 0.3, 0.4])
        g2o = g2 * 0.9
        lambda_o, eta = 2e-4, 0.9
        coefs = np.array([0.5, 2.0, -1.0, 7.5])
        lagged = (
            g2[None, :] * (pcf[:, None] - 1.0)
            + g2o[None, :]
            + coefs[None, :] * hh[:, None] * (eta / lambda_o)
        )
        got = zeta_hat(lagged, pcf, g2, g2o, hh, lambda_o, eta)
        np.testing.assert_allclose(got, coefs, rtol=1e-10)

    def test_orthogonal_residual_projects_to_zero(self):
        n_r = 40
        hh = np.linspace(1.0, 0.1, n_r)
        resid = np.ones(n_r)
        resid -= hh * (hh @ resid) / (hh @ hh)
        assert abs(hh @ resid) < 1e-12
        pcf = np.ones(n_r)
        g2 = np.array([0.25])
        lagged = g2[None, :] * (pcf[:, None] - 1.0) + 0.0 + resid[:, None]
        got = zeta_hat(lagged, pcf, g2, np.array([0.0]), hh, 1.0, 1.0)
        assert abs(got[0]) < 1e-12


class TestFitRates:
    def test_recovers_rates_from_model_curve(self):
        u = np.linspace(0.0, 14.0, 30)
        duration = 1200.0
        g2 = u * (2.0 * duration - u) / duration**2
        zeta = model_zeta(u, g2, 6.0, 1.0, 3.0, DELTA)
        fit = fit_rates(u, zeta, g2, DELTA)
        assert fit.r_d == pytest.approx(6.0, rel=0.02)
        assert fit.r_r == pytest.approx(1.0, rel=0.02)
        assert fit.r_b == pytest.approx(3.0, rel=0.02)
        assert fit.objective < 1e-8
        assert fit.starts.shape == (8, 3)

    def test_unreachable_box_raises(self):
        # all multistart corners sit outside a sliver box, so every start is
        # stuck on the penalty plateau
        u = np.linspace(0.0, 10.0, 12)
        g2 = np.zeros(12)
        zeta = model_zeta(u, g2, 6.0, 1.0, 3.0, DELTA)
        config = FitConfig(rate_lower=1e-3, rate_upper=2e-3)
        with pytest.raises(DegenerateFitError):
            fit_rates(u, zeta, g2, DELTA, config)


class TestActivationRate:
    def test_exact_mean_inversion(self):
        a2, b2 = mean_time_corrections(6.0, 1.0, 3.0, DELTA)
        delay = 40.0
        times = np.array([delay + a2 + b2])
        fit = estimate_activation_rate(times, 1.0, 1e9, 6.0, 1.0, 3.0, DELTA)
        assert fit.mean_delay == pytest.approx(delay, rel=1e-12)
        assert fit.rate_raw == pytest.approx(1.0 / delay, rel=1e-12)
        # censoring is negligible against a practically infinite acquisition
        assert fit.rate == pytest.approx(fit.rate_raw, rel=1e-6)

    def test_censoring_correction_solves_mean_equation(self):
        a2, b2 = mean_time_corrections(6.0, 1.0, 3.0, DELTA)
        duration = 300.0
        times = np.array([100.0 + a2 + b2])
        fit = estimate_activation_rate(times, 1.0, duration, 6.0, 1.0, 3.0, DELTA)
        x = fit.rate
        censored_mean = 1.0 / x - duration / np.expm1(x * duration)
        assert censored_mean == pytest.approx(100.0, rel=1e-6)
        # truncation at the acquisition end biases the observed mean delay
        # low, so the naive 1/mean overestimates and the correction shrinks it
        assert fit.rate < fit.rate_raw

    def test_unidentifiable_delay_raises(self):
        a2, b2 = mean_time_corrections(6.0, 1.0, 3.0, DELTA)
        with pytest.raises(DegenerateFitError):
            estimate_activation_rate(
                np.array([0.5 * (a2 + b2)]), 1.0, 100.0, 6.0, 1.0, 3.0, DELTA
            )
        with pytest.raises(DegenerateFitError):
            estimate_activation_rate(
                np.array([99.0 + a2 + b2]), 1.0, 100.0, 6.0, 1.0, 3.0, DELTA
            )


class TestDerivedDescriptors:
    def test_reference_rates(self):
        duration = 1200.0
        rates = KineticRates(np.log(2.0) / duration, 6.307, 0.703, 3.156)
        desc = derived_descriptors(
            rates, eta=0.95, lambda_o=2e-4, area=25e6, duration=duration, delta=DELTA
        )
        assert desc.mean_g == pytest.approx(10.893, abs=0.05)
        assert desc.bleach_probability == pytest.approx(0.333, abs=0.001)
        # with r_f = ln(2) / duration half the proteins activate in time
        assert desc.n_total == pytest.approx(2.0 * desc.n_observed, rel=1e-12)
        assert desc.n_observed == pytest.approx(0.95 * 2e-4 * 25e6 / desc.mean_g)
        e_nb = (6.307 + 3.156) / 3.156
        assert desc.mean_lifetime == pytest.approx(
            e_nb / (6.307 + 3.156) + (e_nb - 1.0) / 0.703, rel=1e-9
        )
        assert set(desc.lifetime_quantiles) == {0.25, 0.5, 0.75, 0.99}

    def test_quantiles_increase(self):
        rates = KineticRates(0.004, 6.0, 1.0, 3.0)
        desc = derived_descriptors(
            rates, eta=1.0, lambda_o=1e-4, area=25e6, duration=1200.0, delta=DELTA
        )
        qs = [desc.lifetime_quantiles[p] for p in (0.25, 0.5, 0.75, 0.99)]
        assert np.all(np.diff(qs) > 0.0)


class TestRunFit:
    def test_small_simulation_recovery(self, small_fit):
        ds, result = small_fit
        assert result.eta.eta > 0.95
        assert 3.0 <= result.rates.r_d <= 12.0
        assert 0.5 <= result.rates.r_r <= 2.5
        assert 1.8 <= result.rates.r_b <= 5.0
        assert 2.5e-3 <= result.rates.r_f <= 7e-3
        assert result.rates.r_f <= result.r_f_raw
        assert 5.0 <= result.u_star <= 60.0
        assert result.diagnostics["pearson_r"] > 0.85
        assert result.descriptors.n_observed > 0.0
        assert result.descriptors.n_total >= result.descriptors.n_observed

    def test_diagnostics_contents(self, small_fit):
        _, result = small_fit
        d = result.diagnostics
        assert d["r_grid"].ndim == 1
        assert d["pcf"].shape == d["r_grid"].shape == d["autoconv"].shape
        assert d["zeta_final"].shape == d["u_final"].shape
        assert d["zeta_model"].shape == d["u_final"].shape
        assert d["n_pairs"] > 0
        assert "timings" not in d

    def test_deterministic_rerun(self, small_fit):
        ds, result = small_fit
        again = run_fit(ds, FAST)
        assert again.rates == result.rates
        assert again.objective == result.objective
        assert again.u_star == result.u_star
        np.testing.assert_array_equal(
            again.diagnostics["zeta_final"], result.diagnostics["zeta_final"]
        )

    def test_spatial_scale_invariance(self, small_fit):
        # nanometers or micrometers must not change the fitted kinetics; a
        # power-of-two scale keeps the arithmetic exactly representable
        _, result = small_fit
        ds2 = small_simulation(77, scale=2.0)
        result2 = run_fit(ds2, FAST)
        assert result2.rates.r_d == pytest.approx(result.rates.r_d, rel=1e-9)
        assert result2.rates.r_r == pytest.approx(result.rates.r_r, rel=1e-9)
        assert result2.rates.r_b == pytest.approx(result.rates.r_b, rel=1e-9)
        assert result2.rates.r_f == pytest.approx(result.rates.r_f, rel=1e-9)

    def test_low_signal_fraction_raises(self):
        win = Window(0.0, 1000.0, 0.0, 1000.0)
        region = Window(1200.0, 2200.0, 0.0, 1000.0)
        rng = np.random.default_rng(42)
        n = 600
        x = np.concatenate(
            [rng.uniform(0.0, 1000.0, n // 2), rng.uniform(1200.0, 2200.0, n // 2)]
        )
        y = rng.uniform(0.0, 1000.0, n)
        ds = Dataset(
            x=x,
            y=y,
            t=rng.uniform(1e-3, 100.0, n),
            sigma=np.full(n, 10.0),
            window=win,
            exposure=DELTA,
            duration=100.0,
            noise_region=region,
        )
        with pytest.raises(DegenerateFitError, match="signal fraction"):
            run_fit(ds, FAST)

    def test_record_timings(self, small_fit):
        ds, _ = small_fit
        config = FitConfig(
            initial_u_max=30.0,
            initial_u_points=12,
            final_u_points=16,
            optimizer_maxiter=150,
            min_points=100,
            record_timings=True,
        )
        result = run_fit(ds, config)
        assert "timings" in result.diagnostics
        assert result.diagnostics["timings"]["optimize"] > 0.0


class TestRefitStudy:
    def test_worker_count_invariance(self):
        kwargs = dict(
            model=KineticRates(0.004, 6.0, 1.0, 3.0),
            layout=CsrLayout(n_points=150),
            window=Window(0.0, 3000.0, 0.0, 3000.0),
            sigma=GammaSigma(),
            exposure=DELTA,
            duration=500.0,
            n_replicates=2,
            seed=88,
            config=FAST,
        )
        serial = refit_study(n_workers=1, **kwargs)
        parallel = refit_study(n_workers=2, **kwargs)
        assert serial.n_failed == 0
        for a, b in zip(serial.replicates, parallel.replicates):
            assert a == b
        assert serial.summary == parallel.summary

    def test_study_structure(self, short_study):
        assert len(short_study.replicates) == 20
        assert short_study.n_failed == 0
        assert [row["replicate"] for row in short_study.replicates] == list(range(20))
        assert {"r_f", "r_d", "r_r", "r_b", "mean_g", "lifetime_q99"} <= set(
            short_study.summary
        )
        for row in short_study.replicates:
            assert row["error"] == ""
            assert row["n_localizations"] > 2000

    def test_short_lived_recovery_bands(self, short_study):
        s = short_study.summary
        assert 6.0 <= s["r_d"]["mean"] <= 7.7
        assert 0.94 <= s["r_r"]["mean"] <= 1.24
        assert 2.85 <= s["r_b"]["mean"] <= 3.35
        assert 3.83e-3 <= s["r_f"]["mean"] <= 4.14e-3

    def test_fiber_layout_with_noise_recovery(self):
        # rates must be recoverable without modeling the protein layout:
        # filamentous structure plus uniform noise
        win = Window(0.0, 5000.0, 0.0, 5000.0)
        region = Window(5200.0, 6200.0, 0.0, 5000.0)
        rng = np.random.default_rng(90)
        proteins = sample_proteins(FiberLayout(n_points=500), win, rng)
        ds = sample_ibcpp(
            proteins,
            KineticRates(0.004, 6.0, 1.0, 3.0),
            win,
            GammaSigma(),
            DELTA,
            1200.0,
            rng,
            noise_intensity=2e-6,
            noise_region=region,
        )
        result = run_fit(ds)
        assert result.eta.eta < 1.0
        assert 3.0e-3 <= result.rates.r_f <= 4.5e-3
