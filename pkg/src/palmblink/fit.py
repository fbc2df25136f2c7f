"""Blinking-rate estimation from localization data by minimum contrast.

The estimator needs no model of the protein positions.  Its central quantity
is a projected pair-excess statistic: at each spatial scale the pair
correlation restricted to pairs closer in time than ``u`` is decomposed into
a protein-structure part, a noise part and a same-molecule part whose spatial
profile is the localization-error autoconvolution.  Projecting onto that
profile isolates, for every time cutoff ``u``, the quantity
``(F_lag(u) - gamma2(u)) * mean_cocluster_count`` where ``F_lag`` is the
same-molecule frame-lag distribution.  Matching the projections to their
model counterparts over a grid of cutoffs by least squares yields the dark
and bleaching rates; the activation rate follows from the debiased mean
observation time.

:func:`run_fit` wires the full two-pass pipeline; the individual stages are
exposed for inspection and testing.
"""

from __future__ import annotations

import concurrent.futures
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import bisect, minimize

from . import moments
from .kinetics import KineticRates, Model
from .spatial import Dataset, Layout, SigmaDistribution, Window, sample_ibcpp, sample_proteins
from .summaries import (
    build_pair_table,
    debiased_mean_time,
    estimate_signal_time_cdf,
    gamma2_from_cdf,
    lagged_pcf_from_pairs,
    min_nn_distance,
    pair_lag_fraction,
    pcf_from_pairs,
    stoyan_bandwidth,
)

__all__ = [
    "DegenerateFitError",
    "FitConfig",
    "EtaEstimate",
    "estimate_eta",
    "estimate_autoconv",
    "select_r_grid",
    "zeta_hat",
    "model_zeta",
    "RatesFit",
    "fit_rates",
    "ActivationFit",
    "estimate_activation_rate",
    "DerivedDescriptors",
    "derived_descriptors",
    "FitResult",
    "run_fit",
    "StudyResult",
    "refit_study",
]


class DegenerateFitError(RuntimeError):
    """Raised when the data cannot support a meaningful rate fit."""


@dataclass(frozen=True)
class FitConfig:
    """Tuning knobs of the estimation pipeline; defaults suit typical data.

    Attributes
    ----------
    bandwidth_coefficient : float
        Coefficient of the intensity-based pair-correlation bandwidth rule.
    edge_correction : str
        ``"translation"`` or ``"none"``.
    autoconv_pairs : int
        Number of random uncertainty pairs in the autoconvolution estimate.
    autoconv_threshold : float
        Level below which the autoconvolution is considered negligible; by
        default relative to its value at distance zero.
    autoconv_threshold_relative : bool
        Interpret the threshold relative to the zero-distance value (scale
        free) rather than as an absolute density per nm^2.
    max_r_points, fallback_r_points : int
        Cap on the spatial grid size, and its size when the nearest-neighbor
        spacing rule degenerates.
    initial_u_max : float
        Upper end of the provisional time-cutoff grid, s.
    initial_u_points, final_u_points : int
        Number of cutoffs in the provisional and final grids.
    lag_cdf_cutoff : float
        Lag-distribution level defining the final grid's upper end.
    u_star_max, u_star_step : float
        Search range and step for that upper end, s.
    rate_lower, rate_upper : float
        Box constraints for the three fitted rates, 1/s.
    frame_load_cap : float
        Upper bound on ``exposure * (r_d + r_b)`` during the search, keeping
        the optimizer inside the moment approximations' validity region.
    start_low, start_high : float
        The multistart initial points are all corners of this cube.
    optimizer_maxiter : int
        Per-start Nelder-Mead iteration cap.
    optimizer_xatol, optimizer_fatol : float
        Nelder-Mead convergence tolerances.
    min_signal_fraction : float
        Estimated signal fractions at or below this level abort the fit.
    min_points : int
        Below this many in-window localizations a low-power warning is given.
    quantile_samples : int
        Monte Carlo sample size for derived lifetime quantiles.
    quantile_probs : tuple of float
        Probabilities of the reported lifetime quantiles.
    seed : int
        Seed for the autoconvolution pair draw and the quantile sampling.
    record_timings : bool
        Collect wall-clock stage timings into the result diagnostics.
    """

    bandwidth_coefficient: float = 0.15
    edge_correction: str = "translation"
    autoconv_pairs: int = 100_000
    autoconv_threshold: float = 1e-3
    autoconv_threshold_relative: bool = True
    max_r_points: int = 2000
    fallback_r_points: int = 500
    initial_u_max: float = 60.0
    initial_u_points: int = 30
    final_u_points: int = 50
    lag_cdf_cutoff: float = 0.99
    u_star_max: float = 200.0
    u_star_step: float = 0.1
    rate_lower: float = 1e-3
    rate_upper: float = 50.0
    frame_load_cap: float = 2.0
    start_low: float = 0.1
    start_high: float = 10.0
    optimizer_maxiter: int = 400
    optimizer_xatol: float = 1e-4
    optimizer_fatol: float = 1e-10
    min_signal_fraction: float = 0.05
    min_points: int = 200
    quantile_samples: int = 100_000
    quantile_probs: tuple[float, ...] = (0.25, 0.5, 0.75, 0.99)
    seed: int = 0
    record_timings: bool = False

    def __post_init__(self) -> None:
        if self.edge_correction not in ("translation", "none"):
            raise ValueError("edge_correction must be 'translation' or 'none'")
        if not 0 < self.rate_lower < self.rate_upper:
            raise ValueError("rate bounds must satisfy 0 < lower < upper")
        if self.initial_u_points < 2 or self.final_u_points < 2:
            raise ValueError("cutoff grids need at least two points")


@dataclass(frozen=True)
class EtaEstimate:
    """Signal fraction and intensity estimates.

    ``eta`` is the clipped working value; ``eta_raw`` keeps the unclipped
    intensity ratio for diagnostics.
    """

    eta: float
    eta_raw: float
    lambda_o: float
    lambda_e: float
    n_roi: int
    n_noise: int


def estimate_eta(dataset: Dataset) -> EtaEstimate:
    """Estimate the signal fraction from a pure-noise region.

    The noise intensity observed on the noise region is assumed to hold on
    the observation window too, making the signal fraction one minus the
    intensity ratio.  Without a noise region the dataset is taken to be
    noise free, with a warning.

    Returns
    -------
    EtaEstimate
    """
    in_roi = dataset.in_roi
    n_roi = int(in_roi.sum())
    lambda_o = n_roi / dataset.window.area
    if dataset.noise_region is None:
        warnings.warn(
            "no pure-noise region declared; assuming a noise-free acquisition",
            stacklevel=2,
        )
        return EtaEstimate(1.0, 1.0, lambda_o, 0.0, n_roi, 0)
    in_noise = dataset.noise_region.contains(dataset.x, dataset.y) & ~in_roi
    n_noise = int(in_noise.sum())
    lambda_e = n_noise / dataset.noise_region.area
    eta_raw = 1.0 - lambda_e / lambda_o if lambda_o > 0 else 0.0
    eta = float(np.clip(eta_raw, 0.01, 1.0))
    return EtaEstimate(eta, float(eta_raw), lambda_o, lambda_e, n_roi, n_noise)


def estimate_autoconv(
    sigma: np.ndarray,
    r: np.ndarray,
    n_pairs: int = 100_000,
    seed: int = 0,
) -> np.ndarray:
    """Localization-error autoconvolution from observed uncertainties.

    Draws ``n_pairs`` independent uncertainty pairs from the empirical
    distribution (with replacement) and averages the two-Gaussian
    autoconvolution kernel over them at each distance.

    Parameters
    ----------
    sigma : array_like
        Observed localization uncertainties, nm.
    r : array_like
        Distances, nm.
    n_pairs : int
        Monte Carlo pair count.
    seed : int
        Seed of the dedicated pair-sampling generator.

    Returns
    -------
    numpy.ndarray
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0:
        raise ValueError("need at least one uncertainty value")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, sigma.size, size=n_pairs)
    j = rng.integers(0, sigma.size, size=n_pairs)
    s2 = sigma[i] ** 2 + sigma[j] ** 2
    inv_half = 0.5 / s2
    density = 1.0 / (2.0 * np.pi * s2)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty(r.size)
    for k in range(r.size):
        out[k] = np.mean(np.exp(-(r[k] ** 2) * inv_half) * density)
    return out


def select_r_grid(
    dataset: Dataset,
    bandwidth: float,
    autoconv_fn,
    config: FitConfig,
) -> np.ndarray:
    """Spatial evaluation grid for the projection statistics.

    The grid starts at twice the kernel bandwidth (below which the pair
    correlation is estimation-dominated), ends where the error
    autoconvolution drops below the configured threshold (beyond which the
    projection carries no same-molecule signal), and is spaced by the
    smallest nearest-neighbor distance, capped in size.  If the
    autoconvolution never crosses the threshold inside the half-window the
    grid falls back to a short range around the bandwidth scale.

    Parameters
    ----------
    dataset : Dataset
    bandwidth : float
    autoconv_fn : callable
        Maps a distance array to autoconvolution values.
    config : FitConfig

    Returns
    -------
    numpy.ndarray
    """
    r_lo = 2.0 * bandwidth
    level = config.autoconv_threshold
    if config.autoconv_threshold_relative:
        level *= float(autoconv_fn(np.array([0.0]))[0])
    upper = min(dataset.window.width, dataset.window.height) / 2.0
    probes = np.linspace(r_lo, upper, 1024)
    vals = autoconv_fn(probes)
    below = np.nonzero(vals < level)[0]
    r_hi = float(probes[below[0]]) if below.size else 4.0 * bandwidth
    if r_hi <= r_lo:
        r_hi = 4.0 * bandwidth

    ds = dataset.subset(dataset.in_roi)
    step = min_nn_distance(ds.x, ds.y)
    if step > 0:
        n_pts = int(np.floor((r_hi - r_lo) / step)) + 1
    else:
        n_pts = config.fallback_r_points
    n_pts = int(np.clip(n_pts, 2, config.max_r_points))
    return np.linspace(r_lo, r_hi, n_pts)


def zeta_hat(
    lagged_pcf: np.ndarray,
    pcf: np.ndarray,
    gamma2_u: np.ndarray,
    gamma2o_u: np.ndarray,
    autoconv: np.ndarray,
    lambda_o: float,
    eta: float,
) -> np.ndarray:
    """Project the same-molecule pair excess onto the error autoconvolution.

    For each time cutoff the expected non-molecule contributions (protein
    structure scaled by the signal-pair probability, plus the observed-pair
    time fraction) are removed from the lag-restricted pair correlation, and
    the residual spatial curve is projected onto the autoconvolution shape.

    Parameters
    ----------
    lagged_pcf : numpy.ndarray
        Matrix ``(len(r), len(u))`` of lag-restricted pair correlations.
    pcf : numpy.ndarray
        Unrestricted pair correlation on the same distance grid.
    gamma2_u : numpy.ndarray
        Signal-pair time-closeness probabilities per cutoff.
    gamma2o_u : numpy.ndarray
        Observed-pair time-closeness fractions per cutoff.
    autoconv : numpy.ndarray
        Error autoconvolution on the distance grid.
    lambda_o : float
        Observed intensity, points per nm^2.
    eta : float
        Signal fraction.

    Returns
    -------
    numpy.ndarray
        One projected value per time cutoff.
    """
    residual = lagged_pcf - gamma2_u[None, :] * (pcf[:, None] - 1.0) - gamma2o_u[None, :]
    num = (residual * autoconv[:, None]).sum(axis=0)
    den = float((autoconv**2).sum())
    return lambda_o / eta * num / den


def model_zeta(
    u: np.ndarray,
    gamma2_u: np.ndarray,
    r_d: float,
    r_r: float,
    r_b: float,
    delta: float,
) -> np.ndarray:
    """Model counterpart of :func:`zeta_hat` at given rates."""
    lag_cdf = moments.pair_lag_cdf(np.asarray(u, dtype=float), r_d, r_r, r_b, delta)
    n_c = moments.mean_cocluster_count(r_d, r_r, r_b, delta)
    return (lag_cdf - gamma2_u) * n_c


@dataclass(frozen=True)
class RatesFit:
    """Outcome of the three-rate contrast minimization."""

    r_d: float
    r_r: float
    r_b: float
    objective: float
    starts: np.ndarray = field(repr=False)
    start_objectives: np.ndarray = field(repr=False)


def fit_rates(
    u: np.ndarray,
    zeta: np.ndarray,
    gamma2_u: np.ndarray,
    delta: float,
    config: FitConfig | None = None,
) -> RatesFit:
    """Least-squares fit of the dark and bleaching rates to the projections.

    Minimizes the squared distance between the projected statistics and
    their model counterparts over the rate box, by Nelder-Mead from every
    corner of the multistart cube.  Out-of-box proposals and excessive frame
    loads are rejected through a large penalty.

    Raises
    ------
    DegenerateFitError
        If no start produces a finite in-box objective.
    """
    config = config or FitConfig()
    u = np.asarray(u, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    gamma2_u = np.asarray(gamma2_u, dtype=float)
    lo, hi = config.rate_lower, config.rate_upper
    penalty = 1e12

    def objective(theta: np.ndarray) -> float:
        r_d, r_r, r_b = theta
        if not (lo <= r_d <= hi and lo <= r_r <= hi and lo <= r_b <= hi):
            return penalty
        if delta * (r_d + r_b) > config.frame_load_cap:
            return penalty
        resid = zeta - model_zeta(u, gamma2_u, r_d, r_r, r_b, delta)
        return float(np.sum(resid**2))

    corners = [
        np.array([a, b, c])
        for a in (config.start_low, config.start_high)
        for b in (config.start_low, config.start_high)
        for c in (config.start_low, config.start_high)
    ]
    starts = np.array(corners)
    fvals = np.empty(len(corners))
    best = None
    for k, x0 in enumerate(corners):
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options=dict(
                maxiter=config.optimizer_maxiter,
                xatol=config.optimizer_xatol,
                fatol=config.optimizer_fatol,
            ),
        )
        fvals[k] = res.fun
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= penalty:
        raise DegenerateFitError("no multistart point reached a finite in-box objective")
    r_d, r_r, r_b = best.x
    return RatesFit(
        r_d=float(r_d),
        r_r=float(r_r),
        r_b=float(r_b),
        objective=float(best.fun),
        starts=starts,
        start_objectives=fvals,
    )


@dataclass(frozen=True)
class ActivationFit:
    """Activation-rate estimate before and after censoring correction."""

    rate_raw: float
    rate: float
    mean_delay: float


def estimate_activation_rate(
    times: np.ndarray,
    eta: float,
    duration: float,
    r_d: float,
    r_r: float,
    r_b: float,
    delta: float,
) -> ActivationFit:
    """Activation rate from the mean observation time.

    The debiased mean observation time exceeds the mean activation delay by
    two model offsets (within-visit discretization and accumulated earlier
    visits); subtracting them leaves the mean delay, whose reciprocal is the
    raw rate.  Because only activations before the end of the acquisition
    are observed, the delay mean is censored; the corrected rate solves the
    censored-mean equation by bisection.

    Raises
    ------
    DegenerateFitError
        If the corrected delay is nonpositive or exceeds half the duration,
        where the censored-mean equation has no solution.
    """
    half_gamma2d = debiased_mean_time(times, eta, duration)
    a2, b2 = moments.mean_time_corrections(r_d, r_r, r_b, delta)
    mean_delay = half_gamma2d - a2 - b2
    if mean_delay <= 0.0:
        raise DegenerateFitError(
            "mean observation time is smaller than the blinking offsets; "
            "activation rate is not identifiable"
        )
    rate_raw = 1.0 / mean_delay
    if mean_delay >= duration / 2.0 * (1.0 - 1e-12):
        raise DegenerateFitError(
            "mean activation delay reaches half the acquisition; censoring "
            "correction has no solution"
        )

    def censored_gap(x: float) -> float:
        xb = x * duration
        tail = duration / math.expm1(xb) if xb < 700.0 else 0.0
        return 1.0 / x - tail - mean_delay

    if censored_gap(10.0) > 0.0:
        # censoring is negligible at rates beyond the bracket
        rate = rate_raw
    else:
        rate = float(bisect(censored_gap, 1e-8, 10.0, rtol=1e-8))
    return ActivationFit(rate_raw=float(rate_raw), rate=float(rate), mean_delay=float(mean_delay))


@dataclass(frozen=True)
class DerivedDescriptors:
    """Artifact descriptors implied by fitted rates.

    ``n_observed`` estimates the number of proteins imaged during the
    acquisition; ``n_total`` additionally accounts for proteins whose
    activation was censored by the end of the acquisition.
    """

    mean_g: float
    bleach_probability: float
    mean_lifetime: float
    lifetime_quantiles: dict[float, float]
    n_observed: float
    n_total: float


def derived_descriptors(
    rates: KineticRates,
    eta: float,
    lambda_o: float,
    area: float,
    duration: float,
    delta: float,
    quantile_samples: int = 100_000,
    quantile_probs: tuple[float, ...] = (0.25, 0.5, 0.75, 0.99),
    seed: int = 0,
) -> DerivedDescriptors:
    """Blinking-artifact descriptors at given (typically fitted) rates.

    The mean frame count and mean lifetime are closed form; the lifetime
    quantiles are Monte Carlo over the continuous activation-to-bleach
    lifetime (a geometric sum of visit and dark durations).

    Parameters
    ----------
    rates : KineticRates
        Four rates; ``r_f`` should be the censoring-corrected estimate.
    eta : float
        Signal fraction.
    lambda_o : float
        Observed intensity, points per nm^2.
    area : float
        Window area, nm^2.
    duration : float
        Acquisition length, s.
    delta : float
        Exposure time, s.
    quantile_samples, quantile_probs, seed
        Monte Carlo controls for the lifetime quantiles.

    Returns
    -------
    DerivedDescriptors
    """
    e_g, _ = moments.frame_count_moments(rates.r_d, rates.r_r, rates.r_b, delta)
    p = rates.bleach_probability
    e_wf = 1.0 / rates.fluorescent_exit_rate
    e_wr = 1.0 / rates.r_r
    mean_lifetime = e_wf / p + (1.0 / p - 1.0) * e_wr

    rng = np.random.default_rng(seed)
    nb = rng.geometric(p, size=quantile_samples)
    lifetimes = rng.gamma(nb, e_wf) + rng.gamma(nb - 1, e_wr)
    qs = np.quantile(lifetimes, quantile_probs)

    n_observed = eta * lambda_o * area / e_g
    n_total = n_observed / -math.expm1(-rates.r_f * duration)
    return DerivedDescriptors(
        mean_g=float(e_g),
        bleach_probability=float(p),
        mean_lifetime=float(mean_lifetime),
        lifetime_quantiles={float(pq): float(q) for pq, q in zip(quantile_probs, qs)},
        n_observed=float(n_observed),
        n_total=float(n_total),
    )


@dataclass(frozen=True)
class FitResult:
    """Full outcome of the two-pass estimation pipeline."""

    rates: KineticRates
    r_f_raw: float
    objective: float
    eta: EtaEstimate
    u_star: float
    descriptors: DerivedDescriptors
    diagnostics: dict = field(repr=False)
    config: FitConfig = field(repr=False)


def run_fit(dataset: Dataset, config: FitConfig | None = None) -> FitResult:
    """Estimate all four blinking rates and derived descriptors from data.

    Pipeline: estimate the signal fraction, build the error-autoconvolution
    estimate and the spatial grid, compute the projection statistics on a
    provisional time-cutoff grid, fit the three post-activation rates, choose
    the final cutoff range so it just covers the fitted lag distribution,
    refit on the final grid, then estimate the activation rate and derive
    the artifact descriptors.

    Parameters
    ----------
    dataset : Dataset
    config : FitConfig, optional

    Returns
    -------
    FitResult

    Raises
    ------
    DegenerateFitError
        If the signal fraction is too low, the contrast fit fails at every
        start, or the activation rate is not identifiable.
    """
    config = config or FitConfig()
    timings: dict[str, float] = {}
    clock = time.perf_counter

    def mark(stage: str, t0: float) -> float:
        t1 = clock()
        if config.record_timings:
            timings[stage] = timings.get(stage, 0.0) + (t1 - t0)
        return t1

    t0 = clock()
    eta_est = estimate_eta(dataset)
    if eta_est.eta_raw <= config.min_signal_fraction:
        raise DegenerateFitError(
            f"estimated signal fraction {eta_est.eta_raw:.3f} is at or below "
            f"the minimum {config.min_signal_fraction}"
        )
    roi = dataset.subset(dataset.in_roi)
    if roi.n < 2:
        raise DegenerateFitError("need at least two in-window localizations")
    if roi.n < config.min_points:
        warnings.warn(
            f"only {roi.n} in-window localizations; estimates will be noisy",
            stacklevel=2,
        )
    t0 = mark("eta", t0)

    def autoconv_fn(r: np.ndarray) -> np.ndarray:
        return estimate_autoconv(roi.sigma, r, config.autoconv_pairs, config.seed)

    bandwidth = stoyan_bandwidth(eta_est.lambda_o, config.bandwidth_coefficient)
    r_grid = select_r_grid(dataset, bandwidth, autoconv_fn, config)
    autoconv = autoconv_fn(r_grid)
    t0 = mark("autoconv", t0)

    table = build_pair_table(dataset, float(r_grid[-1]) + bandwidth, config.edge_correction)
    pcf = pcf_from_pairs(table, r_grid, bandwidth)
    time_cdf = estimate_signal_time_cdf(roi.t, eta_est.eta, dataset.duration)
    t0 = mark("summaries", t0)

    delta = dataset.exposure

    def pass_statistics(u: np.ndarray):
        lagged = lagged_pcf_from_pairs(table, r_grid, u, bandwidth)
        g2o = pair_lag_fraction(roi.t, u)
        g2 = gamma2_from_cdf(time_cdf, u)
        z = zeta_hat(lagged, pcf, g2, g2o, autoconv, eta_est.lambda_o, eta_est.eta)
        return g2o, g2, z

    u_initial = np.linspace(0.0, config.initial_u_max, config.initial_u_points)
    _, g2_1, zeta_1 = pass_statistics(u_initial)
    t0 = mark("summaries", t0)
    fit_1 = fit_rates(u_initial, zeta_1, g2_1, delta, config)
    t0 = mark("optimize", t0)

    u_probe = np.arange(0.0, config.u_star_max, config.u_star_step)
    lag_cdf = moments.pair_lag_cdf(u_probe, fit_1.r_d, fit_1.r_r, fit_1.r_b, delta)
    above = np.nonzero(lag_cdf > config.lag_cdf_cutoff)[0]
    u_star = float(u_probe[above[0]]) if above.size else config.initial_u_max

    u_final = np.linspace(0.0, u_star, config.final_u_points)
    g2o_2, g2_2, zeta_2 = pass_statistics(u_final)
    t0 = mark("summaries", t0)
    fit_2 = fit_rates(u_final, zeta_2, g2_2, delta, config)
    t0 = mark("optimize", t0)

    activation = estimate_activation_rate(
        roi.t, eta_est.eta, dataset.duration, fit_2.r_d, fit_2.r_r, fit_2.r_b, delta
    )
    rates = KineticRates(activation.rate, fit_2.r_d, fit_2.r_r, fit_2.r_b)
    descriptors = derived_descriptors(
        rates,
        eta_est.eta,
        eta_est.lambda_o,
        dataset.window.area,
        dataset.duration,
        delta,
        config.quantile_samples,
        config.quantile_probs,
        config.seed,
    )
    t0 = mark("derive", t0)

    zeta_model = model_zeta(u_final, g2_2, fit_2.r_d, fit_2.r_r, fit_2.r_b, delta)
    with np.errstate(invalid="ignore"):
        corr = np.corrcoef(zeta_2, zeta_model)[0, 1]
    diagnostics = {
        "bandwidth": bandwidth,
        "r_grid": r_grid,
        "autoconv": autoconv,
        "pcf": pcf,
        "time_cdf_support": time_cdf.support,
        "time_cdf_values": time_cdf.cdf,
        "u_initial": u_initial,
        "zeta_initial": zeta_1,
        "gamma2_initial": g2_1,
        "initial_fit": fit_1,
        "u_final": u_final,
        "zeta_final": zeta_2,
        "gamma2_final": g2_2,
        "gamma2o_final": g2o_2,
        "zeta_model": zeta_model,
        "final_fit": fit_2,
        "activation": activation,
        "pearson_r": float(corr) if np.isfinite(corr) else float("nan"),
        "n_pairs": int(table.d.size),
    }
    if config.record_timings:
        diagnostics["timings"] = timings
    return FitResult(
        rates=rates,
        r_f_raw=activation.rate_raw,
        objective=fit_2.objective,
        eta=eta_est,
        u_star=u_star,
        descriptors=descriptors,
        diagnostics=diagnostics,
        config=config,
    )


@dataclass(frozen=True)
class StudyResult:
    """Replicated simulate-and-refit study.

    ``replicates`` holds one record per replicate (NaNs and an ``error``
    entry where a replicate degenerated); ``summary`` maps each numeric field
    to its mean and standard deviation over successful replicates.
    """

    replicates: list[dict]
    summary: dict[str, dict[str, float]]
    n_failed: int


_STUDY_FIELDS = (
    "r_f",
    "r_f_raw",
    "r_d",
    "r_r",
    "r_b",
    "eta",
    "mean_g",
    "bleach_probability",
    "u_star",
    "objective",
    "n_localizations",
)


def _study_replicate(args) -> dict:
    (index, seed_seq, model, layout, window, sigma, exposure, duration,
     noise_intensity, noise_region, config) = args
    rng = np.random.default_rng(seed_seq)
    proteins = sample_proteins(layout, window, rng)
    dataset = sample_ibcpp(
        proteins, model, window, sigma, exposure, duration, rng,
        noise_intensity=noise_intensity, noise_region=noise_region,
    )
    row: dict = {"replicate": index}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_fit(dataset, config)
    except DegenerateFitError as exc:
        row.update({name: float("nan") for name in _STUDY_FIELDS})
        row["error"] = str(exc)
        return row
    row.update(
        r_f=result.rates.r_f,
        r_f_raw=result.r_f_raw,
        r_d=result.rates.r_d,
        r_r=result.rates.r_r,
        r_b=result.rates.r_b,
        eta=result.eta.eta,
        mean_g=result.descriptors.mean_g,
        bleach_probability=result.descriptors.bleach_probability,
        u_star=result.u_star,
        objective=result.objective,
        n_localizations=float(result.eta.n_roi),
    )
    for pq, q in result.descriptors.lifetime_quantiles.items():
        row[f"lifetime_q{int(round(pq * 100)):02d}"] = q
    row["error"] = ""
    return row


def refit_study(
    model: Model,
    layout: Layout,
    window: Window,
    sigma: SigmaDistribution,
    exposure: float,
    duration: float,
    n_replicates: int,
    seed: int = 0,
    noise_intensity: float = 0.0,
    noise_region: Window | None = None,
    config: FitConfig | None = None,
    n_workers: int = 1,
) -> StudyResult:
    """Simulate replicate acquisitions and re-estimate the rates on each.

    Every replicate gets an independent child seed spawned from ``seed``, so
    results do not depend on the number of workers; replicate records are
    assembled in replicate order.

    Parameters
    ----------
    model : KineticRates or MultiDarkModel
        Ground-truth kinetics.
    layout : Layout
        Ground-truth protein layout.
    window : Window
    sigma : FixedSigma or GammaSigma
    exposure, duration : float
        Frame time and acquisition length, s.
    n_replicates : int
    seed : int
    noise_intensity : float
        Noise points per nm^2.
    noise_region : Window, optional
    config : FitConfig, optional
    n_workers : int
        Worker processes; 1 runs in-process.

    Returns
    -------
    StudyResult
    """
    if n_replicates <= 0:
        raise ValueError("n_replicates must be positive")
    config = config or FitConfig()
    children = np.random.SeedSequence(seed).spawn(n_replicates)
    jobs = [
        (
            i,
            children[i],
            model,
            layout,
            window,
            sigma,
            exposure,
            duration,
            noise_intensity,
            noise_region,
            config,
        )
        for i in range(n_replicates)
    ]
    if n_workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_study_replicate, jobs))
    else:
        rows = [_study_replicate(job) for job in jobs]
    rows.sort(key=lambda row: row["replicate"])

    ok = [row for row in rows if not row["error"]]
    summary: dict[str, dict[str, float]] = {}
    if ok:
        for name in ok[0]:
            if name in ("replicate", "error"):
                continue
            vals = np.array([row[name] for row in ok], dtype=float)
            summary[name] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1) if len(ok) > 1 else 0.0)}
    return StudyResult(replicates=rows, summary=summary, n_failed=len(rows) - len(ok))
