"""Simulation and kinetic-rate estimation for blinking PALM localization data.

The package simulates spatio-temporal localization patterns of
photoactivatable fluorophores under camera discretization and estimates the
underlying blinking rates from localization tables by moment-based minimum
contrast, without any parametric model of the protein spatial organization.

Modules
-------
kinetics
    Blinking chain models, trace simulation, frame discretization.
moments
    Closed-form and semi-analytic moments of discretized blinking clusters.
spatial
    Windows, protein layouts, uncertainty distributions, dataset synthesis.
summaries
    Nonparametric spatial and temporal summaries of localization patterns.
fit
    The minimum-contrast estimation pipeline and replicate studies.
io
    Localization tables, run configurations and result documents.
cli
    The ``palm-blink`` command-line interface.
"""

from .fit import (
    ActivationFit,
    DegenerateFitError,
    DerivedDescriptors,
    EtaEstimate,
    FitConfig,
    FitResult,
    RatesFit,
    StudyResult,
    derived_descriptors,
    estimate_activation_rate,
    estimate_autoconv,
    estimate_eta,
    fit_rates,
    model_zeta,
    refit_study,
    run_fit,
    select_r_grid,
    zeta_hat,
)
from .io import ConfigError, DataError, read_localizations, write_localizations
from .kinetics import (
    BlinkCluster,
    ClusterBatch,
    ContinuousTrace,
    DarkState,
    KineticRates,
    MultiDarkModel,
    TruthDescriptors,
    discretize_trace,
    ground_truth_descriptors,
    simulate_cluster_batch,
    simulate_trace,
)
from .moments import (
    cdf_from_cf,
    frame_count_moments,
    mean_cocluster_count,
    mean_cocluster_limit,
    mean_time_corrections,
    pair_lag_cdf,
    pair_lag_cf,
)
from .spatial import (
    ClusterLayout,
    CsrLayout,
    Dataset,
    FiberLayout,
    FixedSigma,
    GammaSigma,
    PointsLayout,
    Window,
    autoconv_exact,
    sample_ibcpp,
    sample_proteins,
)
from .summaries import (
    PairTable,
    SignalTimeCdf,
    build_pair_table,
    debiased_mean_time,
    estimate_markstat,
    estimate_pcf,
    estimate_signal_time_cdf,
    gamma2_from_cdf,
    lagged_pcf_from_pairs,
    min_nn_distance,
    pair_lag_fraction,
    pcf_from_pairs,
    stoyan_bandwidth,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationFit",
    "BlinkCluster",
    "ClusterBatch",
    "ClusterLayout",
    "ConfigError",
    "ContinuousTrace",
    "CsrLayout",
    "DarkState",
    "DataError",
    "Dataset",
    "DegenerateFitError",
    "DerivedDescriptors",
    "EtaEstimate",
    "FiberLayout",
    "FitConfig",
    "FitResult",
    "FixedSigma",
    "GammaSigma",
    "KineticRates",
    "MultiDarkModel",
    "PairTable",
    "PointsLayout",
    "RatesFit",
    "SignalTimeCdf",
    "StudyResult",
    "TruthDescriptors",
    "Window",
    "autoconv_exact",
    "build_pair_table",
    "cdf_from_cf",
    "debiased_mean_time",
    "derived_descriptors",
    "discretize_trace",
    "estimate_activation_rate",
    "estimate_autoconv",
    "estimate_eta",
    "estimate_markstat",
    "estimate_pcf",
    "estimate_signal_time_cdf",
    "fit_rates",
    "frame_count_moments",
    "gamma2_from_cdf",
    "ground_truth_descriptors",
    "lagged_pcf_from_pairs",
    "mean_cocluster_count",
    "mean_cocluster_limit",
    "mean_time_corrections",
    "min_nn_distance",
    "model_zeta",
    "pair_lag_cdf",
    "pair_lag_cf",
    "pair_lag_fraction",
    "pcf_from_pairs",
    "read_localizations",
    "refit_study",
    "run_fit",
    "sample_ibcpp",
    "sample_proteins",
    "select_r_grid",
    "simulate_cluster_batch",
    "simulate_trace",
    "stoyan_bandwidth",
    "write_localizations",
    "zeta_hat",
]
