"""Model-side moments of blinking clusters under camera discretization.

All quantities here are closed-form or semi-analytic functions of the three
post-activation rates (dark entry ``r_d``, dark return ``r_r``, bleaching
``r_b``) and the exposure time ``delta``.  They describe the active-frame
count ``G`` of one molecule and the time lag between two active frames of the
same molecule:

* :func:`frame_count_moments` gives E[G] and E[G^2] through second order in
  the visit and dark durations.
* :func:`mean_cocluster_count` gives E[G^2]/E[G] - 1, the expected number of
  additional localizations sharing a typical localization's parent molecule.
* :func:`pair_lag_cf` gives an accurate closed-form approximation of the
  characteristic function of the absolute frame-time lag of a uniformly
  chosen ordered frame pair within one cluster.
* :func:`pair_lag_cdf` inverts that characteristic function numerically to
  the lag distribution function, the temporal ingredient of the contrast fit.

The inversion uses the midpoint-discretized Gil-Pelaez formula, exposed
separately as :func:`cdf_from_cf` so it can be validated against cases with
known distribution functions.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "frame_count_moments",
    "mean_cocluster_count",
    "mean_cocluster_limit",
    "pair_lag_cf",
    "pair_lag_cdf",
    "cdf_from_cf",
    "mean_time_corrections",
]

# Below this angular frequency the closed form for pair_lag_cf loses all
# significant digits to cancellation; the exact limit there is 1.
_V_FLOOR = 1e-3


def _nb_moments(p: float) -> tuple[float, float]:
    """First two moments of the geometric visit count on {1, 2, ...}."""
    return 1.0 / p, (2.0 - p) / p**2


def frame_count_moments(
    r_d: float, r_r: float, r_b: float, delta: float
) -> tuple[float, float]:
    """Mean and second moment of the active-frame count of one molecule.

    Valid to second order in the exposure time; accurate whenever
    ``delta * (r_d + r_b)`` is small to moderate (say below 2).

    Parameters
    ----------
    r_d, r_r, r_b : float
        Dark-entry, dark-return and bleaching rates, 1/s.
    delta : float
        Exposure time, s.

    Returns
    -------
    (float, float)
        ``(E[G], E[G**2])``.
    """
    p = r_b / (r_d + r_b)
    e_nb, e_nb2 = _nb_moments(p)
    e_nbnbm1 = e_nb2 - e_nb
    e_nbm1sq = e_nb2 - 2.0 * e_nb + 1.0
    theta = r_d + r_b
    a = 1.0 / (theta * delta)
    var_wf = 1.0 / theta**2

    # probability-like overlap moments of one dark period against the frame
    # lattice; rho is the dark rate in frame units
    rho = r_r * delta
    mu1 = 1.0 - (1.0 - np.exp(-rho)) / rho
    mu2 = 1.0 - 2.0 * mu1 / rho

    e_g = e_nb * (a + 1.0) - (e_nb - 1.0) * mu1
    e_g2 = (
        e_nb2 * (a + 1.0) ** 2
        + e_nb * var_wf / delta**2
        + e_nbm1sq * mu1**2
        + (e_nb - 1.0) * (mu2 - mu1**2)
        - 2.0 * e_nbnbm1 * (a + 1.0) * mu1
    )
    return float(e_g), float(e_g2)


def mean_cocluster_count(r_d: float, r_r: float, r_b: float, delta: float) -> float:
    """Expected number of other localizations from a typical point's molecule.

    Equals ``E[G**2] / E[G] - 1``; this is the clumping descriptor that links
    the spatial pair excess of the localization pattern to the blinking rates.
    """
    e_g, e_g2 = frame_count_moments(r_d, r_r, r_b, delta)
    return e_g2 / e_g - 1.0


def mean_cocluster_limit(r_d: float, r_r: float, r_b: float) -> float:
    """Small-exposure limit of ``delta * mean_cocluster_count``, in seconds.

    As the exposure time shrinks, the clumping descriptor diverges like
    ``1/delta``; the limit of the product depends only on the visit count and
    visit duration moments.
    """
    p = r_b / (r_d + r_b)
    e_nb, e_nb2 = _nb_moments(p)
    theta = r_d + r_b
    e_wf, e_wf2 = 1.0 / theta, 2.0 / theta**2
    return (e_nb * e_wf2 + (e_nb2 - e_nb) * e_wf**2) / (e_nb * e_wf)


def _one_minus_exp_neg(x: np.ndarray) -> np.ndarray:
    """Numerically stable ``1 - exp(-1j * x)`` for real ``x``."""
    s = np.sin(0.5 * x)
    return 2.0 * s * (s + 1j * np.cos(0.5 * x))


def pair_lag_cf(
    v: np.ndarray, r_d: float, r_r: float, r_b: float, delta: float
) -> np.ndarray:
    """Characteristic function of the absolute lag between same-cluster frames.

    For a molecule with at least two active frames, pick an ordered pair of
    its frames uniformly (size-biased over molecules, as a typical localization
    pair is); the lag is the nonnegative difference of the two frame times.
    The returned value approximates ``E[exp(1j * v * lag)]`` to second order
    in the exposure time.

    Parameters
    ----------
    v : array_like
        Angular frequencies, 1/s.  Values below about 1e-3 are clamped to the
        exact limit 1 because the closed form cancels catastrophically there.
    r_d, r_r, r_b : float
        Dark-entry, dark-return and bleaching rates, 1/s.
    delta : float
        Exposure time, s.  The expression has poles at multiples of
        ``2 * pi / delta``; callers must keep ``|v|`` away from those.

    Returns
    -------
    numpy.ndarray
        Complex values, Hermitian in ``v``.
    """
    v = np.asarray(v, dtype=float)
    small = np.abs(v) < _V_FLOOR
    vs = np.where(small, _V_FLOOR, v)

    theta = r_d + r_b
    p = r_b / theta
    e_nb, e_nb2 = _nb_moments(p)
    e_wf, e_wf2 = 1.0 / theta, 2.0 / theta**2
    a = e_wf / delta

    phi_f = theta / (theta - 1j * vs)
    phi_r = r_r / (r_r - 1j * vs)
    z = phi_f * phi_r
    one_minus_ed = _one_minus_exp_neg(vs * delta)
    dl = one_minus_ed**2
    e_d = np.exp(-1j * vs * delta)

    half = np.exp(-0.5j * vs * delta)
    term_a = 2.0 * e_nb * (phi_f * half - (a - 0.5) * one_minus_ed - 1.0) / dl
    e_z_nb = p * z / (1.0 - (1.0 - p) * z)
    term_b = phi_r * (e_z_nb - 1.0 - e_nb * (z - 1.0))
    term_c = 2.0 * e_d**2 / dl * ((phi_f / half - 1.0) / (z - 1.0)) ** 2
    denom = e_nb2 * (a + 0.5) ** 2 + e_nb * ((e_wf2 - e_wf**2) / delta**2 - a - 0.5)

    out = (term_a + term_b * term_c) / denom
    return np.where(small, 1.0 + 0.0j, out)


def cdf_from_cf(
    u: np.ndarray,
    cf,
    v_max: float,
    v_step: float,
) -> np.ndarray:
    """Distribution function from a characteristic function, Gil-Pelaez style.

    Evaluates ``F(u) = 1/2 - (1/pi) * sum_j Im(exp(-1j v_j u) cf(v_j)) / v_j * h``
    on the midpoint grid ``v_j = (j + 1/2) h`` up to ``v_max``, then enforces
    monotonicity by a running maximum and clips to [0, 1].

    Parameters
    ----------
    u : array_like
        Sorted evaluation points.
    cf : callable
        Maps an array of frequencies to complex characteristic function values.
    v_max : float
        Integration cutoff.
    v_step : float
        Grid step ``h``; should be at most ``pi / (4 * max(u))`` so the
        periodic images of the inversion stay clear of the evaluation range.

    Returns
    -------
    numpy.ndarray
        Values in [0, 1], nondecreasing along ``u``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_v = int(np.ceil(v_max / v_step))
    v = (np.arange(n_v) + 0.5) * v_step
    kernel = cf(v) / v

    out = np.empty(u.size)
    # chunked outer product keeps memory bounded for long frequency grids
    chunk = max(1, int(4_000_000 // max(n_v, 1)))
    for lo in range(0, u.size, chunk):
        blk = u[lo : lo + chunk, None]
        s = np.imag(np.exp(-1j * blk * v[None, :]) @ kernel)
        out[lo : lo + chunk] = 0.5 - s * v_step / np.pi
    return np.clip(np.maximum.accumulate(out), 0.0, 1.0)


def pair_lag_cdf(
    u: np.ndarray,
    r_d: float,
    r_r: float,
    r_b: float,
    delta: float,
    v_max: float | None = None,
    v_step: float | None = None,
) -> np.ndarray:
    """Distribution function of the absolute same-cluster frame lag.

    Numerically inverts :func:`pair_lag_cf`.  The default frequency cutoff is
    ``pi / delta``, half the lag lattice frequency, which keeps the grid well
    away from the poles of the closed form while resolving the distribution
    down to single-frame lags.

    Parameters
    ----------
    u : array_like
        Sorted lag values, s.
    r_d, r_r, r_b : float
        Dark-entry, dark-return and bleaching rates, 1/s.
    delta : float
        Exposure time, s.
    v_max, v_step : float, optional
        Override the frequency cutoff and step.

    Returns
    -------
    numpy.ndarray
        Values in [0, 1], nondecreasing along ``u``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if v_max is None:
        v_max = np.pi / delta
    if v_step is None:
        u_max = max(float(u[-1]), 1.0)
        v_step = np.pi / (4.0 * u_max)
    return cdf_from_cf(u, lambda v: pair_lag_cf(v, r_d, r_r, r_b, delta), v_max, v_step)


def mean_time_corrections(
    r_d: float, r_r: float, r_b: float, delta: float
) -> tuple[float, float]:
    """Offsets linking a localization's mean time to its activation time.

    A typical localization's frame time exceeds the molecule's activation time
    by the within-visit discretization offset (first term) plus the
    accumulated earlier visits and dark periods (second term).  Subtracting
    both from the debiased mean observation time leaves the mean activation
    delay, whose reciprocal is the activation rate.

    Returns
    -------
    (float, float)
        The within-visit and across-visit offsets, in seconds.
    """
    theta = r_d + r_b
    e_wf, e_wf2 = 1.0 / theta, 2.0 / theta**2
    a = e_wf / delta
    p = r_b / theta
    e_nb, e_nb2 = _nb_moments(p)
    e_nbnbm1 = e_nb2 - e_nb

    a2 = (e_wf2 / (2.0 * delta) + e_wf + 3.0 * delta / 8.0) / (a + 0.5)
    b2 = (0.5 * e_nbnbm1 * (e_wf + 1.0 / r_r) + e_nb * delta / 2.0) / e_nb
    return float(a2), float(b2)
