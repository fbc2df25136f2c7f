"""Spatial synthesis of blinking localization datasets.

A ground-truth protein pattern is laid out in a rectangular observation
window, each protein blinks according to a kinetic model, and every active
frame yields one localization displaced by an isotropic Gaussian localization
error whose standard deviation is drawn per localization.  Optional uniform
noise localizations (with uniform times) are superposed on the window and on
an optional disjoint pure-noise region used downstream to estimate the signal
fraction.

The localization-error distribution also determines the autoconvolution of
the error density, the spatial kernel against which pair statistics are
projected during fitting; exact curves for the supported distributions are
provided by :func:`autoconv_exact`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, roots_genlaguerre

from .kinetics import Model, simulate_cluster_batch

__all__ = [
    "Window",
    "Dataset",
    "FixedSigma",
    "GammaSigma",
    "autoconv_exact",
    "CsrLayout",
    "ClusterLayout",
    "FiberLayout",
    "PointsLayout",
    "sample_proteins",
    "sample_ibcpp",
]


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular region, coordinates in nm."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("window must have positive extent in both axes")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points in the window, shape (n, 2)."""
        x = rng.uniform(self.x_min, self.x_max, size=n)
        y = rng.uniform(self.y_min, self.y_max, size=n)
        return np.column_stack([x, y])


@dataclass(frozen=True)
class Dataset:
    """A localization dataset with acquisition geometry.

    Attributes
    ----------
    x, y : numpy.ndarray
        Localization coordinates, nm.
    t : numpy.ndarray
        Localization times in (0, duration], s.
    sigma : numpy.ndarray
        Localization uncertainty (standard deviation) per point, nm.
    window : Window
        Region of interest containing the signal.
    exposure : float
        Camera exposure (frame) time, s.
    duration : float
        Acquisition length, s.
    noise_region : Window or None
        Optional region disjoint from the window containing pure noise.
    cluster_id : numpy.ndarray or None
        Ground-truth parent molecule per localization when known; -1 marks
        noise points.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    sigma: np.ndarray
    window: Window
    exposure: float
    duration: float
    noise_region: Window | None = None
    cluster_id: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = len(self.x)
        for name in ("y", "t", "sigma"):
            if len(getattr(self, name)) != n:
                raise ValueError("coordinate, time and sigma arrays must have equal length")
        if self.cluster_id is not None and len(self.cluster_id) != n:
            raise ValueError("cluster_id length mismatch")
        if self.exposure <= 0 or self.duration <= 0:
            raise ValueError("exposure and duration must be positive")
        for name in ("x", "y", "t", "sigma"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if n and (self.t.min() <= 0 or self.t.max() > self.duration + 1e-9):
            raise ValueError("times must lie in (0, duration]")
        if n and np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        inside = self.window.contains(self.x, self.y)
        if self.noise_region is not None:
            inside |= self.noise_region.contains(self.x, self.y)
        if not np.all(inside):
            raise ValueError("localizations must lie in the window or the noise region")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def in_roi(self) -> np.ndarray:
        """Mask of localizations inside the observation window."""
        return self.window.contains(self.x, self.y)

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            x=self.x[mask],
            y=self.y[mask],
            t=self.t[mask],
            sigma=self.sigma[mask],
            window=self.window,
            exposure=self.exposure,
            duration=self.duration,
            noise_region=self.noise_region,
            cluster_id=None if self.cluster_id is None else self.cluster_id[mask],
        )

    def trimmed(self, t_start: float) -> "Dataset":
        """Drop localizations at or before ``t_start`` and shift the origin.

        Useful for discarding an initial acquisition segment; the remaining
        times and the duration are both reduced by ``t_start``.
        """
        if t_start <= 0:
            return self
        if t_start >= self.duration:
            raise ValueError("t_start must be smaller than the duration")
        keep = self.t > t_start
        return Dataset(
            x=self.x[keep],
            y=self.y[keep],
            t=self.t[keep] - t_start,
            sigma=self.sigma[keep],
            window=self.window,
            exposure=self.exposure,
            duration=self.duration - t_start,
            noise_region=self.noise_region,
            cluster_id=None if self.cluster_id is None else self.cluster_id[keep],
        )


@dataclass(frozen=True)
class FixedSigma:
    """Degenerate localization-uncertainty distribution at one value, nm."""

    value: float

    def __post_init__(self) -> None:
        if self.value <= 0:
            raise ValueError("sigma must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, float(self.value))

    def autoconv(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s2 = 2.0 * self.value**2
        return np.exp(-(r**2) / (2.0 * s2)) / (2.0 * np.pi * s2)


@dataclass(frozen=True)
class GammaSigma:
    """Gamma-distributed localization uncertainty.

    Parameterized by shape and rate (1/scale); the default matches typical
    single-molecule uncertainty spreads with mean ``shape / rate`` nm.
    """

    shape: float = 6.5
    rate: float = 0.375

    def __post_init__(self) -> None:
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("shape and rate must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=n)

    def autoconv(self, r: np.ndarray, n_nodes: int = 64) -> np.ndarray:
        """Exact error-density autoconvolution by Gauss-Laguerre quadrature.

        Averages ``exp(-r^2 / (2 (s1^2 + s2^2))) / (2 pi (s1^2 + s2^2))`` over
        two independent uncertainties using a tensorized generalized
        Gauss-Laguerre rule matched to the Gamma weight.
        """
        r = np.asarray(r, dtype=float)
        nodes, weights = roots_genlaguerre(n_nodes, self.shape - 1.0)
        weights = weights / math.exp(gammaln(self.shape))
        s = nodes / self.rate
        s2sum = s[:, None] ** 2 + s[None, :] ** 2
        wprod = weights[:, None] * weights[None, :]
        vals = np.exp(-r[..., None, None] ** 2 / (2.0 * s2sum)) / (2.0 * np.pi * s2sum)
        return np.sum(vals * wprod, axis=(-2, -1))


SigmaDistribution = FixedSigma | GammaSigma


def autoconv_exact(sigma_distribution: SigmaDistribution | float, r: np.ndarray) -> np.ndarray:
    """Autoconvolution of the localization-error density at distances ``r``.

    Accepts a distribution object or a bare fixed sigma value.
    """
    if isinstance(sigma_distribution, (int, float)):
        sigma_distribution = FixedSigma(float(sigma_distribution))
    return sigma_distribution.autoconv(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CsrLayout:
    """Completely random protein positions, uniform in the window."""

    n_points: int

    def __post_init__(self) -> None:
        if self.n_points <= 0:
            raise ValueError("n_points must be positive")


@dataclass(frozen=True)
class ClusterLayout:
    """Uniform background plus Gaussian clusters around uniform centers."""

    n_background: int
    n_clusters: int
    points_per_cluster: int
    cluster_sd: float

    def __post_init__(self) -> None:
        if min(self.n_background, self.n_clusters, self.points_per_cluster) < 0:
            raise ValueError("counts must be nonnegative")
        if self.cluster_sd <= 0:
            raise ValueError("cluster_sd must be positive")


@dataclass(frozen=True)
class FiberLayout:
    """Points jittered around smooth random-walk paths crossing the window."""

    n_points: int
    n_fibers: int = 3
    jitter_sd: float = 20.0
    n_steps: int = 400
    turn_sd: float = 0.15

    def __post_init__(self) -> None:
        if self.n_points <= 0 or self.n_fibers <= 0 or self.n_steps < 2:
            raise ValueError("n_points, n_fibers and n_steps must be positive")
        if self.jitter_sd <= 0:
            raise ValueError("jitter_sd must be positive")


@dataclass(frozen=True)
class PointsLayout:
    """Explicit protein coordinates, shape (n, 2), nm."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, 2) array")
        object.__setattr__(self, "points", pts)


Layout = CsrLayout | ClusterLayout | FiberLayout | PointsLayout


def _resample_inside(
    base: np.ndarray,
    sd: float,
    window: Window,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gaussian displacements of ``base`` redrawn until all land inside."""
    pts = base + rng.normal(0.0, sd, size=base.shape)
    bad = ~window.contains(pts[:, 0], pts[:, 1])
    while np.any(bad):
        pts[bad] = base[bad] + rng.normal(0.0, sd, size=(int(bad.sum()), 2))
        bad = ~window.contains(pts[:, 0], pts[:, 1])
    return pts


def _fiber_paths(layout: FiberLayout, window: Window, rng: np.random.Generator) -> np.ndarray:
    """Vertices of all fibers, shape (n_fibers * n_steps, 2), reflected at borders."""
    step = math.hypot(window.width, window.height) / layout.n_steps
    all_pts = []
    for _ in range(layout.n_fibers):
        pos = window.sample(1, rng)[0]
        angle = rng.uniform(0.0, 2.0 * np.pi)
        turns = rng.normal(0.0, layout.turn_sd, size=layout.n_steps - 1)
        pts = np.empty((layout.n_steps, 2))
        pts[0] = pos
        for i, dang in enumerate(turns):
            angle += dang
            nxt = pts[i] + step * np.array([math.cos(angle), math.sin(angle)])
            # reflect off window borders to keep paths inside
            if not (window.x_min <= nxt[0] <= window.x_max):
                angle = math.pi - angle
                nxt[0] = np.clip(nxt[0], window.x_min, window.x_max)
            if not (window.y_min <= nxt[1] <= window.y_max):
                angle = -angle
                nxt[1] = np.clip(nxt[1], window.y_min, window.y_max)
            pts[i + 1] = nxt
        all_pts.append(pts)
    return np.concatenate(all_pts, axis=0)


def sample_proteins(layout: Layout, window: Window, rng: np.random.Generator) -> np.ndarray:
    """Protein ground-truth positions for a layout, shape (n, 2), all inside.

    Gaussian displacements (cluster scatter, fiber jitter) are redrawn for
    points that would leave the window, so the returned count is exact.
    """
    if isinstance(layout, CsrLayout):
        return window.sample(layout.n_points, rng)
    if isinstance(layout, ClusterLayout):
        bg = window.sample(layout.n_background, rng)
        centers = window.sample(layout.n_clusters, rng)
        base = np.repeat(centers, layout.points_per_cluster, axis=0)
        clustered = _resample_inside(base, layout.cluster_sd, window, rng)
        return np.concatenate([bg, clustered], axis=0)
    if isinstance(layout, FiberLayout):
        verts = _fiber_paths(layout, window, rng)
        pick = rng.integers(0, len(verts), size=layout.n_points)
        return _resample_inside(verts[pick], layout.jitter_sd, window, rng)
    if isinstance(layout, PointsLayout):
        pts = layout.points
        if not np.all(window.contains(pts[:, 0], pts[:, 1])):
            raise ValueError("explicit points must lie inside the window")
        return pts.copy()
    raise TypeError(f"unsupported layout {type(layout).__name__}")


def sample_ibcpp(
    proteins: np.ndarray,
    model: Model,
    window: Window,
    sigma: SigmaDistribution,
    exposure: float,
    duration: float,
    rng: np.random.Generator,
    noise_intensity: float = 0.0,
    noise_region: Window | None = None,
) -> Dataset:
    """Simulate the observed localization pattern of blinking proteins.

    Each protein produces one localization per active frame at its position
    plus isotropic Gaussian error; frames after the acquisition end are lost,
    and localizations scattering outside the window are cropped as a real
    region-of-interest cut would.  Uniform space-time noise of the given
    intensity (points per nm^2 over the whole acquisition) is added on the
    window and, if present, on the pure-noise region.

    Parameters
    ----------
    proteins : numpy.ndarray
        Ground-truth positions, shape (n, 2), inside ``window``.
    model : KineticRates or MultiDarkModel
    window : Window
    sigma : FixedSigma or GammaSigma
        Localization-uncertainty distribution.
    exposure : float
        Frame time, s.
    duration : float
        Acquisition length, s.
    rng : numpy.random.Generator
    noise_intensity : float
        Expected noise localizations per nm^2.
    noise_region : Window, optional
        Additional region receiving only noise.

    Returns
    -------
    Dataset
        Sorted by time, then x, then y; ``cluster_id`` holds the protein
        index per localization and -1 for noise points.
    """
    proteins = np.asarray(proteins, dtype=float)
    n = len(proteins)
    batch = simulate_cluster_batch(model, exposure, n, rng)
    owner = np.repeat(np.arange(n), batch.g)
    t = batch.frames * exposure

    keep = t <= duration
    owner, t = owner[keep], t[keep]
    m = len(t)
    sig = sigma.sample(m, rng)
    x = proteins[owner, 0] + rng.normal(0.0, sig)
    y = proteins[owner, 1] + rng.normal(0.0, sig)

    inside = window.contains(x, y)
    x, y, t, sig, owner = x[inside], y[inside], t[inside], sig[inside], owner[inside]

    parts_x, parts_y, parts_t, parts_s, parts_c = [x], [y], [t], [sig], [owner]
    if noise_intensity > 0.0:
        regions = [window] if noise_region is None else [window, noise_region]
        for reg in regions:
            cnt = rng.poisson(noise_intensity * reg.area)
            pos = reg.sample(cnt, rng)
            parts_x.append(pos[:, 0])
            parts_y.append(pos[:, 1])
            parts_t.append(rng.uniform(0.0, duration, size=cnt))
            parts_s.append(sigma.sample(cnt, rng))
            parts_c.append(np.full(cnt, -1, dtype=np.int64))

    x = np.concatenate(parts_x)
    y = np.concatenate(parts_y)
    t = np.concatenate(parts_t)
    sig = np.concatenate(parts_s)
    cid = np.concatenate(parts_c)

    order = np.lexsort((y, x, t))
    return Dataset(
        x=x[order],
        y=y[order],
        t=t[order],
        sigma=sig[order],
        window=window,
        exposure=float(exposure),
        duration=float(duration),
        noise_region=noise_region,
        cluster_id=cid[order].astype(np.int64),
    )
