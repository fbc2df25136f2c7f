"""Reading and writing localization tables, configs and result documents.

Localization tables are delimited text with a header; common column-name
variants (including bracketed units and arbitrary case) are accepted.  Time
may be given either as a 1-based ``frame`` index, converted through the
exposure time, or directly as seconds; exactly one of the two must be
present.

Run configuration is YAML validated against a mode-specific schema with
unknown keys rejected, so typos fail loudly with a path into the document.
Result documents are JSON with sorted keys and no timestamps, hence byte
stable for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from importlib.metadata import version as _pkg_version

import jsonschema
import numpy as np
import pandas as pd
import scipy
import yaml

from .fit import FitConfig
from .kinetics import DarkState, KineticRates, Model, MultiDarkModel
from .spatial import (
    ClusterLayout,
    CsrLayout,
    Dataset,
    FiberLayout,
    FixedSigma,
    GammaSigma,
    Layout,
    PointsLayout,
    SigmaDistribution,
    Window,
)

__all__ = [
    "ConfigError",
    "DataError",
    "read_localizations",
    "write_localizations",
    "load_config",
    "validate_config",
    "config_window",
    "config_model",
    "config_layout",
    "config_sigma",
    "config_fit",
    "make_result_document",
    "write_json",
    "write_curves",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Invalid localization data."""


_COLUMN_ALIASES = {
    "id": "id",
    "frame": "frame",
    "t": "t",
    "t [s]": "t",
    "t[s]": "t",
    "x": "x",
    "x [nm]": "x",
    "x[nm]": "x",
    "y": "y",
    "y [nm]": "y",
    "y[nm]": "y",
    "sigma": "sigma",
    "sigma [nm]": "sigma",
    "sigma[nm]": "sigma",
    "uncertainty": "sigma",
    "uncertainty [nm]": "sigma",
    "uncertainty[nm]": "sigma",
    "uncertainty_xy": "sigma",
    "uncertainty_xy [nm]": "sigma",
    "uncertainty_xy[nm]": "sigma",
    "cluster": "cluster",
}


def _normalize_columns(columns) -> dict[str, str]:
    """Map raw header names to canonical roles; unknown columns are ignored."""
    mapping: dict[str, str] = {}
    for raw in columns:
        key = " ".join(str(raw).strip().lower().split())
        role = _COLUMN_ALIASES.get(key)
        if role is not None:
            if role in mapping.values():
                raise DataError(f"duplicate column for {role!r}: {raw!r}")
            mapping[str(raw)] = role
    return mapping


def _bad_rows(mask: np.ndarray, limit: int = 5) -> str:
    rows = np.nonzero(mask)[0][:limit] + 2  # 1-based with header line
    listed = ", ".join(map(str, rows))
    more = "" if mask.sum() <= limit else f" (and {int(mask.sum()) - limit} more)"
    return f"rows {listed}{more}"


def read_localizations(
    path,
    window: Window,
    exposure: float,
    duration: float,
    noise_region: Window | None = None,
) -> Dataset:
    """Read a delimited localization table into a dataset.

    Parameters
    ----------
    path : str or pathlib.Path
    window : Window
        Observation window the signal lives in, nm.
    exposure : float
        Frame time, s; converts ``frame`` columns to times.
    duration : float
        Acquisition length, s.
    noise_region : Window, optional
        Declared pure-noise region.

    Returns
    -------
    Dataset
        Rows outside the window and noise region are dropped with a warning;
        row order is otherwise preserved.

    Raises
    ------
    DataError
        On missing or ambiguous columns, non-finite coordinates, nonpositive
        uncertainties, invalid frame indices or out-of-range times.
    """
    try:
        # round_trip parsing keeps repr-written times exact
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read localization table {path}: {exc}") from exc
    mapping = _normalize_columns(frame.columns)
    roles = set(mapping.values())
    missing = {"x", "y", "sigma"} - roles
    if missing:
        raise DataError(f"missing required columns: {sorted(missing)}")
    if "frame" in roles and "t" in roles:
        raise DataError("table declares both a frame and a time column; keep exactly one")
    if "frame" not in roles and "t" not in roles:
        raise DataError("table needs a frame or a time column")
    frame = frame.rename(columns=mapping)

    def numeric(role: str) -> np.ndarray:
        vals = pd.to_numeric(frame[role], errors="coerce").to_numpy(dtype=float)
        if np.any(~np.isfinite(vals)):
            raise DataError(f"column {role!r} has non-numeric values at {_bad_rows(~np.isfinite(vals))}")
        return vals

    x = numeric("x")
    y = numeric("y")
    sigma = numeric("sigma")
    if np.any(sigma <= 0):
        raise DataError(f"nonpositive uncertainties at {_bad_rows(sigma <= 0)}")

    if "frame" in roles:
        fvals = numeric("frame")
        if np.any(fvals != np.rint(fvals)) or np.any(fvals < 1):
            bad = (fvals != np.rint(fvals)) | (fvals < 1)
            raise DataError(f"frame indices must be integers >= 1; bad at {_bad_rows(bad)}")
        t = fvals * exposure
    else:
        t = numeric("t")
    out_of_range = (t <= 0) | (t > duration + 1e-9)
    if np.any(out_of_range):
        raise DataError(
            f"times outside (0, duration={duration}] at {_bad_rows(out_of_range)}"
        )

    inside = window.contains(x, y)
    if noise_region is not None:
        inside |= noise_region.contains(x, y)
    n_dropped = int((~inside).sum())
    if n_dropped:
        warnings.warn(
            f"dropped {n_dropped} localizations outside the window and noise region",
            stacklevel=2,
        )
    cluster = None
    if "cluster" in roles:
        cluster = pd.to_numeric(frame["cluster"], errors="coerce").fillna(-1).to_numpy(np.int64)
        cluster = cluster[inside]
    return Dataset(
        x=x[inside],
        y=y[inside],
        t=t[inside],
        sigma=sigma[inside],
        window=window,
        exposure=float(exposure),
        duration=float(duration),
        noise_region=noise_region,
        cluster_id=cluster,
    )


def write_localizations(path, dataset: Dataset, include_cluster_id: bool = False) -> None:
    """Write a dataset as a delimited localization table.

    Coordinates and uncertainties are written with six decimals (sub-
    nanometer for nm data); times keep full precision so they round-trip
    exactly.  A ``cluster`` column with the ground-truth molecule index (-1
    for noise) is included on request.
    """
    cols = ["id", "t [s]", "x [nm]", "y [nm]", "uncertainty [nm]"]
    include_cluster_id = include_cluster_id and dataset.cluster_id is not None
    if include_cluster_id:
        cols.append("cluster")
    lines = [",".join(cols)]
    for k in range(dataset.n):
        row = (
            f"{k + 1},{repr(float(dataset.t[k]))},{dataset.x[k]:.6f},"
            f"{dataset.y[k]:.6f},{dataset.sigma[k]:.6f}"
        )
        if include_cluster_id:
            row += f",{int(dataset.cluster_id[k])}"
        lines.append(row)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_WINDOW_SCHEMA = {
    "type": "object",
    "properties": {
        "x_min": {"type": "number"},
        "x_max": {"type": "number"},
        "y_min": {"type": "number"},
        "y_max": {"type": "number"},
    },
    "required": ["x_min", "x_max", "y_min", "y_max"],
    "additionalProperties": False,
}

_KINETICS_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "four_state"},
                "r_f": {"type": "number", "exclusiveMinimum": 0},
                "r_d": {"type": "number", "exclusiveMinimum": 0},
                "r_r": {"type": "number", "exclusiveMinimum": 0},
                "r_b": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "r_f", "r_d", "r_r", "r_b"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "multi_dark"},
                "r_f": {"type": "number", "exclusiveMinimum": 0},
                "r_b": {"type": "number", "exclusiveMinimum": 0},
                "dark_states": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "entry_rate": {"type": "number", "exclusiveMinimum": 0},
                            "return_rate": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "required": ["entry_rate", "return_rate"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["type", "r_f", "r_b", "dark_states"],
            "additionalProperties": False,
        },
    ]
}

_SIGMA_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "gamma"},
                "shape": {"type": "number", "exclusiveMinimum": 0},
                "rate": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "fixed"},
                "value": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "value"],
            "additionalProperties": False,
        },
    ]
}

_LAYOUT_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "csr"},
                "n_points": {"type": "integer", "minimum": 1},
            },
            "required": ["type", "n_points"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "clusters"},
                "n_background": {"type": "integer", "minimum": 0},
                "n_clusters": {"type": "integer", "minimum": 0},
                "points_per_cluster": {"type": "integer", "minimum": 0},
                "cluster_sd": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "n_background", "n_clusters", "points_per_cluster", "cluster_sd"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "fibers"},
                "n_points": {"type": "integer", "minimum": 1},
                "n_fibers": {"type": "integer", "minimum": 1},
                "jitter_sd": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 2},
                "turn_sd": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "n_points"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "points"},
                "points": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
            "required": ["type", "points"],
            "additionalProperties": False,
        },
    ]
}

_FIT_KNOBS = {
    "bandwidth_coefficient": {"type": "number", "exclusiveMinimum": 0},
    "edge_correction": {"enum": ["translation", "none"]},
    "autoconv_pairs": {"type": "integer", "minimum": 1},
    "autoconv_threshold": {"type": "number", "exclusiveMinimum": 0},
    "autoconv_threshold_relative": {"type": "boolean"},
    "max_r_points": {"type": "integer", "minimum": 2},
    "fallback_r_points": {"type": "integer", "minimum": 2},
    "initial_u_max": {"type": "number", "exclusiveMinimum": 0},
    "initial_u_points": {"type": "integer", "minimum": 2},
    "final_u_points": {"type": "integer", "minimum": 2},
    "lag_cdf_cutoff": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "u_star_max": {"type": "number", "exclusiveMinimum": 0},
    "u_star_step": {"type": "number", "exclusiveMinimum": 0},
    "rate_lower": {"type": "number", "exclusiveMinimum": 0},
    "rate_upper": {"type": "number", "exclusiveMinimum": 0},
    "frame_load_cap": {"type": "number", "exclusiveMinimum": 0},
    "start_low": {"type": "number", "exclusiveMinimum": 0},
    "start_high": {"type": "number", "exclusiveMinimum": 0},
    "optimizer_maxiter": {"type": "integer", "minimum": 1},
    "optimizer_xatol": {"type": "number", "exclusiveMinimum": 0},
    "optimizer_fatol": {"type": "number", "exclusiveMinimum": 0},
    "min_signal_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    "min_points": {"type": "integer", "minimum": 2},
    "quantile_samples": {"type": "integer", "minimum": 100},
    "quantile_probs": {
        "type": "array",
        "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "minItems": 1,
    },
    "record_timings": {"type": "boolean"},
}

_FIT_SCHEMA = {"type": "object", "properties": _FIT_KNOBS, "additionalProperties": False}

_COMMON = {
    "mode": {"enum": ["simulate", "fit", "summaries", "refit-study", "model-curves"]},
    "seed": {"type": "integer", "minimum": 0},
    "threads": {"type": "integer", "minimum": 1},
    "exposure": {"type": "number", "exclusiveMinimum": 0},
    "duration": {"type": "number", "exclusiveMinimum": 0},
    "window": _WINDOW_SCHEMA,
    "noise_region": _WINDOW_SCHEMA,
}

_MODE_SCHEMAS = {
    "simulate": {
        "type": "object",
        "properties": {
            **_COMMON,
            "kinetics": _KINETICS_SCHEMA,
            "layout": _LAYOUT_SCHEMA,
            "sigma": _SIGMA_SCHEMA,
            "noise_intensity": {"type": "number", "minimum": 0},
        },
        "required": ["mode", "window", "exposure", "duration", "kinetics", "layout", "sigma"],
        "additionalProperties": False,
    },
    "fit": {
        "type": "object",
        "properties": {
            **_COMMON,
            "data": {"type": "string"},
            "trim_start": {"type": "number", "minimum": 0},
            "fit": _FIT_SCHEMA,
        },
        "required": ["mode", "data", "window", "exposure", "duration"],
        "additionalProperties": False,
    },
    "summaries": {
        "type": "object",
        "properties": {
            **_COMMON,
            "data": {"type": "string"},
            "trim_start": {"type": "number", "minimum": 0},
            "fit": _FIT_SCHEMA,
            "u_max": {"type": "number", "exclusiveMinimum": 0},
            "u_points": {"type": "integer", "minimum": 2},
        },
        "required": ["mode", "data", "window", "exposure", "duration"],
        "additionalProperties": False,
    },
    "refit-study": {
        "type": "object",
        "properties": {
            **_COMMON,
            "kinetics": _KINETICS_SCHEMA,
            "layout": _LAYOUT_SCHEMA,
            "sigma": _SIGMA_SCHEMA,
            "noise_intensity": {"type": "number", "minimum": 0},
            "n_replicates": {"type": "integer", "minimum": 1},
            "fit": _FIT_SCHEMA,
        },
        "required": [
            "mode", "window", "exposure", "duration", "kinetics", "layout",
            "sigma", "n_replicates",
        ],
        "additionalProperties": False,
    },
    "model-curves": {
        "type": "object",
        "properties": {
            "mode": _COMMON["mode"],
            "seed": _COMMON["seed"],
            "threads": _COMMON["threads"],
            "exposure": _COMMON["exposure"],
            "kinetics": _KINETICS_SCHEMA,
            "u_max": {"type": "number", "exclusiveMinimum": 0},
            "u_points": {"type": "integer", "minimum": 2},
            "v_max": {"type": "number", "exclusiveMinimum": 0},
            "v_points": {"type": "integer", "minimum": 2},
        },
        "required": ["mode", "exposure", "kinetics"],
        "additionalProperties": False,
    },
}


def load_config(path) -> dict:
    """Parse a YAML run configuration into a plain mapping."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping at the top level")
    return cfg


def validate_config(config: dict, mode: str) -> None:
    """Validate a configuration against the schema of a CLI mode.

    Raises
    ------
    ConfigError
        With the offending document path, on schema violations or a mode
        mismatch.
    """
    if mode not in _MODE_SCHEMAS:
        raise ConfigError(f"unknown mode {mode!r}")
    declared = config.get("mode")
    if declared != mode:
        raise ConfigError(f"config declares mode {declared!r} but {mode!r} was requested")
    validator = jsonschema.Draft202012Validator(_MODE_SCHEMAS[mode])
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"config invalid at {where}: {err.message}")


def config_window(entry: dict) -> Window:
    return Window(entry["x_min"], entry["x_max"], entry["y_min"], entry["y_max"])


def config_model(entry: dict) -> Model:
    if entry["type"] == "four_state":
        return KineticRates(entry["r_f"], entry["r_d"], entry["r_r"], entry["r_b"])
    states = tuple(DarkState(d["entry_rate"], d["return_rate"]) for d in entry["dark_states"])
    return MultiDarkModel(entry["r_f"], entry["r_b"], states)


def config_layout(entry: dict) -> Layout:
    kind = entry["type"]
    if kind == "csr":
        return CsrLayout(entry["n_points"])
    if kind == "clusters":
        return ClusterLayout(
            entry["n_background"], entry["n_clusters"],
            entry["points_per_cluster"], entry["cluster_sd"],
        )
    if kind == "fibers":
        kwargs = {k: entry[k] for k in ("n_fibers", "jitter_sd", "n_steps", "turn_sd") if k in entry}
        return FiberLayout(entry["n_points"], **kwargs)
    return PointsLayout(np.asarray(entry["points"], dtype=float))


def config_sigma(entry: dict) -> SigmaDistribution:
    if entry["type"] == "gamma":
        kwargs = {k: entry[k] for k in ("shape", "rate") if k in entry}
        return GammaSigma(**kwargs)
    return FixedSigma(entry["value"])


def config_fit(config: dict, seed: int = 0) -> FitConfig:
    """Build a fit configuration from the optional ``fit`` section."""
    entry = dict(config.get("fit", {}))
    if "quantile_probs" in entry:
        entry["quantile_probs"] = tuple(entry["quantile_probs"])
    return FitConfig(seed=seed, **entry)


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def make_result_document(mode: str, config: dict, results: dict) -> dict:
    """Assemble the canonical result document for a CLI run.

    Contains the mode, package and numeric-stack versions, the exact input
    configuration with its hash, and the mode-specific results; no
    timestamps, so identical runs produce identical documents.
    """
    canonical = json.dumps(_jsonify(config), sort_keys=True, separators=(",", ":"))
    return {
        "mode": mode,
        "package": {"name": "palmblink", "version": _pkg_version("palmblink")},
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__},
        "config": _jsonify(config),
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "results": _jsonify(results),
    }


def write_json(path, document: dict) -> None:
    """Write a result document as stable, human-readable JSON."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(document, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def write_curves(path, columns: dict[str, np.ndarray]) -> None:
    """Write aligned numeric columns as delimited text at full precision."""
    names = list(columns)
    arrays = [np.asarray(columns[name], dtype=float) for name in names]
    n = len(arrays[0])
    if any(len(arr) != n for arr in arrays):
        raise ValueError("curve columns must have equal length")
    lines = [",".join(names)]
    for k in range(n):
        lines.append(",".join(repr(float(arr[k])) for arr in arrays))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
