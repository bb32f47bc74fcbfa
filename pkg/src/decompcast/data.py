"""Series containers, imputation, normalization and tabularization."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ConfigError, DegenerateScale, ImputeAbort, InsufficientData

log = logging.getLogger(__name__)

_TZ_SUFFIX = re.compile(r"(?:Z|[+-]\d\d:?\d\d)$")


@dataclass(frozen=True)
class TimeSeries:
    """Regularly spaced scalar observations; NaN marks a missing value."""

    timestamps: pd.DatetimeIndex
    values: np.ndarray
    freq: pd.Timedelta

    def __post_init__(self):
        ts = pd.DatetimeIndex(self.timestamps)
        values = np.array(self.values, dtype=float)
        values.flags.writeable = False
        if len(ts) < 1:
            raise ValueError("a series needs at least one timestamp")
        if len(ts) != len(values):
            raise ValueError("timestamps and values differ in length")
        freq = pd.Timedelta(self.freq)
        if freq <= pd.Timedelta(0):
            raise ValueError("frequency must be positive")
        if len(ts) > 1 and not (np.diff(ts.asi8) == freq.value).all():
            raise ValueError("timestamps must be strictly increasing with constant spacing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq", freq)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_values(cls, values, start="2000-01-01", freq="D"):
        values = np.asarray(values, dtype=float)
        step = pd.Timedelta(pd.tseries.frequencies.to_offset(freq))
        return cls(pd.date_range(start, periods=len(values), freq=step), values, step)

    def with_values(self, values):
        return TimeSeries(self.timestamps, values, self.freq)

    @property
    def missing(self):
        return np.isnan(self.values)


def infer_frequency(timestamps):
    """Modal spacing of ``timestamps``; ties go to the smaller spacing."""
    ts = pd.DatetimeIndex(timestamps).sort_values()
    if len(ts) < 2:
        raise ConfigError("cannot infer a frequency from fewer than two timestamps")
    deltas = np.diff(ts.asi8)
    deltas = deltas[deltas > 0]
    if len(deltas) == 0:
        raise ConfigError("all timestamps are identical")
    values, counts = np.unique(deltas, return_counts=True)
    # np.unique sorts ascending, so argmax picks the smallest of tied modes
    return pd.Timedelta(int(values[np.argmax(counts)]))


def parse_timestamps(column):
    col = pd.Series(column)
    text = col.astype(str).str.strip()
    if text.str.contains(_TZ_SUFFIX).any():
        return pd.DatetimeIndex(pd.to_datetime(text, utc=True)).tz_convert(None)
    parsed = pd.DatetimeIndex(pd.to_datetime(col))
    if parsed.tz is not None:
        parsed = parsed.tz_convert(None)
    return parsed


def read_csv(path, require_y=True):
    """Read a ``ds,y[,extra...]`` CSV. Empty cells and ``NaN`` are missing."""
    try:
        df = pd.read_csv(path, keep_default_na=True, float_precision="round_trip")
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    return check_frame(df, require_y)


def check_frame(df, require_y=True):
    for column in ("ds", "y") if require_y else ("ds",):
        if column not in df.columns:
            raise ConfigError(f"input is missing required column '{column}'")
    df = df.copy()
    try:
        df["ds"] = parse_timestamps(df["ds"])
    except (ValueError, TypeError) as err:
        raise ConfigError(f"column 'ds' holds unparseable timestamps: {err}") from None
    for column in df.columns:
        if column == "ds":
            continue
        try:
            df[column] = pd.to_numeric(df[column]).astype(float)
        except (ValueError, TypeError):
            raise ConfigError(f"column '{column}' is not numeric") from None
    if df["ds"].duplicated().any():
        raise ConfigError("column 'ds' contains duplicate timestamps")
    return df.sort_values("ds").reset_index(drop=True)


def regularize(df, freq=None):
    """Reindex ``df`` onto a regular grid, materializing missing rows as NaN."""
    df = check_frame(df, require_y=False)
    if freq is None:
        freq = infer_frequency(df["ds"])
    freq = pd.Timedelta(freq)
    start, end = df["ds"].iloc[0], df["ds"].iloc[-1]
    offsets = (df["ds"] - start).to_numpy().astype("int64")
    if (offsets % freq.value != 0).any():
        raise ConfigError(f"timestamps do not lie on a regular {freq} grid")
    grid = pd.date_range(start, end, freq=freq)
    out = df.set_index("ds").reindex(grid)
    out.index.name = "ds"
    return out.reset_index(), freq


# -- imputation ---------------------------------------------------------------


def _runs(mask):
    """(start, stop) index pairs of consecutive True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def impute_missing(series, linear_limit=5, rolling_limit=20, rolling_window=30, max_gap=30):
    """Fill interior gaps of ``series``.

    Each gap is first filled from both edges by linear interpolation between
    the known values bracketing it, ``linear_limit`` positions per side. What
    remains is filled with a centred rolling mean over ``rolling_window``
    observations, at most ``rolling_limit`` positions per gap. Leading and
    trailing gaps have only one anchor and are left missing.

    Raises
    ------
    ImputeAbort
        If any interior gap is longer than ``max_gap``.
    """
    if min(linear_limit, rolling_limit, rolling_window) < 1:
        raise ValueError("imputation limits must be positive")
    values = np.array(series.values, dtype=float)
    n = len(values)
    gaps = [(a, b) for a, b in _runs(np.isnan(values)) if a > 0 and b < n]
    for a, b in gaps:
        if b - a > max_gap:
            raise ImputeAbort(b - a, max_gap)
    if not gaps:
        return series

    filled = values.copy()
    for a, b in gaps:
        left, right = values[a - 1], values[b]
        steps = np.arange(1, b - a + 1) / (b - a + 1)
        line = left + (right - left) * steps
        g = b - a
        if g <= 2 * linear_limit:
            filled[a:b] = line
        else:
            filled[a : a + linear_limit] = line[:linear_limit]
            filled[b - linear_limit : b] = line[-linear_limit:]

    rolling = (
        pd.Series(filled).rolling(rolling_window, center=True, min_periods=1).mean().to_numpy()
    )
    for a, b in gaps:
        for start, stop in _runs(np.isnan(filled[a:b])):
            stop = min(stop, start + rolling_limit)
            filled[a + start : a + stop] = rolling[a + start : a + stop]
    return series.with_values(filled)


def impute_events(values):
    """Missing event indicators mean the event did not happen."""
    return np.nan_to_num(np.asarray(values, dtype=float), nan=0.0)


# -- normalization ------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationState:
    """Affine map ``x -> (x - shift) / scale`` and its inverse."""

    mode: str = "off"
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def inverse(self, x):
        return np.asarray(x, dtype=float) * self.scale + self.shift

    def to_dict(self):
        return {"mode": self.mode, "shift": self.shift, "scale": self.scale}


def is_binary(values):
    observed = np.unique(values[~np.isnan(values)])
    return len(observed) > 0 and set(observed.tolist()) <= {0.0, 1.0}


def fit_normalization(values, mode="auto"):
    """Compute the :class:`NormalizationState` for ``values`` (NaNs ignored).

    Modes: ``minmax`` maps min/max to 0/1, ``standardize`` zero-centres and
    divides by the standard deviation, ``soft`` maps min/95th quantile to 0/1,
    ``soft1`` maps min/90th quantile to 0.1/0.9, ``auto`` is ``minmax`` for
    binary data and ``soft`` otherwise.
    """
    values = np.asarray(values, dtype=float)
    observed = values[~np.isnan(values)]
    if mode == "off":
        return NormalizationState("off")
    if len(observed) == 0:
        raise DegenerateScale("no observed values to normalize")
    if mode == "auto":
        mode = "minmax" if is_binary(values) else "soft"
    lo = float(observed.min())
    if mode == "minmax":
        shift, scale = lo, float(observed.max()) - lo
    elif mode == "standardize":
        shift, scale = float(observed.mean()), float(observed.std())
    elif mode == "soft":
        shift, scale = lo, float(np.quantile(observed, 0.95)) - lo
    elif mode == "soft1":
        span = float(np.quantile(observed, 0.90)) - lo
        scale = span / 0.8
        shift = lo - 0.1 * scale
    else:
        raise ConfigError(f"unknown normalization mode {mode!r}")
    if not scale > 0:
        raise DegenerateScale(f"{mode} normalization of a constant series")
    return NormalizationState(mode, shift, scale)


def normalize(series, mode="auto"):
    """Normalize a :class:`TimeSeries`, returning it with the fitted state."""
    state = fit_normalization(series.values, mode)
    return series.with_values(state.transform(series.values)), state


def safe_normalization(values, mode, label):
    try:
        return fit_normalization(values, mode)
    except DegenerateScale as err:
        log.warning("%s: %s; normalization turned off", label, err)
        return NormalizationState("off")


# -- tabularization -----------------------------------------------------------


def lag_matrix(values, n_lags, origins):
    """Rows ``(v[t-1], v[t-2], ..., v[t-n_lags])`` for every origin ``t``."""
    if n_lags == 0:
        return np.zeros((len(origins), 0))
    idx = origins[:, None] - np.arange(1, n_lags + 1)[None, :]
    return np.asarray(values, dtype=float)[idx]


@dataclass(frozen=True)
class SampleSet:
    """Training samples: one per forecast origin with complete windows.

    ``origins[i]`` is the row index of the first target of sample ``i``;
    the per-row design (time features) lives in ``design``.
    """

    origins: np.ndarray
    targets: np.ndarray
    ar_lags: np.ndarray
    covariate_lags: dict
    n_lags: int
    n_forecasts: int
    design: Optional[object] = None
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.origins)

    @property
    def target_index(self):
        return self.origins[:, None] + np.arange(self.n_forecasts)[None, :]


def valid_origins(y, n_lags, n_forecasts, covariates=(), row_ok=None, require_targets=True):
    """Origins whose lag and target windows are fully observed.

    ``covariates`` is a sequence of ``(values, n_lags)`` pairs; ``row_ok``
    flags rows whose time features are usable as targets.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    max_lag = max([n_lags] + [p for _, p in covariates])
    last = n - n_forecasts if require_targets else n - 1
    origins = np.arange(max_lag, last + 1)
    if len(origins) == 0:
        return origins
    ok = np.ones(len(origins), dtype=bool)
    if n_lags:
        ok &= np.isfinite(lag_matrix(y, n_lags, origins)).all(axis=1)
    for values, p in covariates:
        ok &= np.isfinite(lag_matrix(values, p, origins)).all(axis=1)
    if require_targets:
        tidx = origins[:, None] + np.arange(n_forecasts)[None, :]
        ok &= np.isfinite(y[tidx]).all(axis=1)
        if row_ok is not None:
            ok &= np.asarray(row_ok)[tidx].all(axis=1)
    elif row_ok is not None:
        ok &= np.asarray(row_ok)[origins]
    return origins[ok]


def make_samples(y, n_lags, n_forecasts, covariates=None, row_ok=None, design=None):
    """Build a :class:`SampleSet` from normalized arrays.

    ``covariates`` maps name -> (values, n_lags).
    """
    covariates = covariates or {}
    if len(y) < n_lags + n_forecasts:
        raise InsufficientData(
            f"series of length {len(y)} is shorter than n_lags + n_forecasts = {n_lags + n_forecasts}"
        )
    origins = valid_origins(y, n_lags, n_forecasts, list(covariates.values()), row_ok)
    if len(origins) == 0:
        raise InsufficientData("no forecast origin has complete lag and target windows")
    tidx = origins[:, None] + np.arange(n_forecasts)[None, :]
    return SampleSet(
        origins=origins,
        targets=np.asarray(y, dtype=float)[tidx],
        ar_lags=lag_matrix(y, n_lags, origins),
        covariate_lags={k: lag_matrix(v, p, origins) for k, (v, p) in covariates.items()},
        n_lags=n_lags,
        n_forecasts=n_forecasts,
        design=design,
    )
