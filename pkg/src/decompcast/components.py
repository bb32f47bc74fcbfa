"""Time-feature components: piecewise-linear trend, Fourier seasonality,
events and holidays, and the additive/multiplicative forecast composition."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
import pandas as pd

from .config import EventConfig, SeasonalityConfig
from .errors import InvalidChangepoint, UnknownCountry

EPOCH = pd.Timestamp("1970-01-01")
DAY = pd.Timedelta(days=1)

# name -> (period in days, default Fourier order)
DEFAULT_SEASONALITIES = {
    "yearly": (365.25, 6),
    "weekly": (7.0, 3),
    "daily": (1.0, 6),
}


# -- trend --------------------------------------------------------------------


@dataclass(frozen=True)
class TrendParams:
    """Continuous piecewise-linear trend.

    ``delta0``/``rho0`` are the first segment's rate and offset, ``delta``
    the rate change at each changepoint. The offset adjustments are implied:
    ``rho_j = -c_j * delta_j`` keeps the curve continuous.
    """

    delta0: float = 0.0
    rho0: float = 0.0
    changepoints: tuple = ()
    delta: tuple = ()

    def __post_init__(self):
        cps = tuple(float(c) for c in self.changepoints)
        if list(cps) != sorted(cps):
            raise InvalidChangepoint("changepoints must be sorted ascending")
        if len(cps) != len(self.delta):
            raise ValueError("need one rate adjustment per changepoint")
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))

    @property
    def rho(self):
        return tuple(-c * d for c, d in zip(self.changepoints, self.delta))


def trend_eval(t, params):
    """Evaluate ``(delta0 + G(t).delta) * t + (rho0 + G(t).rho)`` where
    ``G_j(t) = 1`` once ``t`` has passed changepoint ``j``."""
    t = np.asarray(t, dtype=float)
    cps = np.asarray(params.changepoints, dtype=float)
    gamma = (t[..., None] >= cps).astype(float)
    rate = params.delta0 + gamma @ np.asarray(params.delta, dtype=float)
    offset = params.rho0 + gamma @ np.asarray(params.rho, dtype=float)
    return rate * t + offset


def trend_basis(t, changepoints):
    """Design matrix ``[t, 1, G_1(t)(t - c_1), ...]``; the trend is linear in
    ``(delta0, rho0, delta_1, ...)`` with this basis."""
    t = np.asarray(t, dtype=float)
    cps = np.asarray(changepoints, dtype=float)
    hinge = np.where(t[:, None] >= cps[None, :], t[:, None] - cps[None, :], 0.0)
    return np.column_stack([t, np.ones_like(t), hinge])


def init_changepoints(n_changepoints, changepoint_range=0.85, custom=None):
    """Changepoint locations in normalized time.

    Automatic placement spreads ``n_changepoints`` equidistant interior
    points over ``[0, changepoint_range]``, keeping the final segment free.
    Custom locations bypass placement but must lie inside ``(0, 1)``.
    """
    if custom is not None:
        cps = sorted(float(c) for c in custom)
        for c in cps:
            if not 0.0 < c < 1.0:
                raise InvalidChangepoint(f"changepoint {c} lies outside the training range")
        return cps
    if n_changepoints < 0:
        raise ValueError("n_changepoints must be >= 0")
    step = changepoint_range / (n_changepoints + 1)
    return [step * i for i in range(1, n_changepoints + 1)]


# -- seasonality --------------------------------------------------------------


def days_since_epoch(timestamps):
    ts = pd.DatetimeIndex(timestamps)
    return (ts.asi8 - EPOCH.value) / DAY.value


def fourier_features(t_days, period, order):
    """``[cos(2 pi j t / p), sin(2 pi j t / p)]`` for ``j = 1..order``,
    interleaved so column ``2(j-1)`` pairs with ``a_j`` and ``2j-1`` with ``b_j``."""
    t = np.asarray(t_days, dtype=float)
    j = np.arange(1, order + 1)
    arg = 2.0 * np.pi * t[:, None] * j[None, :] / period
    out = np.empty((len(t), 2 * order))
    out[:, 0::2] = np.cos(arg)
    out[:, 1::2] = np.sin(arg)
    return out


def seasonality_eval(t_days, period, a, b):
    """Single-periodicity Fourier sum with cosine weights ``a`` and sine
    weights ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("a and b need the same length")
    coef = np.empty(2 * len(a))
    coef[0::2] = a
    coef[1::2] = b
    t = np.atleast_1d(np.asarray(t_days, dtype=float))
    out = fourier_features(t, period, len(a)) @ coef
    return out if np.ndim(t_days) else float(out[0])


def auto_configure_seasonality(freq, span):
    """Default periodicities for data sampled every ``freq`` over ``span``.

    A periodicity is enabled when the sampling interval is strictly shorter
    than the period and at least two full periods are covered.
    """
    freq_days = pd.Timedelta(freq) / DAY
    span_days = pd.Timedelta(span) / DAY
    out = []
    for name, (period, order) in DEFAULT_SEASONALITIES.items():
        if freq_days < period and span_days >= 2 * period:
            out.append(SeasonalityConfig(name=name, period_days=period, fourier_order=order))
    return out


# -- events -------------------------------------------------------------------


@lru_cache(maxsize=1)
def _holiday_table():
    with resources.files("decompcast").joinpath("data/holidays.json").open() as f:
        return json.load(f)


def available_countries():
    return sorted(_holiday_table())


def _slug(name):
    return re.sub(r"[^0-9a-z]+", "_", name.lower()).strip("_")


def country_holidays(country, window=(0, 0), mode="additive"):
    """One :class:`EventConfig` per named holiday of ``country`` from the
    bundled table."""
    table = _holiday_table()
    key = str(country).upper()
    if key not in table:
        raise UnknownCountry(f"no holiday table for {country!r}; known: {', '.join(sorted(table))}")
    events = []
    for name, dates in sorted(table[key].items()):
        events.append(
            EventConfig(name=f"{key.lower()}_{_slug(name)}", dates=tuple(dates), window=window, mode=mode)
        )
    return events


def event_dates(event, frame=None):
    """Occurrence dates of ``event``: its configured dates, else the days on
    which the data column of the same name equals 1."""
    if event.dates is not None:
        return pd.DatetimeIndex(pd.to_datetime(list(event.dates))).normalize()
    if frame is None or event.name not in frame:
        return pd.DatetimeIndex([])
    flags = np.nan_to_num(frame[event.name].to_numpy(dtype=float), nan=0.0)
    return pd.DatetimeIndex(frame["ds"][flags == 1]).normalize().unique()


def event_features(timestamps, events, frame=None):
    """Binary matrix with one column per event and window offset.

    Returns ``(matrix, columns)`` where ``columns`` holds ``(event_name,
    offset)`` pairs; an entry is 1 when the row's calendar date equals an
    occurrence date plus the offset.
    """
    days = pd.DatetimeIndex(timestamps).normalize()
    day_num = days.asi8 // DAY.value
    columns, blocks = [], []
    for event in events:
        occ = event_dates(event, frame).asi8 // DAY.value
        for offset in event.offsets:
            blocks.append(np.isin(day_num, occ + offset).astype(float))
            columns.append((event.name, offset))
    if not blocks:
        return np.zeros((len(days), 0)), []
    return np.column_stack(blocks), columns


# -- composition --------------------------------------------------------------


def compose_forecast(trend, additive=(), multiplicative=(), ar=None, lagged=()):
    """Sum the forecast components.

    Multiplicative components are scaled by the trend at the same timestamp
    before summation. Arguments broadcast, so per-timestamp time components
    combine with ``(origins, h)`` shaped AR outputs.
    """
    trend = np.asarray(trend, dtype=float)
    total = trend.copy()
    for comp in additive:
        total = total + comp
    for comp in multiplicative:
        total = total + trend * comp
    if ar is not None:
        total = total + ar
    for comp in lagged:
        total = total + comp
    return total
