"""Synthetic benchmark series with known components.

Each component is generated independently, scaled to [0, 1] and combined;
the aggregate is rescaled to [0, 1] and observed with Gaussian noise. The
per-component contributions to the final series are kept as ground truth so
fitted decompositions can be scored.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .config import (
    ARConfig,
    EventConfig,
    FutureRegressorConfig,
    LaggedRegressorConfig,
    ModelConfig,
    SeasonalityConfig,
    TrendConfig,
)
from .errors import ConfigError, LengthMismatch, NonStationary

log = logging.getLogger(__name__)

EPOCH = "2000-01-01"
SEASON_PERIODS = {"monthly": 30, "yearly": 365}
FUTURE_COEFFS = (0.2, 0.3, -0.5)
AR_COEFFS = (0.3, 0.3)
COVARIATE_COEFFS = (0.3, 0.3)
PROCESS_SIGMA = 0.1
NOISE_SIGMA = 0.05

# component letters per scenario: Trend, Seasonality, Events, Future
# regressor, Auto-regression, Lagged regressor
SCENARIOS = {
    "S-TS": "TS",
    "S-EF": "EF",
    "S-TSEF": "TSEF",
    "S-mTSEF": "TSEF",
    "S-AL": "AL",
    "S-TSAL": "TSAL",
    "S-TSEFAL": "TSEFAL",
}
MULTIPLICATIVE = {"S-mTSEF"}

# data columns that expose components to the model
EVENT_COLUMN = "e"
FUTURE_COLUMN = "f"
COVARIATE_COLUMN = "x"


@dataclass(frozen=True)
class SynthScenario:
    name: str
    length: int = 6000
    n_series: int = 5
    seed: int = 0
    noise: float = NOISE_SIGMA

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.name!r}; choose from {', '.join(SCENARIOS)}")
        if self.length < 10:
            raise ConfigError("scenario length must be >= 10")

    @property
    def letters(self):
        return SCENARIOS[self.name]

    @property
    def multiplicative(self):
        return self.name in MULTIPLICATIVE


@dataclass
class ComponentTruth:
    """Ground truth for one series.

    ``raw`` holds each generated component before scaling, ``scaled`` after
    scaling to [0, 1], and ``contributions`` what each adds to the final
    observed series. ``params`` records the random draws.
    """

    raw: dict = field(default_factory=dict)
    scaled: dict = field(default_factory=dict)
    contributions: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def minmax_scale(x):
    x = np.asarray(x, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


# -- component generators -----------------------------------------------------


def gen_trend(T, seed=None):
    """Rises linearly up to one uniform-random changepoint, then falls;
    scaled to [0, 1]. Returns ``(series, changepoint_index)``."""
    if T < 2:
        raise ValueError("T must be >= 2")
    rng = np.random.default_rng(seed)
    lo, hi = max(1, int(0.1 * T)), max(2, int(0.9 * T))
    cp = int(rng.integers(lo, hi))
    down = rng.uniform(0.2, 2.0)
    t = np.arange(T, dtype=float)
    x = np.where(t <= cp, t, cp - down * (t - cp))
    return minmax_scale(x), cp


def seasonal_series(T, period, a, b):
    """``sum_j a_j cos(2 pi j t / p) + b_j sin(2 pi j t / p)`` for ``t = 0..T-1``."""
    t = np.arange(T, dtype=float)
    j = np.arange(1, len(a) + 1)
    angle = 2.0 * np.pi * np.outer(t, j) / period
    return np.cos(angle) @ np.asarray(a, dtype=float) + np.sin(angle) @ np.asarray(b, dtype=float)


def gen_seasonality(T, period, k=5, seed=None):
    """Fourier series of order ``k`` with coefficients uniform on [0, 1).

    Returns ``(unscaled series, a, b)``; callers scale separately.
    """
    rng = np.random.default_rng(seed)
    a = rng.random(k)
    b = rng.random(k)
    return seasonal_series(T, period, a, b), a, b


def gen_events(T, n_occurrences=25, seed=None):
    """Binary series with ``n_occurrences`` ones at distinct random rows."""
    if n_occurrences > T:
        raise ValueError("more occurrences than rows")
    rng = np.random.default_rng(seed)
    out = np.zeros(T)
    out[rng.choice(T, size=n_occurrences, replace=False)] = 1.0
    return out


def check_stationary(coeffs):
    """Raise :class:`NonStationary` unless every root of the AR polynomial
    lies outside the unit circle."""
    coeffs = np.asarray(coeffs, dtype=float)
    p = len(coeffs)
    if p == 0:
        return
    companion = np.zeros((p, p))
    companion[0] = coeffs
    companion[1:, :-1] = np.eye(p - 1)
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    if radius >= 1.0:
        raise NonStationary(f"AR coefficients {tuple(coeffs)} are not stationary (spectral radius {radius:.4f})")


def gen_ar_process(T, coeffs, noise_sigma=PROCESS_SIGMA, seed=None, burn_in=100):
    """``y_t = sum_i coeffs[i] y_{t-1-i} + e_t`` from zero initial values,
    discarding the first ``burn_in`` samples."""
    check_stationary(coeffs)
    rng = np.random.default_rng(seed)
    coeffs = np.asarray(coeffs, dtype=float)
    p = len(coeffs)
    n = T + burn_in
    noise = rng.normal(0.0, noise_sigma, n) if noise_sigma > 0 else np.zeros(n)
    y = np.zeros(n + p)
    rev = coeffs[::-1]
    for t in range(p, n + p):
        y[t] = rev @ y[t - p : t] + noise[t - p]
    return y[p + burn_in :]


def lagged_combination(x, c):
    """``L[t] = sum_i c[i] x[t-1-i]``; NaN where the history is incomplete."""
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    for t in range(len(c), len(x)):
        out[t] = sum(c[i] * x[t - 1 - i] for i in range(len(c)))
    return out


def gen_lagged_effect(T, seed=None, n_lags=3, coeffs=COVARIATE_COEFFS, noise_sigma=PROCESS_SIGMA, weights=None):
    """Covariate ``x`` from an AR(2) process and its effect
    ``L[t] = c_1 x[t-1] + ... + c_n x[t-n]``, weights uniform on (0, 1].

    Returns ``(x, L, c)``. The effect of the first rows uses pre-sample
    covariate values that are not returned.
    """
    rng = np.random.default_rng(seed)
    c = 1.0 - rng.random(n_lags) if weights is None else np.asarray(weights, dtype=float)
    full = gen_ar_process(T + n_lags, coeffs, noise_sigma, rng)
    effect = lagged_combination(full, c)[n_lags:]
    return full[n_lags:], effect, c


# -- composition --------------------------------------------------------------


def _series_components(T, letters, seeds):
    """Raw and [0, 1]-scaled components for one series; ``seeds`` maps a
    component key to its own seed so draws do not depend on which
    components are included."""
    raw, scaled, params, extra = {}, {}, {}, {}
    if "T" in letters:
        trend, cp = gen_trend(T, seeds["trend"])
        raw["trend"], params["changepoint"] = trend, cp
    if "S" in letters:
        for i, (name, period) in enumerate(SEASON_PERIODS.items()):
            s, a, b = gen_seasonality(T, period, 5, seeds[f"season{i}"])
            raw[f"season_{name}"] = s
            params[f"season_{name}"] = {"a": a.tolist(), "b": b.tolist()}
    if "E" in letters:
        e = gen_events(T, 25, seeds["event"])
        raw[f"event_{EVENT_COLUMN}"] = e
        extra[EVENT_COLUMN] = e
    if "F" in letters:
        f = gen_ar_process(T, FUTURE_COEFFS, PROCESS_SIGMA, seeds["future"])
        raw[f"future_{FUTURE_COLUMN}"] = f
    if "A" in letters:
        raw["ar"] = gen_ar_process(T, AR_COEFFS, PROCESS_SIGMA, seeds["ar"])
    if "L" in letters:
        x, effect, c = gen_lagged_effect(T, seeds["lagged"])
        raw[f"lagged_{COVARIATE_COLUMN}"] = effect
        extra[COVARIATE_COLUMN] = x
        params["lag_weights"] = c.tolist()
    for key, value in raw.items():
        scaled[key] = minmax_scale(value)
    if "F" in letters:
        # the regressor is observed as its scaled series with weight 1
        extra[FUTURE_COLUMN] = scaled[f"future_{FUTURE_COLUMN}"]
    return raw, scaled, params, extra


def compose(scaled, multiplicative=False):
    """Aggregate scaled components and rescale to [0, 1].

    Returns ``(aggregate, contributions)``; contributions sum to the
    aggregate up to the constant removed by rescaling.
    """
    parts = {}
    if multiplicative and "trend" in scaled:
        trend = scaled["trend"]
        for key, value in scaled.items():
            parts[key] = value if key == "trend" else trend * value
    else:
        parts = dict(scaled)
    total = sum(parts.values())
    lo, hi = float(np.min(total)), float(np.max(total))
    span = hi - lo if hi > lo else 1.0
    return (total - lo) / span, {k: v / span for k, v in parts.items()}


def compose_scenario(scenario, series=0):
    """One series of ``scenario``: ``(dataset, ComponentTruth)``.

    The dataset has ``ds``, ``y``, the covariate columns the model needs
    (``e`` events, ``f`` future regressor, ``x`` lagged covariate) and one
    ``truth_<component>`` column per contribution.
    """
    T = scenario.length
    root = np.random.SeedSequence([scenario.seed, series])
    keys = ["trend", "season0", "season1", "event", "future", "ar", "lagged", "noise"]
    seeds = dict(zip(keys, root.spawn(len(keys))))
    raw, scaled, params, extra = _series_components(T, scenario.letters, seeds)
    aggregate, contributions = compose(scaled, scenario.multiplicative)
    noise = np.random.default_rng(seeds["noise"]).normal(0.0, scenario.noise, T)
    df = pd.DataFrame({"ds": pd.date_range(EPOCH, periods=T, freq="D"), "y": aggregate + noise})
    for col, values in extra.items():
        df[col] = values
    for key, values in contributions.items():
        df[f"truth_{key}"] = values
    truth = ComponentTruth(raw, scaled, contributions, params)
    return df, truth


def generate(scenario):
    """All series of a scenario as a list of ``(dataset, truth)``."""
    return [compose_scenario(scenario, i) for i in range(scenario.n_series)]


# -- scoring ------------------------------------------------------------------


def score_decomposition(truth, predicted, mask=None):
    """Per-component RMSE after removing each series' mean.

    ``truth`` is a :class:`ComponentTruth` or a dict of contribution arrays.
    Components absent from ``predicted`` are scored against zeros, so their
    RMSE equals the truth's standard deviation. ``mask`` restricts scoring
    to rows where it is true (and predictions are finite).
    """
    contributions = truth.contributions if isinstance(truth, ComponentTruth) else truth
    scores = {}
    for key, true in contributions.items():
        true = np.asarray(true, dtype=float)
        pred = predicted.get(key)
        pred = np.zeros_like(true) if pred is None else np.asarray(pred, dtype=float)
        if pred.shape != true.shape:
            raise LengthMismatch(f"component {key!r}: prediction length {len(pred)} != truth length {len(true)}")
        ok = np.isfinite(pred) & np.isfinite(true)
        if mask is not None:
            ok &= np.asarray(mask, dtype=bool)
        t, p = true[ok] - true[ok].mean(), pred[ok] - pred[ok].mean()
        scores[key] = float(np.sqrt(np.mean((t - p) ** 2)))
    return scores


def model_config_for(scenario, n_lags=None, **train):
    """A model configuration matching the components of ``scenario``.

    ``n_lags`` defaults to 3 for scenarios with auto-regression.
    """
    letters = scenario.letters if isinstance(scenario, SynthScenario) else SCENARIOS[scenario]
    mult = isinstance(scenario, SynthScenario) and scenario.multiplicative or scenario in MULTIPLICATIVE
    mode = "multiplicative" if mult else "additive"
    seasonalities = ()
    if "S" in letters:
        seasonalities = tuple(SeasonalityConfig(name, float(p), 5, mode) for name, p in SEASON_PERIODS.items())
    events = (EventConfig(EVENT_COLUMN, mode=mode),) if "E" in letters else ()
    future = (FutureRegressorConfig(FUTURE_COLUMN, mode=mode, normalize="off"),) if "F" in letters else ()
    lagged = (LaggedRegressorConfig(n_lags=3, name=COVARIATE_COLUMN),) if "L" in letters else ()
    if n_lags is None:
        n_lags = 3 if "A" in letters else 0
    config = ModelConfig(
        trend=TrendConfig(enabled="T" in letters),
        seasonality_auto=False,
        seasonalities=seasonalities,
        events=events,
        future_regressors=future,
        lagged_regressors=lagged,
        ar=ARConfig(n_lags=n_lags),
    )
    if train:
        config = config.replace(train=replace(config.train, **train))
    return config


def write_scenario(scenario, out_dir):
    """Write one CSV per series plus ``manifest.json``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    manifest = {"scenario": asdict(scenario), "components": scenario.letters, "series": []}
    for i in range(scenario.n_series):
        df, truth = compose_scenario(scenario, i)
        path = out_dir / f"{scenario.name}_{i}.csv"
        out = df.copy()
        out["ds"] = out["ds"].dt.strftime("%Y-%m-%d")
        out.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        paths.append(path)
        manifest["series"].append({"file": path.name, "params": truth.params})
    manifest["settings"] = {
        "epoch": EPOCH,
        "season_periods": SEASON_PERIODS,
        "future_coeffs": FUTURE_COEFFS,
        "ar_coeffs": AR_COEFFS,
        "covariate_coeffs": COVARIATE_COEFFS,
        "process_sigma": PROCESS_SIGMA,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
