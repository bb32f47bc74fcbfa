"""Shared builders for the test suite."""

import numpy as np
import pandas as pd

from decompcast.config import (
    ARConfig,
    EventConfig,
    FutureRegressorConfig,
    LaggedRegressorConfig,
    ModelConfig,
    SeasonalityConfig,
    TrendConfig,
)
from decompcast.model import Objective, ParamLayout, fit_states, prepare_frame, resolve_structure, tabularize


def ar_series(coeffs, n, sigma=0.1, seed=0, burn_in=100):
    """Plain-loop AR simulation, independent of the library generator."""
    rng = np.random.default_rng(seed)
    p = len(coeffs)
    y = np.zeros(n + burn_in)
    e = rng.normal(0.0, sigma, n + burn_in)
    for t in range(p, n + burn_in):
        y[t] = sum(coeffs[i] * y[t - 1 - i] for i in range(p)) + e[t]
    return y[burn_in:]


def ols_ar(y, p):
    """Least-squares AR(p) coefficients with intercept (intercept dropped)."""
    X = np.column_stack([y[p - 1 - i : len(y) - 1 - i] for i in range(p)] + [np.ones(len(y) - p)])
    return np.linalg.lstsq(X, y[p:], rcond=None)[0][:p]


def frame(n=60, seed=0, start="2020-01-01", **extra):
    rng = np.random.default_rng(seed)
    df = pd.DataFrame({"ds": pd.date_range(start, periods=n, freq="D"), "y": rng.normal(size=n).cumsum()})
    for name, values in extra.items():
        df[name] = values
    return df


# module name -> config factory for the gradient suite
def _cfg(**kw):
    base = dict(seasonality_auto=False, trend=TrendConfig(enabled=False))
    base.update(kw)
    return ModelConfig(**base)


GRAD_MODULES = {
    "trend": lambda: _cfg(trend=TrendConfig(n_changepoints=4, changepoint_reg=0.5)),
    "seasonality": lambda: _cfg(
        trend=TrendConfig(n_changepoints=2),
        seasonalities=(
            SeasonalityConfig("weekly", 7.0, 3, "additive"),
            SeasonalityConfig("monthly", 30.0, 2, "multiplicative"),
        ),
    ),
    "events": lambda: _cfg(
        trend=TrendConfig(n_changepoints=1),
        events=(EventConfig("ev", mode="additive", window=(-1, 1)), EventConfig("mev", mode="multiplicative")),
    ),
    "regressors": lambda: _cfg(
        trend=TrendConfig(n_changepoints=1),
        future_regressors=(FutureRegressorConfig("f1"), FutureRegressorConfig("f2", mode="multiplicative")),
        lagged_regressors=(LaggedRegressorConfig(n_lags=3, name="x", sparsity=0.3),),
        n_forecasts=2,
    ),
    "linear_ar": lambda: _cfg(ar=ARConfig(n_lags=5, sparsity=0.7), n_forecasts=3),
    "deep_ar": lambda: _cfg(ar=ARConfig(n_lags=4, hidden_layers=(8, 8), sparsity=0.2, penalty="arnet"), n_forecasts=2),
}


def grad_instance(module, seed, loss="huber"):
    """A random small objective exercising ``module`` and a random point."""
    rng = np.random.default_rng(seed)
    config = GRAD_MODULES[module]()
    n = 40
    df = frame(n, seed)
    ev = np.zeros(n)
    ev[rng.choice(n, 4, replace=False)] = 1.0
    mev = np.zeros(n)
    mev[rng.choice(n, 3, replace=False)] = 1.0
    df["ev"], df["mev"] = ev, mev
    df["f1"], df["f2"], df["x"] = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    fr, freq = prepare_frame(df, config)
    time_range = (fr["ds"].iloc[0], fr["ds"].iloc[-1])
    structure = resolve_structure(config, time_range, freq)
    states = fit_states(fr, config)
    samples = tabularize(fr, structure, states, time_range)
    layout = ParamLayout(structure)
    objective = Objective(structure, layout, samples, loss, beta=rng.uniform(0.5, 2.0))
    theta = rng.normal(0.0, 0.5, layout.size)
    idx = rng.choice(len(objective), size=min(16, len(objective)), replace=False)
    reg_scale = rng.uniform(0.2, 1.0)
    return objective, theta, idx, reg_scale


def fd_relative_error(objective, theta, idx, reg_scale, step=1e-6):
    """Relative error of the analytic gradient against central differences."""
    _, grad, _ = objective.loss_grad(theta, idx, reg_scale)
    num = np.zeros_like(theta)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        num[i] = (objective.loss_grad(up, idx, reg_scale)[0] - objective.loss_grad(down, idx, reg_scale)[0]) / (
            2 * step
        )
    return float(np.linalg.norm(grad - num) / max(np.linalg.norm(num), np.linalg.norm(grad), 1e-8))
