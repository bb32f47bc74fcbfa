"""Model assembly: resolved structure, per-row design matrices, the flat
parameter layout, the batch objective with exact gradients, and prediction.

All modules are linear in their parameters except AR-Net, so the batch
forward pass is

    yhat = T + X_add @ w_add + T * (X_mul @ w_mul) + AR(lags) + sum_x L_x(lags_x)

with ``T = trend_basis @ theta_trend``. Gradients are accumulated by hand in
reverse order of that expression.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import components, lagged
from .config import (
    ARConfig,
    EventConfig,
    FutureRegressorConfig,
    LaggedRegressorConfig,
    ModelConfig,
    SeasonalityConfig,
)
from .data import (
    NormalizationState,
    SampleSet,
    TimeSeries,
    impute_events,
    impute_missing,
    lag_matrix,
    make_samples,
    regularize,
    safe_normalization,
    valid_origins,
)
from .errors import ConfigError, ImputeAbort, MissingRegressor
from .losses import PENALTIES, point_loss

log = logging.getLogger(__name__)


# -- structure ----------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A named group of design columns belonging to one component."""

    name: str
    kind: str  # season | event | future
    mode: str
    width: int
    source: object


@dataclass(frozen=True)
class Structure:
    """Everything that fixes the parameter layout, resolved against data."""

    n_forecasts: int
    trend_enabled: bool
    changepoints: tuple
    seasonalities: tuple
    events: tuple
    future_regressors: tuple
    ar: ARConfig
    lagged_regressors: tuple
    changepoint_reg: float = 0.0

    @property
    def blocks(self):
        out = []
        for s in self.seasonalities:
            out.append(Block(f"season_{s.name}", "season", s.mode, 2 * s.fourier_order, s))
        for e in self.events:
            out.append(Block(f"event_{e.name}", "event", e.mode, len(e.offsets), e))
        for f in self.future_regressors:
            out.append(Block(f"future_{f.name}", "future", f.mode, 1, f))
        return out

    def mode_blocks(self, mode):
        """Blocks of one mode with their column slices in that mode's design."""
        out, start = [], 0
        for b in self.blocks:
            if b.mode == mode:
                out.append((b, slice(start, start + b.width)))
                start += b.width
        return out, start

    @property
    def n_lags(self):
        return self.ar.n_lags

    @property
    def max_lags(self):
        return max([self.ar.n_lags] + [c.n_lags for c in self.lagged_regressors])

    @property
    def is_time_only(self):
        return self.max_lags == 0

    def to_dict(self):
        return {
            "n_forecasts": self.n_forecasts,
            "trend_enabled": self.trend_enabled,
            "changepoints": list(self.changepoints),
            "changepoint_reg": self.changepoint_reg,
            "seasonalities": [dataclasses.asdict(s) for s in self.seasonalities],
            "events": [
                {**dataclasses.asdict(e), "dates": None if e.dates is None else list(e.dates), "window": list(e.window)}
                for e in self.events
            ],
            "future_regressors": [dataclasses.asdict(f) for f in self.future_regressors],
            "ar": {**dataclasses.asdict(self.ar), "hidden_layers": list(self.ar.hidden_layers)},
            "lagged_regressors": [
                {**dataclasses.asdict(c), "hidden_layers": list(c.hidden_layers)} for c in self.lagged_regressors
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n_forecasts=d["n_forecasts"],
            trend_enabled=d["trend_enabled"],
            changepoints=tuple(d["changepoints"]),
            changepoint_reg=d.get("changepoint_reg", 0.0),
            seasonalities=tuple(SeasonalityConfig(**s) for s in d["seasonalities"]),
            events=tuple(
                EventConfig(**{**e, "dates": None if e["dates"] is None else tuple(e["dates"])}) for e in d["events"]
            ),
            future_regressors=tuple(FutureRegressorConfig(**f) for f in d["future_regressors"]),
            ar=ARConfig(**d["ar"]),
            lagged_regressors=tuple(LaggedRegressorConfig(**c) for c in d["lagged_regressors"]),
        )


def resolve_structure(config, time_range, freq):
    """Resolve automatic seasonality, holidays and changepoints."""
    t0, t1 = time_range
    seasonalities = {}
    if config.seasonality_auto:
        for s in components.auto_configure_seasonality(freq, t1 - t0):
            seasonalities[s.name] = s
    for s in config.seasonalities:
        seasonalities[s.name] = s
    events = list(config.events)
    if config.holidays is not None:
        for country in config.holidays.countries:
            events.extend(components.country_holidays(country, config.holidays.window, config.holidays.mode))
    names = [e.name for e in events]
    if len(set(names)) != len(names):
        raise ConfigError("event names must be unique")
    cps = ()
    if config.trend.enabled:
        custom = None
        if config.trend.changepoints is not None:
            custom = [_normalize_time_value(c, time_range) for c in config.trend.changepoints]
        cps = tuple(
            components.init_changepoints(config.trend.n_changepoints, config.trend.changepoint_range, custom)
        )
    return Structure(
        n_forecasts=config.n_forecasts,
        trend_enabled=config.trend.enabled,
        changepoints=cps,
        seasonalities=tuple(seasonalities.values()),
        events=tuple(events),
        future_regressors=tuple(config.future_regressors),
        ar=config.ar,
        lagged_regressors=tuple(config.lagged_regressors),
        changepoint_reg=config.trend.changepoint_reg,
    )


def _normalize_time_value(value, time_range):
    if isinstance(value, (int, float)):
        return float(value)
    t0, t1 = time_range
    return float((pd.Timestamp(value) - t0) / (t1 - t0))


def normalized_time(timestamps, time_range):
    t0, t1 = time_range
    span = max((t1 - t0).value, 1)
    return (pd.DatetimeIndex(timestamps).asi8 - t0.value) / span


# -- parameter layout ---------------------------------------------------------


class ParamLayout:
    """Named slices of one flat parameter vector."""

    def __init__(self, structure):
        self.entries = {}
        self.size = 0
        h = structure.n_forecasts
        self._add("trend", (2 + len(structure.changepoints),) if structure.trend_enabled else (1,))
        self._add("additive", (structure.mode_blocks("additive")[1],))
        self._add("multiplicative", (structure.mode_blocks("multiplicative")[1],))
        self.nets = {}
        if structure.ar.n_lags:
            self.nets["ar"] = self._add_net("ar", structure.ar, h)
        for cov in structure.lagged_regressors:
            self.nets[f"lagged_{cov.name}"] = self._add_net(f"lagged_{cov.name}", cov, h)

    def _add(self, name, shape):
        n = int(np.prod(shape))
        self.entries[name] = (slice(self.size, self.size + n), tuple(shape))
        self.size += n
        return name

    def _add_net(self, prefix, cfg, h):
        names_w, names_b = [], []
        for i, (w, b) in enumerate(lagged.layer_shapes(cfg.n_lags, h, cfg.hidden_layers)):
            names_w.append(self._add(f"{prefix}.w{i}", w))
            if b is not None:
                names_b.append(self._add(f"{prefix}.b{i}", b))
        return names_w, names_b

    def view(self, theta, name):
        sl, shape = self.entries[name]
        return theta[sl].reshape(shape)

    def net(self, theta, key):
        names_w, names_b = self.nets[key]
        return lagged.ARNetParams([self.view(theta, n) for n in names_w], [self.view(theta, n) for n in names_b])

    def module_slices(self):
        """Parameter slices grouped by model module."""
        out = {}
        for name, (sl, _) in self.entries.items():
            module = name.split(".")[0]
            if sl.stop > sl.start:
                out.setdefault(module, []).append(sl)
        return out


def init_theta(structure, layout, seed=0):
    theta = np.zeros(layout.size)
    rng = np.random.default_rng(seed)
    for key in layout.nets:
        cfg = structure.ar if key == "ar" else next(
            c for c in structure.lagged_regressors if f"lagged_{c.name}" == key
        )
        init = lagged.ARNetParams.init(cfg.n_lags, structure.n_forecasts, cfg.hidden_layers, rng)
        net = layout.net(theta, key)
        for dst, src in zip(net.weights + net.biases, init.weights + init.biases):
            dst[...] = src
    return theta


# -- design -------------------------------------------------------------------


@dataclass
class Design:
    """Per-row time features."""

    t: np.ndarray
    trend: np.ndarray
    additive: np.ndarray
    multiplicative: np.ndarray
    row_ok: np.ndarray


def build_design(structure, frame, time_range, states):
    ts = pd.DatetimeIndex(frame["ds"])
    n = len(ts)
    t = normalized_time(ts, time_range)
    trend = components.trend_basis(t, structure.changepoints) if structure.trend_enabled else np.ones((n, 1))
    t_days = components.days_since_epoch(ts)
    mats = {}
    for mode in ("additive", "multiplicative"):
        blocks, width = structure.mode_blocks(mode)
        mat = np.zeros((n, width))
        for block, sl in blocks:
            src = block.source
            if block.kind == "season":
                mat[:, sl] = components.fourier_features(t_days, src.period_days, src.fourier_order)
            elif block.kind == "event":
                mat[:, sl] = components.event_features(ts, [src], frame)[0]
            else:
                if src.name not in frame:
                    raise MissingRegressor(f"future regressor '{src.name}' is missing from the input")
                mat[:, sl.start] = states[src.name].transform(frame[src.name].to_numpy(dtype=float))
        mats[mode] = mat
    row_ok = np.isfinite(mats["additive"]).all(axis=1) & np.isfinite(mats["multiplicative"]).all(axis=1)
    return Design(t, trend, mats["additive"], mats["multiplicative"], row_ok)


def prepare_frame(df, structure, impute=True, freq=None):
    """Regularize ``df`` and impute its series per module conventions."""
    frame, freq = regularize(df, freq)
    if "y" not in frame:
        frame["y"] = np.nan
    if impute and not structure.is_time_only:
        frame["y"] = _impute_column(frame, "y")
    for cov in structure.lagged_regressors:
        if cov.name not in frame:
            raise ConfigError(f"input is missing lagged regressor column '{cov.name}'")
        if impute:
            frame[cov.name] = _impute_column(frame, cov.name)
    for reg in structure.future_regressors:
        if reg.name in frame and impute:
            frame[reg.name] = _impute_column(frame, reg.name)
    for event in structure.events:
        if event.dates is None and event.name in frame:
            frame[event.name] = impute_events(frame[event.name])
    return frame, freq


def _impute_column(frame, column):
    series = TimeSeries(frame["ds"], frame[column].to_numpy(dtype=float), _grid_freq(frame))
    try:
        return impute_missing(series).values
    except ImputeAbort as err:
        log.warning("column %r: %s; dropping missing rows instead", column, err)
        return series.values


def _grid_freq(frame):
    return frame["ds"].iloc[1] - frame["ds"].iloc[0] if len(frame) > 1 else pd.Timedelta(days=1)


# -- objective ----------------------------------------------------------------


class Objective:
    """Mean point loss plus ramped regularization over mini-batches of a
    :class:`SampleSet`, with exact gradients w.r.t. the flat parameters."""

    def __init__(self, structure, layout, samples, loss="huber", beta=1.0, reg=None):
        self.structure = structure
        self.layout = layout
        self.samples = samples
        self.loss = loss
        self.beta = beta
        d = samples.design
        tidx = samples.target_index
        # gather per-sample target rows once; batches index these
        self.trend_x = d.trend[tidx]
        self.add_x = d.additive[tidx] if d.additive.shape[1] else None
        self.mul_x = d.multiplicative[tidx] if d.multiplicative.shape[1] else None
        self.targets = samples.targets
        self.inputs = {}
        if "ar" in layout.nets:
            self.inputs["ar"] = samples.ar_lags
        for cov in structure.lagged_regressors:
            self.inputs[f"lagged_{cov.name}"] = samples.covariate_lags[cov.name]
        self.reg_terms = list(reg_terms(structure, layout)) if reg is None else reg

    def __len__(self):
        return len(self.targets)

    def predict(self, theta, idx):
        return self._forward(theta, idx)[0]

    def _forward(self, theta, idx):
        lay = self.layout
        phi = self.trend_x[idx]
        trend = phi @ lay.view(theta, "trend")
        yhat = trend.copy()
        cache = {"phi": phi, "trend": trend}
        if self.add_x is not None:
            xa = self.add_x[idx]
            yhat += xa @ lay.view(theta, "additive")
            cache["xa"] = xa
        if self.mul_x is not None:
            xm = self.mul_x[idx]
            mult = xm @ lay.view(theta, "multiplicative")
            yhat += trend * mult
            cache["xm"], cache["mult"] = xm, mult
        for key, inputs in self.inputs.items():
            net = lay.net(theta, key)
            out, acts = lagged.forward(net, inputs[idx])
            yhat += out
            cache[key] = (net, acts)
        return yhat, cache

    def loss_grad(self, theta, idx, reg_scale=0.0):
        """Returns ``(loss, grad, resid)`` for the samples ``idx``."""
        lay = self.layout
        yhat, cache = self._forward(theta, idx)
        resid = yhat - self.targets[idx]
        values, dvalues = point_loss(resid, self.loss, self.beta)
        loss = float(values.mean())
        g = dvalues / resid.size
        grad = np.zeros_like(theta)

        phi = cache["phi"]
        g_trend = g * (1.0 + cache["mult"]) if "mult" in cache else g
        grad[lay.entries["trend"][0]] = phi.reshape(-1, phi.shape[-1]).T @ g_trend.ravel()
        if "xa" in cache:
            xa = cache["xa"]
            grad[lay.entries["additive"][0]] = xa.reshape(-1, xa.shape[-1]).T @ g.ravel()
        if "xm" in cache:
            xm = cache["xm"]
            grad[lay.entries["multiplicative"][0]] = xm.reshape(-1, xm.shape[-1]).T @ (g * cache["trend"]).ravel()
        for key in self.inputs:
            net, acts = cache[key]
            dws, dbs = lagged.backward(net, acts, g)
            names_w, names_b = lay.nets[key]
            for name, d in zip(names_w + names_b, dws + dbs):
                grad[lay.entries[name][0]] = d.ravel()

        if reg_scale > 0:
            for sl, strength, fn, dfn, kwargs in self.reg_terms:
                w = theta[sl]
                loss += reg_scale * strength * fn(w, **kwargs)
                grad[sl] += reg_scale * strength * dfn(w, **kwargs)
        return loss, grad, resid


def reg_terms(structure, layout):
    """``(slice, strength, penalty, penalty_grad, kwargs)`` per regularized
    parameter group. Only the changepoint rate adjustments and the first
    AR-Net layer of each lagged module are penalized."""
    if structure.trend_enabled and structure.changepoints:
        strength = structure.changepoint_reg
        sl = layout.entries["trend"][0]
        if strength > 0:
            fn, dfn, kw = PENALTIES["trend"]
            yield slice(sl.start + 2, sl.stop), strength, fn, dfn, kw
    nets = [("ar", structure.ar)] if structure.ar.n_lags else []
    nets += [(f"lagged_{c.name}", c) for c in structure.lagged_regressors]
    for key, cfg in nets:
        if cfg.sparsity > 0:
            fn, dfn, kw = PENALTIES[cfg.penalty]
            yield layout.entries[layout.nets[key][0][0]][0], cfg.sparsity, fn, dfn, kw


# -- fitted model -------------------------------------------------------------


@dataclass
class FittedModel:
    """Learned parameters plus everything needed to reproduce predictions."""

    config: ModelConfig
    structure: Structure
    theta: np.ndarray
    states: dict
    time_range: tuple
    freq: pd.Timedelta
    history: list = field(default_factory=list)
    learning_rate: float = float("nan")
    train_info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layout = ParamLayout(self.structure)
        if self.layout.size != len(self.theta):
            raise ValueError("parameter vector does not match the model structure")

    @property
    def n_forecasts(self):
        return self.structure.n_forecasts

    def params(self, name):
        return self.layout.view(self.theta, name)

    def trend_params(self):
        th = self.params("trend")
        if not self.structure.trend_enabled:
            return components.TrendParams(0.0, float(th[0]))
        return components.TrendParams(th[0], th[1], self.structure.changepoints, th[2:])

    def net(self, key="ar"):
        return self.layout.net(self.theta, key)

    # prediction ------------------------------------------------------------

    def _prepared(self, df):
        frame, _ = prepare_frame(df, self.structure, self.config.impute, self.freq)
        for reg in self.structure.future_regressors:
            if reg.name not in frame or frame[reg.name].isna().any():
                raise MissingRegressor(f"future regressor '{reg.name}' has no value for some requested timestamps")
        design = build_design(self.structure, frame, self.time_range, self.states)
        return frame, design

    def raw_forecast(self, df):
        """Forecasts in normalized units.

        Returns ``(frame, parts)`` where ``parts`` holds per-row time
        components and per-origin ``(n_rows, h)`` AR/lagged effects
        (NaN where an origin has no usable inputs).
        """
        frame, design = self._prepared(df)
        s = self.structure
        lay = self.layout
        n, h = len(frame), s.n_forecasts
        y = self.states["y"].transform(frame["y"].to_numpy(dtype=float))
        trend = design.trend @ lay.view(self.theta, "trend")
        parts = {"trend": trend, "time": trend.copy(), "blocks": {}, "nets": {}}
        for mode in ("additive", "multiplicative"):
            blocks, _ = s.mode_blocks(mode)
            x, w = getattr(design, mode), lay.view(self.theta, mode)
            for block, sl in blocks:
                value = x[:, sl] @ w[sl]
                if mode == "multiplicative":
                    value = trend * value
                parts["blocks"][block.name] = value
                parts["time"] = parts["time"] + value
        covs = {}
        for cov in s.lagged_regressors:
            covs[cov.name] = (self.states[cov.name].transform(frame[cov.name].to_numpy(dtype=float)), cov.n_lags)
        origins = valid_origins(y, s.n_lags, h, list(covs.values()), design.row_ok, require_targets=False)
        parts["origins"] = origins
        if s.n_lags:
            parts["nets"]["ar"] = self._net_by_origin("ar", lag_matrix(y, s.n_lags, origins), origins, n)
        for cov in s.lagged_regressors:
            values, p = covs[cov.name]
            key = f"lagged_{cov.name}"
            parts["nets"][key] = self._net_by_origin(key, lag_matrix(values, p, origins), origins, n)
        valid = np.zeros(n, dtype=bool)
        valid[origins] = True
        parts["valid_origin"] = valid
        parts["row_ok"] = design.row_ok
        return frame, parts

    def _net_by_origin(self, key, inputs, origins, n):
        out = np.full((n, self.structure.n_forecasts), np.nan)
        if len(origins):
            out[origins] = lagged.forward(self.layout.net(self.theta, key), inputs)[0]
        return out

    def predict(self, df, decompose=True):
        """Forecast frame for the rows of ``df``.

        Column ``yhat{i}`` holds the forecast for the row issued ``i`` steps
        earlier (origin ``row - i + 1``); ``ar{i}`` and ``lagged_<name>{i}``
        are that forecast's lagged contributions. Time components do not
        depend on the origin and get one column each. Cells without a
        forecast of that age are NaN.
        """
        frame, parts = self.raw_forecast(df)
        st = self.states["y"]
        n, h = len(frame), self.structure.n_forecasts
        out = {"ds": frame["ds"].to_numpy(), "y": frame["y"].to_numpy(dtype=float)}
        rows = np.arange(n)
        comp_cols = {"trend": st.inverse(parts["trend"])}
        for name, value in parts["blocks"].items():
            comp_cols[name] = value * st.scale
        age_cols = {}
        for i in range(1, h + 1):
            origin = rows - (i - 1)
            ok = origin >= 0
            ok[ok] &= parts["valid_origin"][origin[ok]]
            ok &= parts["row_ok"]
            total = np.where(ok, parts["time"], np.nan)
            for key, effect in parts["nets"].items():
                value = np.full(n, np.nan)
                value[ok] = effect[origin[ok], i - 1]
                total = total + value
                age_cols[f"{key}{i}"] = value * st.scale
            out[f"yhat{i}"] = st.inverse(total)
        if decompose:
            out.update(comp_cols)
            for key in parts["nets"]:
                for i in range(1, h + 1):
                    out[f"{key}{i}"] = age_cols[f"{key}{i}"]
        return pd.DataFrame(out)

    def forecast_matrix(self, df, start, stop):
        """Rolling forecasts with origins in ``[start, stop - h]``.

        Returns ``(origins, yhat)`` with ``yhat`` of shape ``(n_origins, h)``
        in data units; the lag inputs of each origin come from observed
        values before it, parameters stay fixed.
        """
        frame, parts = self.raw_forecast(df)
        h = self.structure.n_forecasts
        origins = np.arange(start, stop - h + 1)
        origins = origins[parts["valid_origin"][origins]]
        tidx = origins[:, None] + np.arange(h)[None, :]
        total = parts["time"][tidx]
        for effect in parts["nets"].values():
            total = total + effect[origins]
        return origins, self.states["y"].inverse(total)

    def in_sample_components(self, df):
        """Per-row component contributions in data units, for scoring."""
        frame, parts = self.raw_forecast(df)
        st = self.states["y"]
        out = {"trend": st.inverse(parts["trend"])}
        for name, value in parts["blocks"].items():
            out[name] = value * st.scale
        for key, effect in parts["nets"].items():
            value = np.full(len(frame), np.nan)
            value[parts["origins"]] = effect[parts["origins"], 0]
            out[key] = value * st.scale
        return out


def tabularize(frame, structure, states, time_range):
    """Samples for training from a prepared frame.

    One sample per origin whose ``n_lags`` inputs and ``h`` targets are
    observed; with lags the first ``p`` rows and the last ``h - 1`` rows
    yield no sample.
    """
    design = build_design(structure, frame, time_range, states)
    y = states["y"].transform(frame["y"].to_numpy(dtype=float))
    covs = {}
    for cov in structure.lagged_regressors:
        covs[cov.name] = (states[cov.name].transform(frame[cov.name].to_numpy(dtype=float)), cov.n_lags)
    return make_samples(y, structure.n_lags, structure.n_forecasts, covs, design.row_ok, design)


def fit_states(frame, config):
    """Normalization state per normalized column."""
    states = {"y": safe_normalization(frame["y"].to_numpy(dtype=float), config.normalize, "y")}
    for reg in config.future_regressors:
        if reg.name not in frame:
            raise ConfigError(f"input is missing future regressor column '{reg.name}'")
        states[reg.name] = safe_normalization(frame[reg.name].to_numpy(dtype=float), reg.normalize, reg.name)
    for cov in config.lagged_regressors:
        states[cov.name] = safe_normalization(frame[cov.name].to_numpy(dtype=float), cov.normalize, cov.name)
    return states


def states_to_dict(states):
    return {k: v.to_dict() for k, v in states.items()}


def states_from_dict(d):
    return {k: NormalizationState(**v) for k, v in d.items()}
