"""Declarative model and training configuration.

Configs are plain dataclasses. ``ModelConfig.from_dict`` accepts the nested
key-value tree produced by a TOML file::

    [model]
    n_forecasts = 3
    normalize = "auto"

    [trend]
    n_changepoints = 10

    [seasonality.monthly]
    period_days = 30
    fourier_order = 5

    [ar]
    n_lags = 30

    [train]
    seed = 0
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("additive", "multiplicative")
NORMALIZE_MODES = ("auto", "off", "minmax", "standardize", "soft", "soft1")
LOSSES = ("huber", "mse", "mae")
OPTIMIZERS = ("adamw", "sgd")
PENALTIES = ("default", "arnet")


def _check_mode(mode, where):
    if mode not in MODES:
        raise ConfigError(f"{where}: mode must be one of {MODES}, got {mode!r}")
    return mode


def _check_window(window, where):
    try:
        lower, upper = (int(w) for w in window)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: window must be a pair [lower, upper]") from None
    if lower > 0 or upper < 0:
        raise ConfigError(f"{where}: window must satisfy lower <= 0 <= upper, got {window}")
    return (lower, upper)


@dataclass(frozen=True)
class TrendConfig:
    enabled: bool = True
    n_changepoints: int = 10
    # Explicit changepoints: timestamps (str) or normalized times (float).
    changepoints: Optional[tuple] = None
    changepoint_range: float = 0.85
    changepoint_reg: float = 0.0

    def __post_init__(self):
        if self.n_changepoints < 0:
            raise ConfigError("trend.n_changepoints must be >= 0")
        if not 0.0 < self.changepoint_range <= 1.0:
            raise ConfigError("trend.changepoint_range must lie in (0, 1]")
        if self.changepoint_reg < 0:
            raise ConfigError("trend.changepoint_reg must be >= 0")


@dataclass(frozen=True)
class SeasonalityConfig:
    name: str
    period_days: float
    fourier_order: int
    mode: str = "additive"

    def __post_init__(self):
        if self.period_days <= 0:
            raise ConfigError(f"seasonality.{self.name}: period_days must be > 0")
        if self.fourier_order < 1:
            raise ConfigError(f"seasonality.{self.name}: fourier_order must be >= 1")
        _check_mode(self.mode, f"seasonality.{self.name}")


@dataclass(frozen=True)
class EventConfig:
    """A named event. Without ``dates`` the occurrences are read from the
    data column of the same name (rows equal to 1)."""

    name: str
    dates: Optional[tuple] = None
    window: tuple = (0, 0)
    mode: str = "additive"

    def __post_init__(self):
        object.__setattr__(self, "window", _check_window(self.window, f"events.{self.name}"))
        _check_mode(self.mode, f"events.{self.name}")

    @property
    def offsets(self):
        return list(range(self.window[0], self.window[1] + 1))


@dataclass(frozen=True)
class HolidayConfig:
    countries: tuple = ()
    window: tuple = (0, 0)
    mode: str = "additive"

    def __post_init__(self):
        object.__setattr__(self, "window", _check_window(self.window, "holidays"))
        _check_mode(self.mode, "holidays")


@dataclass(frozen=True)
class FutureRegressorConfig:
    name: str
    mode: str = "additive"
    normalize: str = "auto"

    def __post_init__(self):
        _check_mode(self.mode, f"regressors.future.{self.name}")
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigError(f"regressors.future.{self.name}: bad normalize {self.normalize!r}")


@dataclass(frozen=True)
class ARConfig:
    n_lags: int = 0
    hidden_layers: tuple = ()
    sparsity: float = 0.0
    penalty: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(d) for d in self.hidden_layers))
        if self.n_lags < 0:
            raise ConfigError("n_lags must be >= 0")
        if any(d < 1 for d in self.hidden_layers):
            raise ConfigError("hidden layer dimensions must be >= 1")
        if self.sparsity < 0:
            raise ConfigError("sparsity must be >= 0")
        if self.penalty not in PENALTIES:
            raise ConfigError(f"penalty must be one of {PENALTIES}")


@dataclass(frozen=True)
class LaggedRegressorConfig(ARConfig):
    name: str = ""
    normalize: str = "auto"

    def __post_init__(self):
        super().__post_init__()
        if not self.name:
            raise ConfigError("lagged regressor needs a name")
        if self.n_lags < 1:
            raise ConfigError(f"regressors.lagged.{self.name}: n_lags must be >= 1")
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigError(f"regressors.lagged.{self.name}: bad normalize {self.normalize!r}")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "huber"
    huber_beta: float = 1.0
    optimizer: str = "adamw"
    learning_rate: Optional[float] = None
    batch_size: Optional[int] = None
    epochs: Optional[int] = None
    reg_ramp_start: float = 0.5
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"train.loss must be one of {LOSSES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer must be one of {OPTIMIZERS}")
        for key in ("huber_beta", "learning_rate", "batch_size", "epochs"):
            value = getattr(self, key)
            if value is not None and value <= 0:
                raise ConfigError(f"train.{key} must be positive")
        if not 0.0 <= self.reg_ramp_start <= 1.0:
            raise ConfigError("train.reg_ramp_start must lie in [0, 1]")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    n_forecasts: int = 1
    normalize: str = "auto"
    impute: bool = True
    trend: TrendConfig = field(default_factory=TrendConfig)
    seasonality_auto: bool = True
    seasonalities: tuple = ()
    events: tuple = ()
    holidays: Optional[HolidayConfig] = None
    future_regressors: tuple = ()
    lagged_regressors: tuple = ()
    ar: ARConfig = field(default_factory=ARConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_forecasts < 1:
            raise ConfigError("model.n_forecasts must be >= 1")
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigError(f"model.normalize must be one of {NORMALIZE_MODES}")
        names = [c.name for c in self.future_regressors] + [c.name for c in self.lagged_regressors]
        if len(set(names)) != len(names):
            raise ConfigError("regressor names must be unique")

    @property
    def n_lags(self):
        return self.ar.n_lags

    @property
    def max_lags(self):
        return max([self.ar.n_lags] + [c.n_lags for c in self.lagged_regressors])

    @property
    def is_time_only(self):
        return self.max_lags == 0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_seed(self, seed):
        return self.replace(train=dataclasses.replace(self.train, seed=int(seed)))

    # -- (de)serialization ---------------------------------------------

    def to_dict(self):
        """Nested plain-data form, inverse of :meth:`from_dict`."""
        out = {
            "model": {"n_forecasts": self.n_forecasts, "normalize": self.normalize, "impute": self.impute},
            "trend": _asdict(self.trend),
            "seasonality": {"auto": self.seasonality_auto},
            "ar": _asdict(self.ar),
            "train": _asdict(self.train),
        }
        for s in self.seasonalities:
            d = _asdict(s)
            out["seasonality"][d.pop("name")] = d
        if self.events:
            out["events"] = {}
            for e in self.events:
                d = _asdict(e)
                out["events"][d.pop("name")] = d
        if self.holidays is not None:
            out["holidays"] = _asdict(self.holidays)
        if self.future_regressors or self.lagged_regressors:
            out["regressors"] = {"future": {}, "lagged": {}}
            for r in self.future_regressors:
                d = _asdict(r)
                out["regressors"]["future"][d.pop("name")] = d
            for r in self.lagged_regressors:
                d = _asdict(r)
                out["regressors"]["lagged"][d.pop("name")] = d
        return out

    @classmethod
    def from_dict(cls, tree):
        tree = dict(tree or {})
        known = {"model", "trend", "seasonality", "events", "holidays", "regressors", "ar", "train"}
        unknown = set(tree) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            model = dict(tree.get("model", {}))
            season = dict(tree.get("seasonality", {}))
            auto = bool(season.pop("auto", True))
            seasonalities = tuple(
                SeasonalityConfig(name=name, **_table(body, f"seasonality.{name}"))
                for name, body in season.items()
            )
            events = tuple(
                EventConfig(name=name, **_listify(_table(body, f"events.{name}"), "dates"))
                for name, body in tree.get("events", {}).items()
            )
            holidays = None
            if "holidays" in tree:
                holidays = HolidayConfig(**_listify(dict(tree["holidays"]), "countries"))
            regs = dict(tree.get("regressors", {}))
            future = tuple(
                FutureRegressorConfig(name=name, **_table(body, f"regressors.future.{name}"))
                for name, body in regs.get("future", {}).items()
            )
            lagged = tuple(
                LaggedRegressorConfig(name=name, **_table(body, f"regressors.lagged.{name}"))
                for name, body in regs.get("lagged", {}).items()
            )
            trend = TrendConfig(**_listify(dict(tree.get("trend", {})), "changepoints"))
            return cls(
                trend=trend,
                seasonality_auto=auto,
                seasonalities=seasonalities,
                events=events,
                holidays=holidays,
                future_regressors=future,
                lagged_regressors=lagged,
                ar=ARConfig(**tree.get("ar", {})),
                train=TrainConfig(**tree.get("train", {})),
                **model,
            )
        except TypeError as err:
            raise ConfigError(f"invalid config key: {err}") from None

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            with open(path, "rb") as f:
                tree = json.load(f) if path.suffix == ".json" else tomllib.load(f)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        return cls.from_dict(tree)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _table(body, where):
    if not isinstance(body, dict):
        raise ConfigError(f"[{where}] must be a table")
    return dict(body)


def _listify(d, key):
    if d.get(key) is not None:
        d[key] = tuple(d[key])
    return d


def _asdict(obj):
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out
