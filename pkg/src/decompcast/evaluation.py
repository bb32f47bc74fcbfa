"""Scaled error metrics and the expanding-origin backtest."""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import regularize
from .errors import DecompcastError, InsufficientData, LengthMismatch, ZeroDenominator
from .train import fit

log = logging.getLogger(__name__)

INF = math.inf
METRICS = ("mase", "rmsse", "rmse", "mae")


# -- metrics ------------------------------------------------------------------


def _errors(test_y, test_yhat):
    y = np.asarray(test_y, dtype=float)
    yhat = np.asarray(test_yhat, dtype=float)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"test arrays differ in shape: {y.shape} vs {yhat.shape}")
    err = (yhat - y).ravel()
    return err[np.isfinite(err)]


def _naive_scale(train_y, power):
    train = np.asarray(train_y, dtype=float)
    train = train[np.isfinite(train)]
    if len(train) < 2:
        raise InsufficientData("need at least two training values to scale errors")
    denom = float(np.mean(np.abs(np.diff(train)) ** power))
    if denom == 0.0:
        raise ZeroDenominator("training series is constant; scaled error is undefined")
    return denom


def mase(train_y, test_y, test_yhat):
    """Mean absolute error over all origins and horizon steps, divided by
    the in-sample mean absolute first difference of ``train_y``."""
    denom = _naive_scale(train_y, 1)
    err = _errors(test_y, test_yhat)
    if err.size == 0:
        return float("nan")
    return float(np.mean(np.abs(err)) / denom)


def rmsse(train_y, test_y, test_yhat):
    """Root mean squared error scaled by the in-sample naive one-step
    squared error."""
    denom = _naive_scale(train_y, 2)
    err = _errors(test_y, test_yhat)
    if err.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(err * err) / denom))


def rmse(test_y, test_yhat):
    err = _errors(test_y, test_yhat)
    return float(np.sqrt(np.mean(err * err))) if err.size else float("nan")


def mae(test_y, test_yhat):
    err = _errors(test_y, test_yhat)
    return float(np.mean(np.abs(err))) if err.size else float("nan")


# -- folds --------------------------------------------------------------------


@dataclass(frozen=True)
class FoldSpec:
    """Train rows ``[0, train_end)``, test rows ``[test_start, test_end)``."""

    index: int
    train_end: int
    test_start: int
    test_end: int

    @property
    def test_size(self):
        return self.test_end - self.test_start


def make_folds(T, k=5, test_frac=0.10, step_frac=0.05):
    """Expanding-origin folds: fold ``i`` (1-based) trains on the first
    ``(1 - test_frac - (k - i) step_frac) T`` rows and tests on the next
    ``test_frac T``; the last fold tests on the final rows.

    Boundaries are floored to integers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    test_size = int(math.floor(test_frac * T))
    if test_size < 1:
        raise InsufficientData(f"T={T} gives empty test folds")
    folds = []
    for i in range(1, k + 1):
        # rounding first keeps 0.7 * 100 from flooring to 69
        train_end = int(math.floor(round((1.0 - test_frac - (k - i) * step_frac) * T, 9)))
        if train_end < 2 or train_end + test_size > T:
            raise InsufficientData(f"T={T} is too short for {k} folds")
        folds.append(FoldSpec(i, train_end, train_end, train_end + test_size))
    return folds


# -- reference model ----------------------------------------------------------


class NaiveForecaster:
    """Repeats the last observed value: ``yhat[t + i] = y[t - 1]``."""

    def __init__(self, n_forecasts=1):
        self.n_forecasts = n_forecasts

    def fit(self, y):
        self.last = float(np.asarray(y, dtype=float)[-1])
        return self

    def forecast_matrix(self, y, start, stop):
        y = np.asarray(y, dtype=float)
        h = self.n_forecasts
        origins = np.arange(max(start, 1), stop - h + 1)
        return origins, np.repeat(y[origins - 1][:, None], h, axis=1)


# -- rolling-origin evaluation ------------------------------------------------


def rolling_origin_eval(model, frame, fold, horizon=None):
    """Forecasts over one test fold without refitting.

    Returns ``(origins, yhat, ytrue)`` with ``(n_origins, h)`` arrays.
    Origins advance one step at a time and lag inputs are the observed
    values before each origin; origins whose ``h`` targets would leave the
    fold are skipped. Time-only models, and an infinite ``horizon``,
    forecast the whole fold from the end of training in one pass, giving
    one column.
    """
    data = frame.iloc[: fold.test_end]
    y = data["y"].to_numpy(dtype=float)
    whole_fold = horizon == INF
    if isinstance(model, NaiveForecaster):
        if whole_fold:
            origins = np.arange(fold.test_start, fold.test_end)
            yhat = np.full((len(origins), 1), y[fold.train_end - 1])
            return origins, yhat, y[origins][:, None]
        origins, yhat = model.forecast_matrix(y, fold.test_start, fold.test_end)
    elif whole_fold or model.structure.is_time_only:
        pred = model.predict(data, decompose=False)
        origins = np.arange(fold.test_start, fold.test_end)
        yhat = pred["yhat1"].to_numpy()[origins][:, None]
        return origins, yhat, y[origins][:, None]
    else:
        origins, yhat = model.forecast_matrix(data, fold.test_start, fold.test_end)
    tidx = origins[:, None] + np.arange(yhat.shape[1])[None, :]
    return origins, yhat, y[tidx]


# -- backtest -----------------------------------------------------------------


def describe(config):
    """Short model label for reports."""
    if config == "naive":
        return "naive"
    if config.is_time_only:
        return "time-only"
    label = f"ar{config.n_lags}" if config.n_lags else "no-ar"
    for cov in config.lagged_regressors:
        label += f"+{cov.name}{cov.n_lags}"
    return label


def _horizon_label(h):
    return "inf" if h == INF else str(int(h))


@dataclass
class BacktestReport:
    """One record per model, fold and horizon, with metric aggregates."""

    records: list = field(default_factory=list)

    @property
    def frame(self):
        cols = ["model", "fold", "horizon", *METRICS, "train_s", "predict_s", "status"]
        return pd.DataFrame(self.records, columns=cols)

    @property
    def partial(self):
        return any(r["status"] != "ok" for r in self.records)

    def summary(self):
        """Mean and population standard deviation across successful folds."""
        df = self.frame
        df = df[df["status"] == "ok"]
        cols = [*METRICS, "train_s", "predict_s"]
        grouped = df.groupby(["model", "horizon"], sort=False)[cols]
        return grouped.mean().join(grouped.std(ddof=0), rsuffix="_std").reset_index()

    def table(self, metric="mase"):
        """Mean (std) of ``metric`` per model and horizon, horizons as columns."""
        summary = self.summary()
        horizons = list(dict.fromkeys(summary["horizon"]))
        lines = []
        header = f"{'model':<16}" + "".join(f"{'h=' + h:>20}" for h in horizons)
        lines.append(f"{metric.upper()} mean (std) over folds")
        lines.append(header)
        for model, rows in summary.groupby("model", sort=False):
            cells = []
            for h in horizons:
                row = rows[rows["horizon"] == h]
                if row.empty:
                    cells.append(f"{'-':>20}")
                else:
                    r = row.iloc[0]
                    cells.append(f"{r[metric]:>11.3f} ({r[metric + '_std']:.3f})")
            lines.append(f"{model:<16}" + "".join(cells))
        times = summary.groupby("model", sort=False)[["train_s", "predict_s"]].mean()
        lines.append("")
        lines.append(f"{'model':<16}{'train s':>12}{'predict s':>12}")
        for model, r in times.iterrows():
            lines.append(f"{model:<16}{r['train_s']:>12.2f}{r['predict_s']:>12.3f}")
        return "\n".join(lines)

    def to_text(self, timing=True):
        """Records as CSV, then a ``# summary`` block with the aggregates.

        With ``timing=False`` the wall-clock columns are blanked so reruns
        produce identical text.
        """
        df = self.frame
        summary = self.summary()
        if not timing:
            df[["train_s", "predict_s"]] = np.nan
            for col in ("train_s", "predict_s", "train_s_std", "predict_s_std"):
                summary[col] = np.nan
        buf = io.StringIO()
        df.to_csv(buf, index=False, float_format="%.10g", lineterminator="\n")
        buf.write("# summary\n")
        summary.to_csv(buf, index=False, float_format="%.10g", lineterminator="\n")
        if self.partial:
            buf.write("# partial: some folds failed\n")
        return buf.getvalue()

    def save(self, path, timing=True):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text(timing))

    @classmethod
    def read(cls, path):
        """Parse the record block of a saved report."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read().split("# summary\n")[0]
        df = pd.read_csv(io.StringIO(text), dtype={"horizon": str})
        return cls(df.to_dict("records"))


def _fold_record(label, fold, horizon, train_y, ytrue, yhat, train_s, predict_s):
    return {
        "model": label,
        "fold": fold.index,
        "horizon": _horizon_label(horizon),
        "mase": mase(train_y, ytrue, yhat),
        "rmsse": rmsse(train_y, ytrue, yhat),
        "rmse": rmse(ytrue, yhat),
        "mae": mae(ytrue, yhat),
        "train_s": train_s,
        "predict_s": predict_s,
        "status": "ok",
    }


def run_backtest(df, config, horizons=(1,), k=5, label=None, report=None):
    """Expanding-origin backtest of ``config`` (a :class:`ModelConfig` or
    ``"naive"``) at each horizon.

    Per fold the model is refit on the training rows (train time includes
    the learning-rate range test), then evaluated by rolling origins over
    the test rows. A fold that fails is recorded with its error and the
    backtest continues.
    """
    frame, _ = regularize(df)
    folds = make_folds(len(frame), k)
    label = label or describe(config)
    report = report if report is not None else BacktestReport()
    y = frame["y"].to_numpy(dtype=float)
    for h in horizons:
        h = INF if h in ("inf", INF) else int(h)
        for fold in folds:
            train_y = y[: fold.train_end]
            try:
                started = time.perf_counter()
                if config == "naive":
                    model = NaiveForecaster(1 if h == INF else h).fit(train_y)
                else:
                    cfg = config
                    if h != INF and not config.is_time_only:
                        cfg = config.replace(n_forecasts=h)
                    elif h == INF and not config.is_time_only:
                        raise InsufficientData("models with lags cannot forecast an unbounded horizon")
                    model = fit(frame.iloc[: fold.train_end], cfg)
                train_s = time.perf_counter() - started
                started = time.perf_counter()
                _, yhat, ytrue = rolling_origin_eval(model, frame, fold, h)
                predict_s = time.perf_counter() - started
                report.records.append(_fold_record(label, fold, h, train_y, ytrue, yhat, train_s, predict_s))
            except (DecompcastError, FloatingPointError, ValueError) as err:
                log.warning("%s fold %d h=%s failed: %s", label, fold.index, _horizon_label(h), err)
                report.records.append(
                    {
                        "model": label,
                        "fold": fold.index,
                        "horizon": _horizon_label(h),
                        **{m: float("nan") for m in METRICS},
                        "train_s": float("nan"),
                        "predict_s": float("nan"),
                        "status": f"failed: {type(err).__name__}",
                    }
                )
    return report
