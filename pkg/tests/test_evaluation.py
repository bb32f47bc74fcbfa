import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decompcast import ModelConfig
from decompcast.config import ARConfig, TrainConfig
from decompcast.errors import InsufficientData, LengthMismatch, ZeroDenominator
from decompcast.evaluation import (
    BacktestReport,
    FoldSpec,
    NaiveForecaster,
    describe,
    mae,
    make_folds,
    mase,
    rmse,
    rmsse,
    rolling_origin_eval,
    run_backtest,
)


def _walk(n, seed):
    y = np.cumsum(np.random.default_rng(seed).normal(size=n))
    return pd.DataFrame({"ds": pd.date_range("2020-01-01", periods=n, freq="D"), "y": y})


# -- metrics ------------------------------------------------------------------


def test_mase_example():
    # naive in-sample MAE is 1, test MAE is 1
    assert mase([1, 2, 3, 4], [5, 6], [6, 7]) == pytest.approx(1.0)


def test_rmsse_example():
    assert rmsse([0, 1, 0, 1], [3, 3], [4, 2]) == pytest.approx(1.0)


def test_plain_metrics():
    assert rmse([1, 2], [1, 4]) == pytest.approx(np.sqrt(2))
    assert mae([1, 2], [1, 4]) == pytest.approx(1.0)


def test_metric_errors():
    with pytest.raises(ZeroDenominator):
        mase([3, 3, 3], [1], [2])
    with pytest.raises(ZeroDenominator):
        rmsse([3, 3, 3], [1], [2])
    with pytest.raises(InsufficientData):
        mase([1.0], [1], [2])
    with pytest.raises(LengthMismatch):
        mase([1, 2], [1, 2], [1])


def test_metrics_skip_missing_cells():
    assert mase([1, 2, 3], [1, np.nan, 3], [2, 5, 4]) == pytest.approx(1.0)


@settings(max_examples=100)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_scaled_metrics_are_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    train, test, pred = rng.normal(size=20), rng.normal(size=5), rng.normal(size=5)
    assert mase(c * train, c * test, c * pred) == pytest.approx(mase(train, test, pred), rel=1e-12)
    assert rmsse(c * train, c * test, c * pred) == pytest.approx(rmsse(train, test, pred), rel=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30), st.integers(0, 100))
def test_metrics_non_negative(train, seed):
    rng = np.random.default_rng(seed)
    try:
        values = [mase(train, rng.normal(size=4), rng.normal(size=4)), rmsse(train, [0.0], [1.0])]
    except ZeroDenominator:
        return
    assert all(v >= 0 and np.isfinite(v) for v in values)


# -- folds --------------------------------------------------------------------


def test_folds_for_100():
    folds = make_folds(100)
    assert [(f.train_end, f.test_end) for f in folds] == [(70, 80), (75, 85), (80, 90), (85, 95), (90, 100)]
    assert all(f.test_start == f.train_end for f in folds)


def test_single_fold():
    (f,) = make_folds(100, k=1)
    assert (f.train_end, f.test_start, f.test_end) == (90, 90, 100)


@given(st.integers(40, 20_000), st.integers(1, 5))
def test_fold_invariants(T, k):
    folds = make_folds(T, k)
    assert len(folds) == k
    sizes = {f.test_end - f.test_start for f in folds}
    assert sizes == {T // 10}
    for f in folds:
        assert f.train_end <= f.test_start < f.test_end <= T
    for a, b in zip(folds, folds[1:]):
        assert b.train_end > a.train_end


def test_default_folds_overlap_by_half():
    folds = make_folds(1000)
    for a, b in zip(folds, folds[1:]):
        overlap = a.test_end - b.test_start
        assert overlap == (a.test_end - a.test_start) // 2


def test_folds_too_short():
    with pytest.raises(InsufficientData):
        make_folds(5)


# -- rolling origin -----------------------------------------------------------


def test_rolling_origin_skips_incomplete_origins():
    frame = _walk(20, 0)
    fold = FoldSpec(1, 10, 10, 20)
    origins, yhat, ytrue = rolling_origin_eval(NaiveForecaster(3).fit(frame["y"][:10]), frame, fold, 3)
    assert len(origins) == 8
    assert yhat.shape == ytrue.shape == (8, 3)
    y = frame["y"].to_numpy()
    np.testing.assert_array_equal(yhat[:, 2], y[origins - 1])
    np.testing.assert_array_equal(ytrue[:, 2], y[origins + 2])


def test_naive_denominator_identity():
    # naive h=1 errors over the training rows reproduce the MASE denominator
    y = _walk(200, 1)["y"].to_numpy()
    origins, yhat = NaiveForecaster(1).forecast_matrix(y, 1, 200)
    assert mase(y, y[origins][:, None], yhat) == pytest.approx(1.0, abs=1e-12)


def test_naive_backtest_close_to_one():
    report = run_backtest(_walk(1000, 2), "naive", horizons=(1,))
    assert len(report.records) == 5
    assert report.frame["mase"].between(0.8, 1.25).all()


# -- report -------------------------------------------------------------------


def test_backtest_refits_once_per_fold_and_horizon(monkeypatch):
    import decompcast.evaluation as ev

    calls = []
    real_fit = ev.fit

    def counting_fit(df, config):
        calls.append((len(df), config.n_forecasts))
        return real_fit(df, config)

    monkeypatch.setattr(ev, "fit", counting_fit)
    cfg = ModelConfig(ar=ARConfig(n_lags=3), train=TrainConfig(epochs=2, learning_rate=0.01))
    report = run_backtest(_walk(200, 3), cfg, horizons=(1, 2))
    assert len(calls) == 10
    assert [c[0] for c in calls[:5]] == [140, 150, 160, 170, 180]
    assert {c[1] for c in calls} == {1, 2}
    assert set(report.frame["horizon"]) == {"1", "2"}
    assert report.frame["model"].iloc[0] == "ar3"


def test_report_aggregation_matches_hand_mean():
    report = run_backtest(_walk(500, 4), "naive", horizons=(1, 3))
    summary = report.summary()
    df = report.frame
    for h in ("1", "3"):
        row = summary[summary["horizon"] == h].iloc[0]
        vals = df.loc[df["horizon"] == h, "mase"].to_numpy()
        assert row["mase"] == pytest.approx(vals.sum() / len(vals))
        assert row["mase_std"] == pytest.approx(np.std(vals))


def test_report_is_deterministic(tmp_path):
    cfg = ModelConfig(ar=ARConfig(n_lags=2), train=TrainConfig(epochs=3))
    paths = []
    for name in ("a.csv", "b.csv"):
        report = run_backtest(_walk(200, 5), cfg, horizons=(1,))
        report.save(tmp_path / name, timing=False)
        paths.append(tmp_path / name)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    back = BacktestReport.read(paths[0])
    assert len(back.records) == 5


def test_failed_fold_is_recorded_not_fatal():
    cfg = ModelConfig(ar=ARConfig(n_lags=2), train=TrainConfig(epochs=2))
    report = run_backtest(_walk(200, 6), cfg, horizons=(1, float("inf")))
    df = report.frame
    assert (df.loc[df["horizon"] == "1", "status"] == "ok").all()
    assert df.loc[df["horizon"] == "inf", "status"].str.startswith("failed").all()
    assert report.partial
    assert "# partial" in report.to_text()


def test_time_only_whole_fold():
    cfg = ModelConfig(train=TrainConfig(epochs=3))
    report = run_backtest(_walk(300, 7), cfg, horizons=(float("inf"),))
    assert (report.frame["status"] == "ok").all()
    assert report.frame["model"].iloc[0] == "time-only"


def test_describe():
    assert describe("naive") == "naive"
    assert describe(ModelConfig()) == "time-only"
    assert describe(ModelConfig(ar=ARConfig(n_lags=30))) == "ar30"
