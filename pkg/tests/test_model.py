import numpy as np
import pandas as pd
import pytest

from decompcast import ModelConfig, fit
from decompcast.config import (
    ARConfig,
    EventConfig,
    FutureRegressorConfig,
    HolidayConfig,
    LaggedRegressorConfig,
    SeasonalityConfig,
    TrainConfig,
)
from decompcast.errors import MissingRegressor
from decompcast.serialize import load_model, model_from_dict, model_to_dict, save_model

from helpers import ar_series


def _frame(n=400, seed=0):
    rng = np.random.default_rng(seed)
    ds = pd.date_range("2020-01-01", periods=n, freq="D")
    x = rng.normal(size=n)
    f = rng.normal(size=n)
    y = (
        np.sin(np.arange(n) * 2 * np.pi / 7)
        + 0.5 * np.r_[0.0, x[:-1]]
        + 0.3 * f
        + np.arange(n) / 100
        + rng.normal(0, 0.1, n)
    )
    return pd.DataFrame({"ds": ds, "y": y, "x": x, "f": f})


FULL = ModelConfig(
    n_forecasts=3,
    ar=ARConfig(n_lags=4),
    lagged_regressors=(LaggedRegressorConfig(name="x", n_lags=2),),
    future_regressors=(FutureRegressorConfig("f"),),
    seasonalities=(SeasonalityConfig("monthly", 30, 3, mode="multiplicative"),),
    events=(EventConfig("xmas", dates=("2020-12-25",), window=(-1, 1)),),
    train=TrainConfig(epochs=5),
)


@pytest.fixture(scope="module")
def full_model():
    df = _frame()
    return df, fit(df, FULL)


def test_forecast_frame_columns(full_model):
    df, model = full_model
    out = model.predict(df)
    for col in ["ds", "y", "yhat1", "yhat2", "yhat3", "trend", "season_weekly", "season_monthly",
                "event_xmas", "future_f", "ar1", "ar3", "lagged_x1", "lagged_x3"]:
        assert col in out.columns
    assert len(out) == len(df)
    assert list(model.predict(df, decompose=False).columns) == ["ds", "y", "yhat1", "yhat2", "yhat3"]


def test_components_sum_to_yhat(full_model):
    df, model = full_model
    out = model.predict(df)
    time_cols = ["trend", "season_weekly", "season_monthly", "event_xmas", "future_f"]
    for i in (1, 2, 3):
        total = out[time_cols].sum(axis=1) + out[f"ar{i}"] + out[f"lagged_x{i}"]
        ok = out[f"yhat{i}"].notna()
        assert ok.sum() > 300
        np.testing.assert_allclose(total[ok], out.loc[ok, f"yhat{i}"], rtol=0, atol=1e-9)
        assert total[~ok].isna().all()


def test_missing_forecasts_are_null(full_model):
    df, model = full_model
    out = model.predict(df)
    # age-i forecasts need max_lags history before their origin
    for i in (1, 2, 3):
        first = 4 + i - 1
        assert out[f"yhat{i}"].iloc[:first].isna().all()
        assert out[f"yhat{i}"].iloc[first:].notna().all()


def test_missing_future_regressor(full_model):
    df, model = full_model
    with pytest.raises(MissingRegressor):
        model.predict(df.drop(columns="f"))
    # interior gaps are imputed, trailing ones cannot be
    gap = df.copy()
    gap.loc[len(df) - 1, "f"] = np.nan
    with pytest.raises(MissingRegressor):
        model.predict(gap)


def test_no_leakage_from_future_values(full_model):
    df, model = full_model
    base = model.predict(df)
    k = 200
    bumped = df.copy()
    bumped.loc[k, ["y", "x"]] += 50.0
    out = model.predict(bumped)
    # forecasts issued at origins <= k never see y[k] or x[k]
    for i in (1, 2, 3):
        rows = slice(0, k + i)
        np.testing.assert_array_equal(out[f"yhat{i}"].iloc[rows], base[f"yhat{i}"].iloc[rows])


def test_serialization_round_trip_is_bit_exact(full_model, tmp_path):
    df, model = full_model
    path = tmp_path / "m.json"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.theta, model.theta)
    pd.testing.assert_frame_equal(loaded.predict(df), model.predict(df), check_exact=True)
    again = model_to_dict(model_from_dict(model_to_dict(model)))
    assert again == model_to_dict(model)


def test_forecast_matrix_matches_frame(full_model):
    df, model = full_model
    origins, yhat = model.forecast_matrix(df, 300, 350)
    out = model.predict(df, decompose=False)
    assert origins[0] == 300 and origins[-1] == 347
    for j, o in enumerate(origins[:5]):
        for i in range(3):
            assert yhat[j, i] == pytest.approx(out[f"yhat{i + 1}"].iloc[o + i], abs=1e-12)


def test_time_only_model_forecasts_future_rows():
    df = _frame()[["ds", "y"]]
    model = fit(df, ModelConfig(train=TrainConfig(epochs=5)))
    future = pd.DataFrame({"ds": pd.date_range(df["ds"].iloc[-1] + pd.Timedelta("1D"), periods=100)})
    out = model.predict(future)
    assert len(out) == 100
    assert out["yhat1"].notna().all()


def test_deep_ar_fits_and_is_deterministic():
    y = ar_series((0.3, 0.3), 400, seed=4)
    df = pd.DataFrame({"ds": pd.date_range("2020-01-01", periods=400), "y": y})
    cfg = ModelConfig(ar=ARConfig(n_lags=3, hidden_layers=(8, 8)), seasonality_auto=False,
                      train=TrainConfig(epochs=10))
    a, b = fit(df, cfg), fit(df, cfg)
    assert np.array_equal(a.theta, b.theta)
    out = a.predict(df)
    assert out["yhat1"].iloc[3:].notna().all()
    assert len(a.net("ar").weights) == 3


def test_holidays_become_event_columns():
    df = _frame(800)[["ds", "y"]]
    cfg = ModelConfig(holidays=HolidayConfig(countries=("US",)), train=TrainConfig(epochs=3))
    out = fit(df, cfg).predict(df)
    assert "event_us_christmas_day" in out.columns
    xmas = out.loc[out["ds"] == "2020-12-25", "event_us_christmas_day"].iloc[0]
    other = out.loc[out["ds"] == "2020-12-20", "event_us_christmas_day"].iloc[0]
    assert other == 0.0
    assert np.isfinite(xmas)
