"""Command-line interface: ``fit``, ``predict``, ``backtest`` and ``synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .config import ModelConfig
from .data import read_csv
from .errors import (
    ConfigError,
    DivergedTest,
    InsufficientData,
    LengthMismatch,
    MissingRegressor,
    NonFiniteGradient,
)
from .evaluation import BacktestReport, run_backtest
from .serialize import load_model, save_model
from .synth import SynthScenario, write_scenario
from .train import fit

log = logging.getLogger("decompcast")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INSUFFICIENT = 3
EXIT_DIVERGED = 4
EXIT_MISSING_REGRESSOR = 5


def _load_config(args):
    config = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _write_frame(df, path):
    out = df.copy()
    if "ds" in out:
        ds = pd.DatetimeIndex(out["ds"])
        out["ds"] = ds.strftime("%Y-%m-%d" if (ds == ds.normalize()).all() else "%Y-%m-%d %H:%M:%S")
    out.to_csv(path, index=False, na_rep="", float_format="%.17g", lineterminator="\n")


def cmd_fit(args):
    config = _load_config(args)
    df = read_csv(args.data)
    metrics_path = Path(args.metrics or f"{args.model_out}.metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as fh:

        def record(epoch):
            fh.write(json.dumps(epoch.to_dict()) + "\n")

        model = fit(df, config, progress_log=record)
    save_model(model, args.model_out)
    info = model.train_info
    log.info(
        "fitted %d samples in %.2fs (lr %.3g, %d epochs); model written to %s",
        info["n_samples"],
        info["seconds"],
        model.learning_rate,
        info["epochs"],
        args.model_out,
    )
    return EXIT_OK


def _extend(df, model, periods):
    """Append ``periods`` future rows at the model's frequency."""
    if not periods:
        return df
    last = df["ds"].iloc[-1]
    future = pd.DataFrame({"ds": pd.date_range(last + model.freq, periods=periods, freq=model.freq)})
    return pd.concat([df, future], ignore_index=True)


def plot_data(frame):
    """Long ``(ds, component, value)`` triples of every non-empty cell."""
    long = frame.melt(id_vars="ds", var_name="component", value_name="value")
    return long.dropna(subset=["value"]).reset_index(drop=True)


def cmd_predict(args):
    model = load_model(args.model)
    df = read_csv(args.data, require_y=False)
    df = _extend(df, model, args.periods)
    frame = model.predict(df, decompose=args.decompose)
    _write_frame(frame, args.out)
    if args.plot_data:
        _write_frame(plot_data(frame), args.plot_data)
    log.info("wrote %d rows to %s", len(frame), args.out)
    return EXIT_OK


def _parse_horizons(text):
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        if part in ("inf", "infinity"):
            out.append(float("inf"))
            continue
        try:
            h = int(part)
        except ValueError:
            raise ConfigError(f"invalid horizon {part!r}") from None
        if h < 1:
            raise ConfigError("horizons must be >= 1")
        out.append(h)
    return out


def cmd_backtest(args):
    horizons = _parse_horizons(args.horizons)
    df = read_csv(args.data)
    report = BacktestReport()
    if not args.naive_only:
        run_backtest(df, _load_config(args), horizons, k=args.folds, report=report)
    if args.naive or args.naive_only:
        run_backtest(df, "naive", horizons, k=args.folds, report=report)
    report.save(args.report_out, timing=not args.no_timing)
    print(report.table())
    if report.partial:
        log.warning("some folds failed; the report is marked partial")
    return EXIT_OK


def cmd_synth(args):
    kwargs = {"seed": args.seed if args.seed is not None else 0}
    if args.length:
        kwargs["length"] = args.length
    if args.series:
        kwargs["n_series"] = args.series
    scenario = SynthScenario(args.scenario, **kwargs)
    paths = write_scenario(scenario, args.out_dir)
    log.info("wrote %d series of %s to %s", len(paths), scenario.name, args.out_dir)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML or JSON model configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed override")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only log warnings")

    parser = argparse.ArgumentParser(prog="decompcast", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a model and save it")
    p.add_argument("data", help="input CSV with ds, y and regressor columns")
    p.add_argument("model_out", help="path of the model file to write")
    p.add_argument("--metrics", help="per-epoch metrics file (JSON lines); default <model_out>.metrics.jsonl")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="forecast with a saved model")
    p.add_argument("model", help="model file written by fit")
    p.add_argument("data", help="CSV with the timestamps to forecast and known history")
    p.add_argument("out", help="forecast CSV to write")
    p.add_argument("--decompose", action="store_true", help="include component columns")
    p.add_argument("--plot-data", help="also write (ds, component, value) triples here")
    p.add_argument("--periods", type=int, default=0, help="append this many future rows")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("backtest", parents=[common], help="expanding-origin backtest")
    p.add_argument("data", help="input CSV")
    p.add_argument("report_out", help="report file to write")
    p.add_argument("--horizons", default="1", help="comma-separated horizons, 'inf' for the whole fold")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--naive", action="store_true", help="also evaluate the naive reference model")
    p.add_argument("--naive-only", action="store_true", help="evaluate only the naive reference model")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock times for reproducible reports")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic benchmark scenario")
    p.add_argument("scenario", help="scenario id, e.g. S-TS")
    p.add_argument("out_dir")
    p.add_argument("--length", type=int)
    p.add_argument("--series", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_PARSE
    for name in ("config", "seed", "quiet"):
        if not hasattr(args, name):
            setattr(args, name, None if name != "quiet" else False)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except MissingRegressor as err:
        log.error("%s", err.args[0] if err.args else err)
        return EXIT_MISSING_REGRESSOR
    except InsufficientData as err:
        log.error("%s", err)
        return EXIT_INSUFFICIENT
    except (DivergedTest, NonFiniteGradient) as err:
        log.error("training diverged: %s", err)
        return EXIT_DIVERGED
    except (ConfigError, LengthMismatch, KeyError, ValueError) as err:
        log.error("%s", err.args[0] if isinstance(err, KeyError) and err.args else err)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
