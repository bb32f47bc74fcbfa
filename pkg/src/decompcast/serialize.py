"""Fitted-model files: versioned, self-describing JSON.

Floats are written with their shortest round-trip representation, so a
saved and reloaded model predicts bit-identically.
"""

from __future__ import annotations

import json

import numpy as np
import pandas as pd

from .config import ModelConfig
from .errors import ConfigError
from .model import FittedModel, Structure, states_from_dict, states_to_dict

FORMAT = "decompcast-model"
VERSION = 1


def model_to_dict(model):
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "config_fingerprint": model.config.fingerprint(),
        "structure": model.structure.to_dict(),
        "parameters": {
            "layout": [[name, sl.start, list(shape)] for name, (sl, shape) in model.layout.entries.items()],
            "theta": [float(v) for v in model.theta],
        },
        "normalization": states_to_dict(model.states),
        "time_range": [pd.Timestamp(t).isoformat() for t in model.time_range],
        "freq_seconds": model.freq.total_seconds(),
        "learning_rate": model.learning_rate,
        "train_info": model.train_info,
    }


def model_from_dict(d):
    if d.get("format") != FORMAT:
        raise ConfigError("not a model file")
    if d.get("version") != VERSION:
        raise ConfigError(f"unsupported model file version {d.get('version')!r}")
    config = ModelConfig.from_dict(d["config"])
    if config.fingerprint() != d["config_fingerprint"]:
        raise ConfigError("model file config does not match its fingerprint")
    model = FittedModel(
        config=config,
        structure=Structure.from_dict(d["structure"]),
        theta=np.array(d["parameters"]["theta"], dtype=float),
        states=states_from_dict(d["normalization"]),
        time_range=tuple(pd.Timestamp(t) for t in d["time_range"]),
        freq=pd.Timedelta(seconds=d["freq_seconds"]),
        learning_rate=d.get("learning_rate", float("nan")),
        train_info=d.get("train_info", {}),
    )
    stored = [[name, sl.start, list(shape)] for name, (sl, shape) in model.layout.entries.items()]
    if stored != d["parameters"]["layout"]:
        raise ConfigError("model file parameter layout does not match its structure")
    return model


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=True)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read model {path}: {err}") from None
    return model_from_dict(d)
