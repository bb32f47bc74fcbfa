"""Mini-batch training: hyperparameter heuristics, learning-rate range test,
1cycle schedule, AdamW/SGD, and the fit loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import ModelConfig, TrainConfig
from .errors import DivergedTest, InsufficientData, NonFiniteGradient
from .model import (
    FittedModel,
    Objective,
    ParamLayout,
    fit_states,
    init_theta,
    prepare_frame,
    resolve_structure,
    tabularize,
)

log = logging.getLogger(__name__)

FALLBACK_LR = 1e-3


# -- heuristics ---------------------------------------------------------------


def batch_size_heuristic(n):
    """``min(n, max(16, min(256, 2 ** (2 + floor(log10 n)))))``"""
    if n < 1:
        raise ValueError("dataset length must be >= 1")
    b = 2 ** (2 + math.floor(math.log10(n)))
    return int(min(n, max(16, min(256, b))))


def epochs_heuristic(n):
    """``min(500, max(50, floor(1000 * 2 ** (2.5 log10 n) / n)))``"""
    if n < 1:
        raise ValueError("dataset length must be >= 1")
    raw = 1000.0 * 2.0 ** (2.5 * math.log10(n)) / n
    return int(min(500, max(50, math.floor(raw))))


def lr_test_iterations(n):
    """Iterations of one range-test run: ``100 + 50 log10(10 + n)`` rounded
    half up."""
    return int(math.floor(100 + 50 * math.log10(10 + n) + 0.5))


def reg_schedule(progress, strength=1.0, ramp_start=0.5):
    """Regularization strength: off until ``ramp_start``, then linear up to
    ``strength`` at the end of training."""
    if progress < ramp_start:
        return 0.0
    if ramp_start >= 1.0:
        return float(strength)
    return float(strength) * min(1.0, (progress - ramp_start) / (1.0 - ramp_start))


def one_cycle_lr(progress, eta, pct_start=0.3, div_factor=100.0, final_div_factor=5000.0):
    """Linear warmup from ``eta/100`` to ``eta`` over the first 30% of
    training, then cosine annealing down to ``eta/5000``."""
    start = eta / div_factor
    floor = eta / final_div_factor
    if progress <= pct_start:
        return start + (eta - start) * progress / pct_start
    frac = min(1.0, (progress - pct_start) / (1.0 - pct_start))
    return floor + (eta - floor) * 0.5 * (1.0 + math.cos(math.pi * frac))


# -- optimizers ---------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, size, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad, lr):
        self.t += 1
        theta *= 1.0 - lr * self.weight_decay
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta


class SGD:
    """SGD with momentum; weight decay is added to the gradient."""

    def __init__(self, size, momentum=0.9, weight_decay=1e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = None

    def step(self, theta, grad, lr):
        g = grad + self.weight_decay * theta if self.weight_decay else grad
        if self.buf is None:
            self.buf = g.copy()
        else:
            self.buf *= self.momentum
            self.buf += g
        theta -= lr * self.buf
        return theta


def make_optimizer(name, size, weight_decay=1e-4):
    if name == "adamw":
        return AdamW(size, weight_decay=weight_decay)
    if name == "sgd":
        return SGD(size, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")


def optimizer_step(theta, grad, lr, optimizer):
    """Apply one update in place, refusing non-finite gradients."""
    if not np.isfinite(grad).all():
        bad = np.flatnonzero(~np.isfinite(grad))
        raise NonFiniteGradient(f"non-finite gradient in {len(bad)} parameters (first index {bad[0]})")
    return optimizer.step(theta, grad, lr)


def batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


# -- learning-rate range test -------------------------------------------------


def steepest_lr(lrs, losses, skip_start=10, skip_end=5, smooth=5, diverge_factor=4.0):
    """Learning rate where the smoothed loss falls fastest per iteration.

    The curve is cut where the loss turns non-finite or the smoothed loss
    exceeds ``diverge_factor`` times its running minimum.
    """
    losses = np.asarray(losses, dtype=float)
    lrs = np.asarray(lrs, dtype=float)
    finite = np.isfinite(losses)
    if not finite.any():
        raise DivergedTest("all range-test losses are non-finite")
    stop = len(losses) if finite.all() else int(np.argmin(finite))
    losses, lrs = losses[:stop], lrs[:stop]
    smoothed = pd.Series(losses).rolling(smooth, center=True, min_periods=1).mean().to_numpy()
    blown = smoothed > diverge_factor * np.minimum.accumulate(smoothed)
    if blown.any():
        stop = int(np.argmax(blown))
        smoothed, lrs = smoothed[:stop], lrs[:stop]
    lo, hi = skip_start, len(smoothed) - skip_end
    if hi - lo < 2:
        lo, hi = 0, len(smoothed)
    if hi < 2:
        return float(lrs[0])
    # search only the descent: from where the loss leaves its starting
    # plateau down to the minimum, so plateau noise cannot win
    i_min = lo + int(np.argmin(smoothed[lo:hi]))
    plateau = float(np.median(losses[: max(lo, 1)]))
    drop = plateau - smoothed[i_min]
    if drop > 0:
        # start after the last point still at plateau level
        high = np.flatnonzero(smoothed[lo:i_min + 1] >= plateau - 0.1 * drop)
        start = lo + (int(high[-1]) + 1 if len(high) else 0)
        if i_min + 1 - start >= 2:
            lo, hi = start, i_min + 1
    slope = np.gradient(smoothed)[lo:hi]
    return float(lrs[lo + int(np.argmin(slope))])


def lr_range_run(make_objective, n_iter, batch_size, optimizer="adamw", seed=0, lr_min=1e-7, lr_max=1e2):
    """One range-test run; returns ``(lrs, losses)``."""
    objective, theta = make_objective()
    rng = np.random.default_rng(seed)
    opt = make_optimizer(optimizer, len(theta))
    lrs = lr_min * (lr_max / lr_min) ** (np.arange(n_iter) / max(n_iter - 1, 1))
    losses = np.full(n_iter, np.nan)
    it = iter(())
    for i, lr in enumerate(lrs):
        idx = next(it, None)
        if idx is None:
            it = batches(len(objective), batch_size, rng)
            idx = next(it)
        with np.errstate(all="ignore"):
            loss, grad, _ = objective.loss_grad(theta, idx)
        if not np.isfinite(loss) or not np.isfinite(grad).all():
            break
        losses[i] = loss
        opt.step(theta, grad, lr)
    return lrs, losses


def lr_range_test(make_objective, n_samples, batch_size, optimizer="adamw", seed=0, runs=3):
    """Learning rate from repeated range tests: the log10-mean of each run's
    steepest-descent learning rate."""
    n_iter = lr_test_iterations(n_samples)
    picks = []
    for run in range(runs):
        lrs, losses = lr_range_run(make_objective, n_iter, batch_size, optimizer, seed=seed + 7919 * (run + 1))
        picks.append(steepest_lr(lrs, losses))
    return log10_mean(picks)


def log10_mean(values):
    return float(10.0 ** np.mean(np.log10(values)))


# -- fit ----------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    rmse: float
    mae: float

    def to_dict(self):
        return {"epoch": self.epoch, "loss": self.loss, "rmse": self.rmse, "mae": self.mae}


def train_theta(objective, theta, train, batch_size, epochs, lr, scale=1.0, progress_log=None):
    """Run the mini-batch loop in place on ``theta``.

    Per step: forward, loss plus ramped regularization, exact gradient,
    1cycle-scheduled optimizer update.
    """
    rng = np.random.default_rng(train.seed)
    opt = make_optimizer(train.optimizer, len(theta), train.weight_decay)
    n = len(objective)
    steps_per_epoch = math.ceil(n / batch_size)
    total = steps_per_epoch * epochs
    history = []
    step = 0
    for epoch in range(epochs):
        loss_sum = sq_sum = abs_sum = 0.0
        count = 0
        for idx in batches(n, batch_size, rng):
            progress = step / max(total - 1, 1)
            reg = reg_schedule(progress, 1.0, train.reg_ramp_start)
            loss, grad, resid = objective.loss_grad(theta, idx, reg)
            optimizer_step(theta, grad, one_cycle_lr(progress, lr), opt)
            loss_sum += loss * len(idx)
            sq_sum += float(np.sum(resid * resid))
            abs_sum += float(np.sum(np.abs(resid)))
            count += resid.size
            step += 1
        rec = EpochRecord(epoch + 1, loss_sum / n, scale * math.sqrt(sq_sum / count), scale * abs_sum / count)
        history.append(rec)
        if progress_log is not None:
            progress_log(rec)
    return history


def fit(df, config=None, progress_log=None):
    """Fit a model to ``df`` (columns ``ds``, ``y`` and any regressors).

    Unset batch size, epochs and learning rate are resolved by heuristics;
    the learning rate by a range test on freshly initialized models.
    """
    config = config or ModelConfig()
    train = config.train
    started = time.perf_counter()
    frame, freq = prepare_frame(df, config, config.impute)
    if len(frame) < 2:
        raise InsufficientData("need at least two timestamps to fit")
    time_range = (frame["ds"].iloc[0], frame["ds"].iloc[-1])
    structure = resolve_structure(config, time_range, freq)
    states = fit_states(frame, config)
    samples = tabularize(frame, structure, states, time_range)
    layout = ParamLayout(structure)
    n = len(samples)

    batch_size = train.batch_size or batch_size_heuristic(n)
    batch_size = min(batch_size, n)
    epochs = train.epochs or epochs_heuristic(n)

    def make_objective():
        return Objective(structure, layout, samples, train.loss, train.huber_beta), init_theta(
            structure, layout, train.seed
        )

    objective, theta = make_objective()
    lr = train.learning_rate
    if lr is None:
        try:
            lr = lr_range_test(make_objective, n, batch_size, train.optimizer, train.seed)
        except DivergedTest as err:
            log.warning("%s; falling back to learning rate %g", err, FALLBACK_LR)
            lr = FALLBACK_LR
    log.info("fitting %d samples: batch %d, %d epochs, lr %.3g", n, batch_size, epochs, lr)
    history = train_theta(
        objective, theta, train, batch_size, epochs, lr, scale=states["y"].scale, progress_log=progress_log
    )
    if not np.isfinite(theta).all():
        raise NonFiniteGradient("training produced non-finite parameters")
    return FittedModel(
        config=config,
        structure=structure,
        theta=theta,
        states=states,
        time_range=time_range,
        freq=freq,
        history=[r.to_dict() for r in history],
        learning_rate=float(lr),
        train_info={
            "n_samples": n,
            "batch_size": int(batch_size),
            "epochs": int(epochs),
            "seconds": time.perf_counter() - started,
        },
    )
