"""Point losses and weight penalties, each with its analytic derivative."""

import numpy as np


def huber_loss(y, yhat, beta=1.0):
    """Smooth-L1 loss: ``r^2 / (2 beta)`` below ``beta``, ``|r| - beta/2`` above."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    r = np.abs(np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float))
    return np.where(r < beta, 0.5 * r * r / beta, r - 0.5 * beta)


def huber_grad(resid, beta=1.0):
    """d/d(yhat) of the Huber loss for ``resid = yhat - y``."""
    return np.where(np.abs(resid) < beta, resid / beta, np.sign(resid))


def point_loss(resid, kind="huber", beta=1.0):
    """Elementwise loss and its derivative w.r.t. the prediction, for
    residuals ``yhat - y``."""
    if kind == "huber":
        a = np.abs(resid)
        small = a < beta
        return np.where(small, 0.5 * resid * resid / beta, a - 0.5 * beta), np.where(
            small, resid / beta, np.sign(resid)
        )
    if kind == "mse":
        return resid * resid, 2.0 * resid
    if kind == "mae":
        return np.abs(resid), np.sign(resid)
    raise ValueError(f"unknown loss {kind!r}")


def regularization(theta, epsilon=1.0, alpha=1.0):
    """Scaled and shifted log penalty, zero at ``theta = 0``:

    ``mean(log(1/(epsilon e) + alpha |theta|)) + log(epsilon) + 1``
    """
    if epsilon <= 0 or alpha <= 0:
        raise ValueError("epsilon and alpha must be positive")
    theta = np.abs(np.ravel(np.asarray(theta, dtype=float)))
    if theta.size == 0:
        return 0.0
    return float(np.mean(np.log(1.0 / (epsilon * np.e) + alpha * theta)) + np.log(epsilon) + 1.0)


def regularization_grad(theta, epsilon=1.0, alpha=1.0):
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return np.zeros_like(theta)
    return alpha * np.sign(theta) / (1.0 / (epsilon * np.e) + alpha * np.abs(theta)) / theta.size


def sparsity_penalty_default(theta, epsilon=3.0, alpha=1.0):
    """Default AR sparsity penalty: the log penalty with ``epsilon=3``."""
    return regularization(theta, epsilon, alpha)


def sparsity_penalty_arnet(theta, c1=3.0, c2=3.0):
    """Sigmoid-shaped penalty ``mean(2 / (1 + exp(-c1 |theta|^(1/c2))) - 1)``."""
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    theta = np.abs(np.ravel(np.asarray(theta, dtype=float)))
    if theta.size == 0:
        return 0.0
    return float(np.mean(2.0 / (1.0 + np.exp(-c1 * theta ** (1.0 / c2))) - 1.0))


def sparsity_penalty_arnet_grad(theta, c1=3.0, c2=3.0):
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return np.zeros_like(theta)
    a = np.abs(theta)
    u = a ** (1.0 / c2)
    s = 1.0 / (1.0 + np.exp(-c1 * u))
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(a > 0, u / (c2 * a), 0.0)
    return 2.0 * s * (1.0 - s) * c1 * du * np.sign(theta) / theta.size


PENALTIES = {
    "default": (sparsity_penalty_default, regularization_grad, {"epsilon": 3.0, "alpha": 1.0}),
    "arnet": (sparsity_penalty_arnet, sparsity_penalty_arnet_grad, {"c1": 3.0, "c2": 3.0}),
    "trend": (regularization, regularization_grad, {"epsilon": 1.0, "alpha": 1.0}),
}
