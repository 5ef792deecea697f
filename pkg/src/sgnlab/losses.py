"""Strongly convex scalar losses ``l(pred, y)`` with their derivative and constants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["LossSpec", "square_loss", "reg_logistic_loss", "get_loss", "empirical_risk"]


@dataclass(frozen=True)
class LossSpec:
    """Loss in the prediction argument.

    Attributes:
        name: registry name.
        eval: ``(pred, y) -> loss``, vectorised.
        grad: derivative with respect to ``pred``.
        nu: strong-convexity modulus in ``pred``.
        lip_on_interval: ``K -> beta_K``, a Lipschitz constant of ``eval`` over
            predictions with ``|pred| <= K`` (for labels ``|y| <= 1``).
        reg: regulariser weight (logistic loss only).
    """

    name: str
    eval: Callable
    grad: Callable
    nu: float
    lip_on_interval: Callable[[float], float]
    reg: float = 0.0
    binary_labels: bool = False

    def check_labels(self, y) -> None:
        if self.binary_labels:
            _check(np.asarray(y, dtype=float))


def square_loss() -> LossSpec:
    return LossSpec(
        name="square",
        eval=lambda pred, y: 0.5 * (np.asarray(y) - np.asarray(pred)) ** 2,
        grad=lambda pred, y: np.asarray(pred) - np.asarray(y),
        nu=1.0,
        lip_on_interval=lambda K: 1.0 + abs(K),
    )


def reg_logistic_loss(reg: float) -> LossSpec:
    """``log(1 + exp(-y pred)) + (reg/2) pred^2`` for labels in {-1, +1}.

    The regulariser is called ``reg`` (not lambda) to keep it apart from the
    damping parameter of the optimizer.
    """
    if not reg > 0:
        raise ValueError("reg must be positive")

    def _eval(pred, y):
        pred = np.asarray(pred, dtype=float)
        y = np.asarray(y, dtype=float)
        _check(y)
        return np.logaddexp(0.0, -y * pred) + 0.5 * reg * pred ** 2

    def _grad(pred, y):
        pred = np.asarray(pred, dtype=float)
        y = np.asarray(y, dtype=float)
        _check(y)
        # -y / (1 + e^{y pred}), written via the stable logistic function
        return -y * _expit(-y * pred) + reg * pred

    return LossSpec(
        name="logistic",
        eval=_eval,
        grad=_grad,
        nu=float(reg),
        lip_on_interval=lambda K: 1.0 + reg * abs(K),
        reg=float(reg),
        binary_labels=True,
    )


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check(y):
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("regularized logistic loss needs labels in {-1, +1}")


def get_loss(name: str, reg: float = 0.1) -> LossSpec:
    if name == "square":
        return square_loss()
    if name == "logistic":
        return reg_logistic_loss(reg)
    raise ValueError(f"unknown loss {name!r}; choose 'square' or 'logistic'")


def empirical_risk(preds, labels, loss: LossSpec) -> float:
    """Mean loss over the dataset."""
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0:
        raise ValueError("empty dataset")
    if preds.shape != labels.shape:
        raise ValueError(f"{preds.shape[0] if preds.ndim else 1} predictions for {labels.size} samples")
    return float(np.mean(loss.eval(preds, labels)))
