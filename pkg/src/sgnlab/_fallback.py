"""Pure numpy versions of the kernels in ``_core.pyx`` (same signatures, same results)."""

import math

import numpy as np


class NumericalBreakdown(FloatingPointError):
    pass


def _check(Hinv, G):
    p = Hinv.shape[0]
    if Hinv.shape != (p, p) or G.ndim != 2 or G.shape[1] != p:
        raise ValueError("dimension mismatch between H_inv and the Jacobian rows")


def smw_batch_update(Hinv, G, alpha):
    _check(Hinv, G)
    B = G.shape[0]
    denom = np.empty(B)
    coef = np.empty(B)
    Yt = G @ Hinv
    logdet = 0.0
    for j in range(B):
        for i in range(j):
            Yt[j] -= coef[i] * (Yt[i] @ G[j]) * Yt[i]
        d = 1.0 + alpha * (G[j] @ Yt[j])
        if not d > 0.0:
            raise NumericalBreakdown(
                f"Sherman-Morrison denominator {d!r} <= 0 at row {j}; preconditioner state is corrupted"
            )
        denom[j] = d
        coef[j] = alpha / d
        logdet += math.log(d)
    if B:
        Hinv -= (Yt * coef[:, None]).T @ Yt
    return logdet, denom


def gram_update(H, G, alpha):
    _check(H, G)
    if G.shape[0]:
        H += alpha * (G.T @ G)


def smw_rank1_sequential(Hinv, G, alpha):
    _check(Hinv, G)
    B = G.shape[0]
    denom = np.empty(B)
    logdet = 0.0
    for j in range(B):
        y = Hinv @ G[j]
        d = 1.0 + alpha * (G[j] @ y)
        if not d > 0.0:
            raise NumericalBreakdown(
                f"Sherman-Morrison denominator {d!r} <= 0 at row {j}; preconditioner state is corrupted"
            )
        denom[j] = d
        logdet += math.log(d)
        Hinv -= (alpha / d) * np.outer(y, y)
    return logdet, denom
