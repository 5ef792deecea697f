"""Projection onto the ball ``||w - w0||_2 <= r`` in the norm ``||v||_H = sqrt(v^T H v)``.

With ``v = u - w0`` the minimiser is ``w(mu) = w0 + s(mu)``, ``s(mu) = (H + mu I)^{-1} H v``.
``||s(mu)||`` decreases in ``mu``, so an active constraint reduces to a scalar root find.
We iterate Newton on ``f(mu) = 1/||s(mu)|| - 1/r``, which is concave and increasing
(the same secular equation as in trust-region subproblems), and fall back to
bisection whenever a Newton step leaves the current bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .network import GeometrySpec

__all__ = ["ProjectionResult", "project"]


@dataclass
class ProjectionResult:
    """Outcome of a metric projection.

    Attributes:
        point: projected parameter vector.
        mu: multiplier of the ball constraint (0 when inactive).
        active: whether the constraint is tight.
        kkt_residual: ``||H(point - u) + mu (point - w0)|| / (1 + ||u||)``.
        iterations: root-finder iterations (0 when inactive).
    """

    point: np.ndarray
    mu: float
    active: bool
    kkt_residual: float
    iterations: int = 0


def _factor(M):
    try:
        return sla.cho_factor(M, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        raise ValueError("metric matrix is not symmetric positive definite") from None


def project(u, state, geom: GeometrySpec, tol: float = 1e-10, max_iter: int = 200) -> ProjectionResult:
    """Metric projection of ``u`` onto the ball of ``geom``.

    Args:
        u: point to project.
        state: a ``PreconditionerState`` with a dense ``H``, or the matrix itself.
        geom: ball centre ``w0`` and radius.
        tol: absolute tolerance on ``||w - w0||`` is ``tol * radius``.
        max_iter: cap on root-finder iterations.

    Raises:
        ValueError: shape mismatch, or ``H`` not SPD. When a state is passed and
            the constraint is inactive, the state's own SPD guarantee is trusted.
    """
    u = np.asarray(u, dtype=float)
    w0 = geom.w0_flat
    r = float(geom.radius)
    if u.shape != w0.shape:
        raise ValueError(f"point has shape {u.shape}, expected {w0.shape}")

    if isinstance(state, np.ndarray):
        H = np.asarray(state, dtype=float)
        chol0 = _factor(H)
    else:
        H = state.H
        if H is None:
            raise ValueError("projection needs the dense metric; create the state with track_dense=True")
        chol0 = None

    v = u - w0
    nv = float(np.linalg.norm(v))
    if nv <= r:
        return ProjectionResult(u.copy(), 0.0, False, 0.0)
    if r == 0.0:
        return ProjectionResult(w0.copy(), math.inf, True, 0.0)

    if chol0 is None:
        try:
            chol0 = state.cholesky()
        except np.linalg.LinAlgError:
            raise ValueError("metric matrix is not symmetric positive definite") from None
    Hv = H @ v
    p = v.shape[0]
    eye = np.eye(p)

    def _eval(mu, chol=None):
        if chol is None:
            chol = _factor(H + mu * eye)
        s = sla.cho_solve(chol, Hv, check_finite=False)
        ns = float(np.linalg.norm(s))
        q = sla.cho_solve(chol, s, check_finite=False)
        # f = 1/||s|| - 1/r, f' = s^T (H + mu I)^{-1} s / ||s||^3
        return s, ns, 1.0 / ns - 1.0 / r, float(s @ q) / ns ** 3

    # trace(H) >= lambda_max(H), so this keeps the upper end of the bracket valid
    lo, hi = 0.0, float(np.trace(H)) * (nv / r - 1.0) + 1.0
    mu = 0.0
    s, ns, f, df = _eval(mu, chol0)
    it = 0
    while abs(ns - r) > tol * r and it < max_iter:
        it += 1
        if f < 0:
            lo = mu
        else:
            hi = mu
        step = mu - f / df if df > 0 else math.nan
        mu = step if lo < step < hi else 0.5 * (lo + hi)
        s, ns, f, df = _eval(mu)
    if abs(ns - r) > tol * r:
        raise FloatingPointError(
            f"projection root find did not converge: | ||s|| - r | = {abs(ns - r):.3e} after {it} iterations"
        )

    point = w0 + s
    resid = H @ (point - u) + mu * s
    kkt = float(np.linalg.norm(resid)) / (1.0 + float(np.linalg.norm(u)))
    return ProjectionResult(point, float(mu), True, kkt, it)
