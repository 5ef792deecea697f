"""The accumulated Gauss-Newton metric ``H_k = alpha * sum_t J_t^T J_t + lambda * I``.

Two representations are kept side by side:

* ``H_inv``: updated row by row with Sherman-Morrison steps (cost O(B p^2) per batch),
  used for the preconditioned step;
* ``H``: the dense matrix, used by the metric projection and for telemetry.

The log-determinant is accumulated from the Sherman-Morrison denominators
(matrix determinant lemma), so ``log det H_k / det H_0`` never needs a factorization.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import kernels

__all__ = [
    "PreconditionerState",
    "init",
    "accumulate_batch",
    "solve",
    "logdet_ratio",
    "min_eigenvalue",
    "intrinsic_rank_estimate",
]


class PreconditionerState:
    """Mutable, single-owner preconditioner.

    Attributes:
        p: parameter dimension.
        alpha: weight on each accumulated Gram block.
        lam: Levenberg-Marquardt damping.
        H: dense ``p x p`` matrix, or None when ``track_dense=False``.
        H_inv: incrementally maintained inverse.
        logdet_increment: ``log det H_k - log det H_0``, summed per rank-1 step.
        update_count: number of batches accumulated.
    """

    def __init__(self, p: int, alpha: float, lam: float, track_dense: bool = True):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha!r}")
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam!r}")
        self.p = int(p)
        self.alpha = float(alpha)
        self.lam = float(lam)
        self.H_inv = np.eye(self.p) / self.lam
        self.H = self.lam * np.eye(self.p) if track_dense else None
        self.logdet_increment = 0.0
        self.update_count = 0
        self._eigvec = None
        self._chol = None
        self._chol_count = -1
        self.last_eig_converged = True

    @property
    def logdet_H(self) -> float:
        return self.p * math.log(self.lam) + self.logdet_increment

    @property
    def gram_sum(self) -> np.ndarray:
        """``S_k = sum_t J_t^T J_t``, recovered from the dense matrix."""
        self._need_dense()
        return (self.H - self.lam * np.eye(self.p)) / self.alpha

    def _need_dense(self):
        if self.H is None:
            raise RuntimeError("dense H is not tracked for this state")

    def copy(self) -> "PreconditionerState":
        new = PreconditionerState.__new__(PreconditionerState)
        new.__dict__.update(self.__dict__)
        new.H_inv = self.H_inv.copy()
        new.H = None if self.H is None else self.H.copy()
        new._eigvec = None if self._eigvec is None else self._eigvec.copy()
        new._chol = None
        new._chol_count = -1
        return new

    def accumulate(self, J) -> np.ndarray:
        """Add ``alpha * J^T J``; returns the Sherman-Morrison denominators of the rows."""
        J = np.ascontiguousarray(J, dtype=float)
        if J.ndim == 1:
            J = J[None, :]
        if J.ndim != 2 or J.shape[1] != self.p:
            raise ValueError(f"Jacobian must have {self.p} columns, got shape {J.shape}")
        inc, denom = kernels.smw_batch_update(self.H_inv, J, self.alpha)
        if self.H is not None:
            kernels.gram_update(self.H, J, self.alpha)
        self.logdet_increment += inc
        self.update_count += 1
        return denom

    def solve(self, v, method: str = "incremental") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.p,):
            raise ValueError(f"expected a vector of length {self.p}, got shape {v.shape}")
        if method == "incremental":
            return self.H_inv @ v
        if method == "dense":
            return sla.cho_solve(self.cholesky(), v)
        raise ValueError(f"unknown solve method {method!r}")

    def cholesky(self):
        """Cached Cholesky factor of the dense ``H`` (recomputed after each update)."""
        self._need_dense()
        if self._chol_count != self.update_count:
            self._chol = sla.cho_factor(self.H, lower=False, check_finite=False)
            self._chol_count = self.update_count
        return self._chol

    def logdet_ratio(self) -> float:
        return self.logdet_increment

    def min_eigenvalue(self, tol: float = 1e-7, max_iter: int = 5000) -> float:
        """``lambda_min(H)`` from the top eigenvalue of ``H_inv`` (Lanczos, warm-started).

        A Ritz value never exceeds ``lambda_max(H_inv)``, so the returned value is
        never below the true ``lambda_min(H)``. On non-convergence the best
        estimate is returned, ``last_eig_converged`` is set to False and a
        RuntimeWarning is issued.
        """
        A = self.H_inv
        if self.p <= 2:
            self.last_eig_converged = True
            return 1.0 / float(np.linalg.eigvalsh(A)[-1])
        v0 = self._eigvec
        if v0 is None:
            v0 = np.random.default_rng(12345).standard_normal(self.p)
        try:
            vals, vecs = eigsh(A, k=1, which="LA", v0=v0, tol=tol, maxiter=max_iter)
            converged = True
        except ArpackNoConvergence as exc:
            converged = False
            if exc.eigenvalues.size:
                vals, vecs = exc.eigenvalues, exc.eigenvectors
            else:
                # Rayleigh quotient of the warm start is still a valid one-sided estimate
                v = v0 / np.linalg.norm(v0)
                vals, vecs = np.array([v @ A @ v]), v[:, None]
        self._eigvec = vecs[:, 0].copy()
        self.last_eig_converged = converged
        if not converged:
            warnings.warn("min_eigenvalue: Lanczos iteration hit the iteration cap", RuntimeWarning)
        return 1.0 / float(vals[0])


def init(p: int, alpha: float, lam: float, track_dense: bool = True) -> PreconditionerState:
    return PreconditionerState(p, alpha, lam, track_dense=track_dense)


def accumulate_batch(state: PreconditionerState, J) -> PreconditionerState:
    state.accumulate(J)
    return state


def solve(state: PreconditionerState, v, method: str = "incremental") -> np.ndarray:
    return state.solve(v, method=method)


def logdet_ratio(state: PreconditionerState) -> float:
    return state.logdet_ratio()


def min_eigenvalue(state: PreconditionerState, tol: float = 1e-7, max_iter: int = 5000) -> float:
    return state.min_eigenvalue(tol=tol, max_iter=max_iter)


def intrinsic_rank_estimate(gram_running_mean, threshold: float = 1e-8) -> int:
    """Number of eigenvalues above ``threshold * lambda_max``."""
    S = np.asarray(gram_running_mean, dtype=float)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    top = ev[-1] if ev.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.count_nonzero(ev > threshold * top))
