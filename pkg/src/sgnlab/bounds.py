"""Closed-form calculators for the convergence and stability bounds of SGN.

Conventions:

* Constants that bound the network on the ball ``C = B(w0, r)`` (``Lip_phi``,
  ``Lip_grad_phi``, ``Lip_loss``) use the radius ``r``: every point of ``C`` is
  within ``r`` of ``w0``, which is all the derivation needs.
* Bounds stated in terms of the set's diameter use ``geom.diameter = 2 r``.
* Stability bounds hide absolute constants; their calculators return the
  constant-free expression together with the individual terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .losses import LossSpec
from .network import ActivationSpec, GeometrySpec, NetworkConfig, batch_jacobian, sample_in_ball, unflatten

__all__ = [
    "LipschitzBounds",
    "StabilityConstants",
    "Theorem1Bound",
    "Theorem2Bound",
    "PEFit",
    "lipschitz_phi",
    "lipschitz_grad_phi",
    "prediction_bound",
    "lipschitz_bounds",
    "estimate_mu0",
    "stability_constants",
    "theorem1_bound",
    "theorem1_series",
    "prop1_bounds",
    "prop1_trace_bound",
    "theorem2_bound",
    "hyperparameter_conditions",
    "corollary2_bound",
    "prop2_bound",
    "h_stability_bound",
    "pe_fit",
    "corollary1_constants",
]


def lipschitz_phi(geom: GeometrySpec, act: ActivationSpec) -> float:
    """Uniform bound on ``||grad_w phi(x; w)||`` over ``w in C`` and ``||x|| <= 1``."""
    H, m = geom.cfg.depth, geom.cfg.width
    s0, s1 = act.sigma0, act.sigma1
    return s0 + geom.zeta_C * s0 * s1 / math.sqrt(m) * math.sqrt(H) * (s1 * geom.kappa_C) ** (H - 1)


def lipschitz_grad_phi(geom: GeometrySpec, act: ActivationSpec) -> float:
    """Uniform bound on the spectral norm of the parameter Hessian of ``phi`` over ``C``.

    The bracket carries ``kappa_C^(H-1)`` without a ``sigma1`` factor, exactly as
    the bound is usually quoted; see the decisions ledger.
    """
    H, m = geom.cfg.depth, geom.cfg.width
    a = H * geom.kappa_C ** (H - 1) / math.sqrt(m)
    return 8.0 * (act.sigma2 * act.sigma0 + act.sigma1 ** 2 * geom.zeta_C) * (a + a * a)


def prediction_bound(geom: GeometrySpec, act: ActivationSpec) -> float:
    """``sup |phi(x; w)|`` over ``C``: ``|c^T x^(H)| <= ||c|| sigma0``."""
    return geom.zeta_C * act.sigma0


@dataclass(frozen=True)
class LipschitzBounds:
    lip_phi: float
    lip_grad_phi: float
    lip_loss: float
    pred_bound: float

    def __post_init__(self):
        for name in ("lip_phi", "lip_grad_phi", "lip_loss"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def scaled(self, **factors) -> "LipschitzBounds":
        """Copy with some constants multiplied, e.g. ``scaled(lip_loss=2)``."""
        vals = dict(lip_phi=self.lip_phi, lip_grad_phi=self.lip_grad_phi,
                    lip_loss=self.lip_loss, pred_bound=self.pred_bound)
        for k, f in factors.items():
            vals[k] *= f
        return LipschitzBounds(**vals)


def lipschitz_bounds(geom: GeometrySpec, act: ActivationSpec, loss: LossSpec) -> LipschitzBounds:
    K = prediction_bound(geom, act)
    return LipschitzBounds(lipschitz_phi(geom, act), lipschitz_grad_phi(geom, act),
                           float(loss.lip_on_interval(K)), K)


def estimate_mu0(data: Dataset, cfg: NetworkConfig, act: ActivationSpec, geom: GeometrySpec,
                 n_probes: int = 50, seed=0) -> float:
    """Smallest singular value of the full ``n x p`` Jacobian over ``w0`` and random points of ``C``.

    A sampled estimate of the floor ``mu0`` with ``J J^T >= mu0^2 I``; the true
    infimum over ``C`` can only be smaller.
    """
    rng = np.random.default_rng(seed)
    w0 = geom.w0_flat
    probes = [w0] + list(sample_in_ball(w0, geom.radius, rng, n_probes))
    best = math.inf
    for w in probes:
        J = batch_jacobian(unflatten(w, cfg), cfg, act, data.X)
        smin = np.linalg.svd(J, compute_uv=False)[-1] if data.n <= cfg.num_params else 0.0
        best = min(best, float(smin))
    return best


@dataclass(frozen=True)
class StabilityConstants:
    """``epsilon = B Lip_loss Lip_grad_phi``; ``Lambda`` uses the larger ``2 eps + B Lip_phi^2``.

    ``Lambda_main = B Lip_phi^2 + eps`` is kept alongside for reporting.
    """

    epsilon: float
    Lambda: float
    Lambda_main: float
    mu0: float
    nu: float

    @property
    def M(self) -> float:
        if self.mu0 <= 0:
            return math.inf
        return max(2.0 / self.nu, 8.0 * (self.Lambda + self.epsilon) / (self.nu ** 2 * self.mu0 ** 2))


def stability_constants(lip: LipschitzBounds, batch: int, loss: LossSpec, mu0: float) -> StabilityConstants:
    eps = batch * lip.lip_loss * lip.lip_grad_phi
    base = batch * lip.lip_phi ** 2
    return StabilityConstants(eps, base + 2.0 * eps, base + eps, float(mu0), float(loss.nu))


@dataclass(frozen=True)
class Theorem1Bound:
    kappa: np.ndarray
    polyak: np.ndarray
    transient: np.ndarray
    floor: float


def theorem1_bound(hyper, lip: LipschitzBounds, geom: GeometrySpec, logdet_ratio, k) -> Theorem1Bound:
    """``kappa_{k,m}`` bounding the mean optimality gap ``(1/k) sum_{t<k} E[gap(w_t)]``.

    ``logdet_ratio`` stands in for ``E log det H_k / det H_0``. ``k`` and
    ``logdet_ratio`` may be arrays (broadcast together). Also returns the bound
    ``4 kappa + 2 r^4 Lip_grad_phi^2`` for the Polyak average.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("k must be at least 1")
    ld = np.asarray(logdet_ratio, dtype=float)
    r = geom.diameter
    xi = hyper.xi
    g = hyper.gamma(lip.lip_phi)
    transient = (lip.lip_phi ** 2 * r ** 2 * (g + 2.0) / xi
                 + xi * lip.lip_loss ** 2 * (ld + 1.0 / (g + 1.0))) / k
    floor = r ** 4 * lip.lip_grad_phi ** 2 / xi + lip.lip_loss * r ** 2 * lip.lip_grad_phi
    kappa = transient + floor
    polyak = 4.0 * kappa + 2.0 * r ** 4 * lip.lip_grad_phi ** 2
    return Theorem1Bound(kappa, polyak, transient, float(floor))


def theorem1_series(logdet_rows, hyper, lip: LipschitzBounds, geom: GeometrySpec) -> np.ndarray:
    """``kappa_{k,m}`` for every row of a training record (NaN at row 0).

    Row ``k`` of a record holds ``log det H_{k-1}``, while ``kappa_{k,m}`` needs
    ``H_k``, which is the next row. The last row has no successor, so its value is
    bounded by one more batch: each rank-1 step adds at most ``log(1 + alpha Lip_phi^2 / lam)``.
    """
    ld = np.asarray(logdet_rows, dtype=float)
    K = ld.size - 1
    out = np.full(ld.size, np.nan)
    if K < 1:
        return out
    nxt = np.empty(K)
    nxt[:-1] = ld[2:]
    nxt[-1] = ld[K] + hyper.batch * math.log1p(hyper.alpha * lip.lip_phi ** 2 / hyper.lam)
    out[1:] = theorem1_bound(hyper, lip, geom, nxt, np.arange(1, K + 1)).kappa
    return out


def prop1_bounds(hyper, lip: LipschitzBounds, p: int, k, r_bar):
    """``(worst_case, rank_aware)`` bounds on ``log det H_k / det H_0``.

    worst case: ``p log(1 + (alpha/lam)(k+1) sqrt(B) Lip_phi)``;
    rank aware: ``r_bar (log(k+1) + 1/gamma + Lip_phi^2 / r_bar)``.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    worst = p * np.log1p(hyper.alpha / hyper.lam * (k + 1.0) * math.sqrt(hyper.batch) * lip.lip_phi)
    g = hyper.gamma(lip.lip_phi)
    if r_bar is None or r_bar <= 0:
        rank = lip.lip_phi ** 2 + 0.0 * k
    else:
        rank = r_bar * (np.log(k + 1.0) + 1.0 / g + lip.lip_phi ** 2 / r_bar)
    return worst, rank


def prop1_trace_bound(hyper, lip: LipschitzBounds, p: int, k):
    """``p log(1 + alpha (k+1) B Lip_phi^2 / (lam p))``, the AM-GM bound via ``tr S_k``.

    Never larger than :func:`prop1_bounds`' worst case when ``sqrt(B) Lip_phi <= p``.
    """
    k = np.asarray(k, dtype=float)
    return p * np.log1p(hyper.alpha * (k + 1.0) * hyper.batch * lip.lip_phi ** 2 / (hyper.lam * p))


def hyperparameter_conditions(hyper, sc: StabilityConstants) -> dict:
    """The two step-size conditions of the stability theorem, under both ``Lambda`` variants."""
    out = {}
    for tag, Lam in (("appendix", sc.Lambda), ("main", sc.Lambda_main)):
        c1 = hyper.eta / hyper.lam <= 1.0 / Lam
        rhs = sc.mu0 ** 2 * sc.nu ** 2 / (8.0 * hyper.batch * (Lam + sc.epsilon))
        c2 = hyper.alpha / hyper.eta <= rhs
        out[tag] = {"eta_over_lambda_ok": bool(c1), "alpha_over_eta_ok": bool(c2),
                    "eta_over_lambda": hyper.eta / hyper.lam, "eta_over_lambda_max": 1.0 / Lam,
                    "alpha_over_eta": hyper.alpha / hyper.eta, "alpha_over_eta_max": rhs}
    out["satisfied"] = out["appendix"]["eta_over_lambda_ok"] and out["appendix"]["alpha_over_eta_ok"]
    return out


@dataclass
class Theorem2Bound:
    total: float
    non_expansivity: float
    preconditioner_mismatch: float
    gradient_mismatch: float
    hypotheses_ok: bool
    conditions: dict = field(default_factory=dict)


def theorem2_bound(hyper, sc: StabilityConstants, lip: LipschitzBounds, lambda_t, k: int, n: int) -> Theorem2Bound:
    """Constant-free stability bound on ``E ||Delta_k||`` in the midpoint metric.

    ``lambda_t`` holds lower bounds on ``lambda_min(H_t)`` for ``t = 0..k-1``.
    """
    lam_t = np.asarray(lambda_t, dtype=float).reshape(-1)
    if lam_t.size == 0:
        raise ValueError("lambda_t sequence is empty")
    if k < 1 or lam_t.size < k:
        raise ValueError(f"need k >= 1 and at least k entries of lambda_t (k={k}, got {lam_t.size})")
    if np.any(lam_t[:k] <= 0):
        raise ValueError("lambda_t entries must be positive")
    B, L2 = hyper.batch, lip.lip_grad_phi
    t = np.arange(k, dtype=float)
    inv_sqrt = lam_t[:k] ** -0.5
    nonexp = k * math.sqrt(hyper.eta * B * L2) + k * math.sqrt(hyper.alpha) * B ** 1.5 * L2
    mism = hyper.alpha * B ** 2 * (L2 + 1.0 / n) * float(np.sum((t + 1.0) * inv_sqrt))
    grad = hyper.eta * B / n * float(np.sum(inv_sqrt))
    cond = hyperparameter_conditions(hyper, sc)
    ok = cond["satisfied"]
    if not ok:
        warnings.warn("stability theorem hypotheses unmet for these hyperparameters", UserWarning, stacklevel=2)
    return Theorem2Bound(nonexp + mism + grad, nonexp, mism, grad, ok, cond)


def corollary2_bound(batch: int, xi: float, k, lam: float, n: int, lip: LipschitzBounds):
    """Worst-case stability: ``sqrt(B xi k L) + sqrt(k) B L + (B k / sqrt(lam))(L + 1/n) + B xi / (n sqrt(lam))``."""
    k = np.asarray(k, dtype=float)
    L = lip.lip_grad_phi
    s = math.sqrt(lam)
    return (np.sqrt(batch * xi * k * L) + np.sqrt(k) * batch * L
            + batch * k / s * (L + 1.0 / n) + batch * xi / (n * s))


def prop2_bound(alpha: float, eta: float, batch: int, k, q: float, n: int, lip: LipschitzBounds):
    """Stability under persistence of excitation with growth exponent ``q``."""
    k = np.asarray(k, dtype=float)
    L = lip.lip_grad_phi
    B = batch
    return (k * (math.sqrt(alpha) * B ** 1.5 * L + np.sqrt(eta * B * L))
            + math.sqrt(alpha) * B ** 1.5 * (1.0 / n + L) * k ** (2.0 - q / 2.0)
            + k * math.sqrt(eta) * B ** 2 / n)


def h_stability_bound(alpha: float, batch: int, k, diameter: float, lip: LipschitzBounds, n: int):
    """Bound on ``E ||H_k - H'_k||_2`` for neighbouring datasets."""
    k = np.asarray(k, dtype=float)
    return (2.0 * batch * alpha * (k + 1.0) * diameter * lip.lip_phi * lip.lip_grad_phi
            + alpha * lip.lip_phi ** 2 * (k + 1.0) * batch / n)


@dataclass(frozen=True)
class PEFit:
    C: float
    q: float
    residual: float


def pe_fit(lambda_min_trajectory, burn_in: int, batch: int = 1, iterations=None) -> PEFit:
    """Fit ``lambda_min(S_t) ~ C B (t+1)^q`` by least squares in log-log over ``t > burn_in``.

    ``lambda_min_trajectory[i]`` is ``lambda_min`` of the Gram sum after batch
    ``t = i``, or after batch ``t = iterations[i]`` for a subsampled trajectory.
    ``residual`` is the RMS of the log-space residuals.
    """
    lam = np.asarray(lambda_min_trajectory, dtype=float).reshape(-1)
    if iterations is None:
        if lam.size <= burn_in + 10:
            raise ValueError(f"trajectory of length {lam.size} is too short for burn-in {burn_in}")
        t = np.arange(lam.size, dtype=float)
    else:
        t = np.asarray(iterations, dtype=float).reshape(-1)
        if t.shape != lam.shape:
            raise ValueError("iterations and trajectory lengths differ")
        if np.count_nonzero(t > burn_in) < 3:
            raise ValueError("fewer than 3 points after burn-in")
    sel = t > burn_in
    vals = lam[sel]
    if np.any(~(vals > 0)):
        raise ValueError("lambda_min entries must be positive in the fitted range")
    x = np.log(t[sel] + 1.0)
    yv = np.log(vals / batch)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    resid = yv - A @ coef
    return PEFit(float(math.exp(coef[0])), float(coef[1]), float(np.sqrt(np.mean(resid ** 2))))


def corollary1_constants(v_c_bar: float, v_W_bar: float):
    """``(rho, radius)`` with ``rho = ||(v_c_bar, v_W_bar)||``; the ball radius equals ``rho``."""
    if v_c_bar < 0 or v_W_bar < 0:
        raise ValueError("transport bounds must be nonnegative")
    rho = math.hypot(v_c_bar, v_W_bar)
    return rho, rho
