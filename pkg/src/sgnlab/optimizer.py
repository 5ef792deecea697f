"""Stochastic Gauss-Newton with Levenberg-Marquardt damping and metric projection.

One iteration, in this order:

1. ``J_k, G_k`` at ``w_k`` on the minibatch ``I_k``;
2. ``H_k = H_{k-1} + alpha J_k^T J_k`` (the current batch is included);
3. ``Psi_k = J_k^T G_k``;
4. ``u_k = w_k - eta H_k^{-1} Psi_k``;
5. ``w_{k+1}`` = projection of ``u_k`` onto the ball in the ``H_k`` norm.

The returned predictor is the Polyak average ``(1/k) sum_{t<k} w_t``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .dataset import Dataset
from .losses import LossSpec, empirical_risk
from .network import (
    ActivationSpec,
    GeometrySpec,
    NetworkConfig,
    NetworkParams,
    TANH,
    batch_jacobian,
    flatten,
    forward,
    unflatten,
)
from .preconditioner import PreconditionerState
from .projection import ProjectionResult, project

__all__ = [
    "Hyperparams",
    "SamplerSequence",
    "StepInfo",
    "TrajectoryRecord",
    "NumericalAbort",
    "sgn_step",
    "ekf_sweep_step",
    "train",
    "symmetric_init",
    "ntk_teacher",
    "reference_solution",
]


class NumericalAbort(FloatingPointError):
    """A non-finite quantity appeared; carries the iteration and the offending name."""

    def __init__(self, iteration: int, quantity: str):
        super().__init__(f"non-finite {quantity} at iteration {iteration}")
        self.iteration = iteration
        self.quantity = quantity


@dataclass(frozen=True)
class Hyperparams:
    """Step size ``eta``, accumulation weight ``alpha``, damping ``lam``, batch size and horizon.

    The ratios ``xi = eta / alpha`` and ``gamma = lam / (alpha Lip_phi^2 B)`` are
    always derived from these fields.
    """

    eta: float
    alpha: float
    lam: float
    batch: int
    k_max: int

    def __post_init__(self):
        for name in ("eta", "alpha", "lam"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ValueError(f"batch must be a positive integer, got {self.batch!r}")
        if int(self.k_max) != self.k_max or self.k_max < 0:
            raise ValueError(f"k_max must be a nonnegative integer, got {self.k_max!r}")

    @property
    def xi(self) -> float:
        return self.eta / self.alpha

    def gamma(self, lip_phi: float) -> float:
        return self.lam / (self.alpha * lip_phi ** 2 * self.batch)

    @classmethod
    def from_ratios(cls, xi: float, gamma: float, lip_phi: float, batch: int, k_max: int,
                    alpha: float = 1.0) -> "Hyperparams":
        """Build from ``(xi, gamma)``; ``alpha`` only rescales the whole iteration."""
        return cls(eta=xi * alpha, alpha=alpha, lam=gamma * alpha * lip_phi ** 2 * batch,
                   batch=batch, k_max=k_max)

    def check(self, loss: LossSpec, n: Optional[int] = None) -> list:
        """Warn about (but do not reject) settings outside the convergence guarantee."""
        msgs = []
        if self.xi < 2.0 / loss.nu:
            msgs.append(f"xi = {self.xi:.4g} < 2/nu = {2.0 / loss.nu:.4g}: convergence guarantee does not apply")
        if n is not None and self.batch > n:
            raise ValueError(f"batch size {self.batch} exceeds dataset size {n}")
        for m in msgs:
            warnings.warn(m, UserWarning, stacklevel=2)
        return msgs


class SamplerSequence:
    """Uniform size-``B`` subsets of ``range(n)``; ``I_k`` is a pure function of ``(seed, k)``.

    Each draw uses a fresh Philox stream keyed by ``(seed, k)`` and a partial
    Fisher-Yates shuffle, so paired runs and replays see identical index sets no
    matter how many draws happened before.
    """

    def __init__(self, seed: int, n: int, batch: int):
        if not 1 <= batch <= n:
            raise ValueError(f"need 1 <= batch <= n, got batch={batch}, n={n}")
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self.n = int(n)
        self.batch = int(batch)

    def __call__(self, k: int) -> np.ndarray:
        return self.indices(k)

    def indices(self, k: int) -> np.ndarray:
        if k < 0:
            raise IndexError("iteration index must be nonnegative")
        rng = np.random.Generator(np.random.Philox(key=(int(k) << 64) | self.seed))
        perm = np.arange(self.n)
        picks = rng.integers(np.arange(self.batch), self.n)
        for i, j in enumerate(picks):
            perm[i], perm[j] = perm[j], perm[i]
        return perm[: self.batch].copy()


@dataclass
class StepInfo:
    minibatch_loss: float
    grad_norm: float
    projection: ProjectionResult
    u: np.ndarray


@dataclass
class TrajectoryRecord:
    """Per-iteration telemetry. Row 0 is the initial state; row ``k`` follows step ``k - 1``.

    ``avg_risk[k]`` is the training risk of the Polyak average over ``w_0..w_{k-1}``
    (undefined, NaN, at row 0).
    """

    train_risk: list = field(default_factory=list)
    minibatch_loss: list = field(default_factory=list)
    logdet_ratio: list = field(default_factory=list)
    lambda_min: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    proj_active: list = field(default_factory=list)
    dist_to_w0: list = field(default_factory=list)
    avg_risk: list = field(default_factory=list)
    wall_time_ms: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    w_final: Optional[np.ndarray] = None
    w_avg: Optional[np.ndarray] = None
    state: Optional[PreconditionerState] = None
    sigma_bar: Optional[np.ndarray] = None
    sigma_bar_exact: Optional[np.ndarray] = None
    iterates: Optional[list] = None

    def __len__(self) -> int:
        return len(self.train_risk)

    def as_arrays(self) -> dict:
        keys = ("train_risk", "minibatch_loss", "logdet_ratio", "lambda_min", "grad_norm",
                "proj_active", "dist_to_w0", "avg_risk", "wall_time_ms")
        return {k: np.asarray(getattr(self, k), dtype=float) for k in keys}


def _finite(x, k, name):
    if not np.all(np.isfinite(x)):
        raise NumericalAbort(k, name)


def sgn_step(w, state: PreconditionerState, batch_idx, data: Dataset, cfg: NetworkConfig,
             act: ActivationSpec, loss: LossSpec, hyper: Hyperparams, geom: GeometrySpec,
             iteration: int = 0):
    """One SGN iteration; mutates ``state`` and returns ``(w_next, StepInfo)``."""
    idx = np.asarray(batch_idx)
    X, y = data.X[idx], data.y[idx]
    J, out = batch_jacobian(unflatten(w, cfg), cfg, act, X, return_output=True)
    _finite(out, iteration, "network output")
    G = loss.grad(out, y)
    _finite(J, iteration, "Jacobian")
    _finite(G, iteration, "loss derivative")
    state.accumulate(J)
    psi = J.T @ G
    u = w - hyper.eta * state.solve(psi)
    _finite(u, iteration, "preconditioned step")
    res = project(u, state, geom)
    _finite(res.point, iteration, "projected iterate")
    info = StepInfo(float(np.sum(loss.eval(out, y))), float(np.linalg.norm(psi)), res, u)
    return res.point, info


def ekf_sweep_step(w, state: PreconditionerState, batch_idx, data: Dataset, cfg: NetworkConfig,
                   act: ActivationSpec, loss: LossSpec, hyper: Hyperparams, geom: GeometrySpec):
    """The incremental (extended Kalman filter) form of one iteration.

    Processes the batch one sample at a time, all derivatives taken at ``w``:

        Z <- Z + alpha g g^T
        theta <- theta - Z^{-1} g (alpha g^T (theta - w) + eta l'(phi(x; w), y))

    This is recursive least squares on the linearised batch objective; after the
    sweep ``theta`` equals the plain step's ``u``. The final projection uses the
    post-sweep metric. Returns ``(w_next, theta)``.
    """
    idx = np.asarray(batch_idx)
    J, out = batch_jacobian(unflatten(w, cfg), cfg, act, data.X[idx], return_output=True)
    G = loss.grad(out, data.y[idx])
    theta = np.array(w, dtype=float)
    for g, gl in zip(J, G):
        state.accumulate(g[None, :])
        M = hyper.alpha * float(g @ (theta - w)) + hyper.eta * float(gl)
        theta = theta - M * state.solve(g)
    res = project(theta, state, geom)
    return res.point, theta


def _risk(w, data, cfg, act, loss):
    return empirical_risk(forward(unflatten(w, cfg), cfg, act, data.X), data.y, loss)


def train(data: Dataset, cfg: NetworkConfig, act: ActivationSpec, loss: LossSpec,
          hyper: Hyperparams, geom: GeometrySpec, sampler: SamplerSequence, init,
          track_lambda_min: int = 0, track_sigma_bar: bool = False, keep_iterates: bool = False,
          track_dense: bool = True, callback: Optional[Callable] = None) -> TrajectoryRecord:
    """Run ``hyper.k_max`` SGN iterations from ``init``.

    Args:
        track_lambda_min: log ``lambda_min(H_k)`` every this many iterations
            (0 disables; untracked rows hold NaN).
        track_sigma_bar: accumulate the gradient covariance along the trajectory, for the
            intrinsic-rank estimate. ``sigma_bar`` is built from the ``n`` trajectory-averaged
            per-sample gradients, so its rank is at most ``min(n, p)``; ``sigma_bar_exact`` is the
            plain time average of the covariances, whose rank can exceed ``n`` once the
            Jacobian rotates along the path.
        keep_iterates: store every ``w_k`` (memory ``k_max * p``).
        callback: called as ``callback(k, w_next, info, state)`` after each step.

    Raises:
        NumericalAbort: a NaN or inf appeared; the message names the iteration and quantity.
    """
    data.check_support()
    loss.check_labels(data.y)
    hyper.check(loss, data.n)
    if sampler.n != data.n or sampler.batch != hyper.batch:
        raise ValueError("sampler does not match the dataset size or batch size")
    w = flatten(init).copy() if isinstance(init, NetworkParams) else np.array(init, dtype=float)
    if w.shape != (cfg.num_params,):
        raise ValueError(f"initial point has shape {w.shape}, expected ({cfg.num_params},)")
    w0 = geom.w0_flat
    if np.linalg.norm(w - w0) > geom.radius + 1e-9:
        raise ValueError("initial point lies outside the constraint set")

    p = cfg.num_params
    state = PreconditionerState(p, hyper.alpha, hyper.lam, track_dense=track_dense)
    rec = TrajectoryRecord()
    rec.iterates = [w.copy()] if keep_iterates else None
    wsum = np.zeros(p)
    sigma_sum = np.zeros((p, p)) if track_sigma_bar else None
    grad_sum = np.zeros((data.n, p)) if track_sigma_bar else None

    def _row(risk, mb, gn, active, avg_risk, dt, lam_min):
        rec.train_risk.append(risk)
        rec.minibatch_loss.append(mb)
        rec.logdet_ratio.append(state.logdet_ratio())
        rec.lambda_min.append(lam_min)
        rec.grad_norm.append(gn)
        rec.proj_active.append(bool(active))
        rec.dist_to_w0.append(float(np.linalg.norm(w - w0)))
        rec.avg_risk.append(avg_risk)
        rec.wall_time_ms.append(dt)

    lam0 = hyper.lam if track_lambda_min else math.nan
    _row(_risk(w, data, cfg, act, loss), math.nan, math.nan, False, math.nan, 0.0, lam0)
    _finite(rec.train_risk[0], 0, "training risk")

    for k in range(hyper.k_max):
        t0 = time.perf_counter()
        idx = sampler.indices(k)
        rec.batches.append(idx)
        wsum += w
        if sigma_sum is not None:
            Jf = batch_jacobian(unflatten(w, cfg), cfg, act, data.X)
            sigma_sum += Jf.T @ Jf / data.n
            grad_sum += Jf
        w_next, info = sgn_step(w, state, idx, data, cfg, act, loss, hyper, geom, iteration=k)
        dt = 1e3 * (time.perf_counter() - t0)
        w = w_next
        if keep_iterates:
            rec.iterates.append(w.copy())
        risk = _risk(w, data, cfg, act, loss)
        _finite(risk, k, "training risk")
        avg_risk = _risk(wsum / (k + 1), data, cfg, act, loss)
        lam_min = math.nan
        if track_lambda_min and (k + 1) % track_lambda_min == 0:
            lam_min = state.min_eigenvalue()
        _row(risk, info.minibatch_loss, info.grad_norm, info.projection.active, avg_risk, dt, lam_min)
        if callback is not None:
            callback(k, w, info, state)

    rec.w_final = w
    rec.w_avg = wsum / hyper.k_max if hyper.k_max > 0 else w.copy()
    rec.state = state
    if sigma_sum is not None and hyper.k_max > 0:
        rec.sigma_bar_exact = sigma_sum / hyper.k_max
        G = grad_sum / hyper.k_max
        rec.sigma_bar = G.T @ G / data.n
    return rec


def symmetric_init(cfg: NetworkConfig, seed) -> NetworkParams:
    """Mirrored shallow initialisation: units ``i`` and ``i + m/2`` share ``W``, have opposite ``c``.

    Each of the first ``m/2`` units draws ``(c_i, W_i) ~ N(0, I_{d+1})`` jointly, so
    the network output is exactly zero at initialisation.
    """
    if cfg.depth != 1:
        raise ValueError("symmetric initialisation is defined for a single hidden layer only")
    if cfg.width % 2:
        raise ValueError(f"symmetric initialisation needs an even width, got {cfg.width}")
    half = cfg.width // 2
    Z = np.random.default_rng(seed).standard_normal((half, cfg.input_dim + 1))
    c, W = Z[:, 0], Z[:, 1:]
    return NetworkParams([np.vstack([W, W])], np.concatenate([c, -c]))


def ntk_teacher(input_dim: int, v_c_bar: float, v_W_bar: float, seed, m_teacher: int = 100_000,
                act: ActivationSpec = TANH, transport: str = "sign") -> Callable:
    """Random-feature approximation of a target in the NTK function class.

    ``f(x) = mean_i [ v_c(w_i) s(<W_i, x>) + c_i <v_W(w_i), x> s'(<W_i, x>) ]`` with
    ``w_i = (c_i, W_i) ~ N(0, I_{d+1})`` frozen at construction.

    Transport maps:
        ``"sign"`` (default): ``v_c = v_c_bar sign(<W, a>)``, ``v_W = v_W_bar sign(c) b``
        for unit vectors ``a, b`` drawn from the seed (orthogonal when ``d > 1``).
        ``"constant"``: ``v_c = v_c_bar``, ``v_W = v_W_bar 1/sqrt(d)``. For an odd
        activation this target vanishes identically, which is why it is not the default.
    """
    if v_c_bar < 0 or v_W_bar < 0:
        raise ValueError("transport bounds must be nonnegative")
    if m_teacher < 1:
        raise ValueError("m_teacher must be positive")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((m_teacher, input_dim + 1))
    c, W = Z[:, 0], Z[:, 1:]
    if transport == "sign":
        a = rng.standard_normal(input_dim)
        a /= np.linalg.norm(a)
        b = rng.standard_normal(input_dim)
        if input_dim > 1:
            # orthogonal directions keep the two feature terms from piling up on one input
            b -= (b @ a) * a
        b /= np.linalg.norm(b)
        vc = v_c_bar * np.sign(W @ a)
        vW = v_W_bar * np.sign(c)[:, None] * b[None, :]
    elif transport == "constant":
        vc = np.full(m_teacher, float(v_c_bar))
        vW = np.full((m_teacher, input_dim), v_W_bar / math.sqrt(input_dim))
    else:
        raise ValueError(f"unknown transport {transport!r}")

    def f(x):
        Xb = np.atleast_2d(np.asarray(x, dtype=float))
        if Xb.shape[1] != input_dim:
            raise ValueError(f"teacher expects inputs of dimension {input_dim}")
        out = np.empty(Xb.shape[0])
        # chunk over inputs to keep the (chunk, m_teacher) buffers small
        for s in range(0, Xb.shape[0], 64):
            Xc = Xb[s:s + 64]
            Zp = Xc @ W.T
            feat = act.eval(Zp) @ vc + (act.deriv(Zp) * c[None, :] * (Xc @ vW.T)).sum(axis=1)
            out[s:s + 64] = feat / m_teacher
        return out[0] if np.ndim(x) == 1 else out

    return f


def reference_solution(data: Dataset, cfg: NetworkConfig, act: ActivationSpec, loss: LossSpec,
                       geom: GeometrySpec, start=None, iters: int = 300, mu0: float = 1e-2,
                       tol: float = 1e-14):
    """Full-batch projected Levenberg-Marquardt, used as a proxy for ``min_C R``.

    Every step works in the ``J^T J + mu I`` metric and is projected onto the ball
    in that metric. Both the solve and the projection go through the thin SVD of
    the ``n x p`` Jacobian, so no ``p x p`` matrix is formed. ``mu`` follows the
    usual accept/reject schedule.

    Returns:
        ``(w, risk)``.
    """
    w0 = geom.w0_flat
    r = geom.radius
    w = np.array(w0 if start is None else start, dtype=float)
    risk = _risk(w, data, cfg, act, loss)
    mu = mu0
    stall = 0
    for _ in range(iters):
        J, out = batch_jacobian(unflatten(w, cfg), cfg, act, data.X, return_output=True)
        G = loss.grad(out, data.y)
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        UG = U.T @ G
        improved = False
        for _attempt in range(30):
            u = w - Vt.T @ (s / (s ** 2 + mu) * UG)
            cand = _ball_project_lowrank(u - w0, Vt, s ** 2 + mu, mu, r) + w0
            new = _risk(cand, data, cfg, act, loss)
            if new < risk:
                improved = True
                break
            mu *= 4.0
        if not improved:
            break
        gain = risk - new
        w, risk = cand, new
        mu = max(mu / 3.0, 1e-12)
        stall = stall + 1 if gain <= tol * max(1.0, risk) else 0
        if stall >= 5:
            break
    return w, risk


def _ball_project_lowrank(v, Vt, h, mu, r):
    """Projection of ``w0 + v`` for the metric ``V diag(h) V^T + mu (I - V V^T)``; returns the offset."""
    nv = np.linalg.norm(v)
    if nv <= r:
        return v
    a = Vt @ v
    perp2 = max(nv ** 2 - float(a @ a), 0.0)

    def norm2(nu):
        return float(np.sum((h * a / (h + nu)) ** 2)) + (mu / (mu + nu)) ** 2 * perp2 - r * r

    hi = float(max(h.max(), mu)) * (nv / r - 1.0) + 1.0
    nu = brentq(norm2, 0.0, hi, xtol=1e-14, rtol=1e-14)
    s = Vt.T @ (h * a / (h + nu)) + (mu / (mu + nu)) * (v - Vt.T @ a)
    ns = np.linalg.norm(s)
    return s * (r / ns) if ns > r else s
