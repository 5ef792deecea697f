"""Paired-trajectory stability experiments.

Two SGN runs start from the same point and replay the same minibatch sequence on
training sets that differ in one sample ``j_star``. Their distance is measured in
the midpoint metric ``Hbar_k = (H_k + H'_k) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .bounds import LipschitzBounds
from .dataset import Dataset
from .losses import LossSpec
from .network import ActivationSpec, GeometrySpec, NetworkConfig, NetworkParams, flatten, forward, unflatten
from .optimizer import Hyperparams, NumericalAbort, SamplerSequence, sgn_step
from .preconditioner import PreconditionerState

__all__ = [
    "StabilityPair",
    "StabilityLog",
    "make_neighbor",
    "random_replacement",
    "run_pair",
    "stability_to_generalization",
    "probe_loss_difference",
    "empirical_generalization_gap",
]


@dataclass(frozen=True)
class StabilityPair:
    S: Dataset
    S_prime: Dataset
    j_star: int
    sampler: SamplerSequence


def random_replacement(d: int, rng, binary: bool = False):
    """A sample with ``x`` uniform in direction, radius in [0, 1], and ``y`` in [-1, 1] (or {-1, 1})."""
    x = rng.standard_normal(d)
    x *= rng.uniform() / np.linalg.norm(x)
    y = float(rng.choice([-1.0, 1.0])) if binary else float(rng.uniform(-1.0, 1.0))
    return x, y


def make_neighbor(data: Dataset, j_star: int, replacement, seed: int, batch: int) -> StabilityPair:
    """Pair ``data`` with a copy whose sample ``j_star`` is replaced by ``replacement = (x, y)``.

    Raises:
        ValueError: the replacement equals the original sample or violates ``||x|| <= 1, |y| <= 1``.
    """
    x, y = replacement
    x = np.asarray(x, dtype=float)
    if x.shape != (data.d,):
        raise ValueError(f"replacement input must have shape ({data.d},)")
    if np.linalg.norm(x) > 1.0 + 1e-12 or abs(y) > 1.0 + 1e-12:
        raise ValueError("replacement sample must satisfy ||x|| <= 1 and |y| <= 1")
    if not 0 <= j_star < data.n:
        raise IndexError(f"j_star={j_star} out of range for n={data.n}")
    if np.array_equal(x, data.X[j_star]) and float(y) == float(data.y[j_star]):
        raise ValueError("replacement equals the original sample; the datasets would be identical")
    return StabilityPair(data, data.replace(j_star, x, y), int(j_star), SamplerSequence(seed, data.n, batch))


@dataclass
class StabilityLog:
    """Lockstep telemetry of a pair. Index ``k`` refers to ``Delta_k = w_k - w'_k``.

    ``delta_h[k]`` is ``||Delta_k||`` in ``Hbar_{k-1}`` (``Hbar_{-1} = lam I``);
    ``h_diff[k]`` is ``||H_{k-1} - H'_{k-1}||_2``. Entries that were not logged are NaN.
    """

    delta_l2: list = field(default_factory=list)
    delta_h: list = field(default_factory=list)
    h_diff: list = field(default_factory=list)
    j_in_batch: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    train_risk: list = field(default_factory=list)
    train_risk_prime: list = field(default_factory=list)
    w_avg: Optional[np.ndarray] = None
    w_avg_prime: Optional[np.ndarray] = None
    w_final: Optional[np.ndarray] = None
    w_final_prime: Optional[np.ndarray] = None
    state: Optional[PreconditionerState] = None
    state_prime: Optional[PreconditionerState] = None
    lam: float = math.nan

    @property
    def k(self) -> int:
        return len(self.delta_l2) - 1


def _sym_norm(D, v0=None):
    """Spectral norm of a symmetric matrix (largest |eigenvalue|)."""
    if not np.any(D):
        return 0.0, v0
    p = D.shape[0]
    if p <= 64:
        return float(np.max(np.abs(np.linalg.eigvalsh(D)))), v0
    try:
        vals, vecs = eigsh(D, k=1, which="LM", v0=v0, tol=1e-8)
    except ArpackNoConvergence as exc:
        if exc.eigenvalues.size == 0:
            return float(np.max(np.abs(np.linalg.eigvalsh(D)))), v0
        vals, vecs = exc.eigenvalues, exc.eigenvectors
    return float(abs(vals[0])), vecs[:, 0]


def run_pair(pair: StabilityPair, cfg: NetworkConfig, act: ActivationSpec, loss: LossSpec,
             hyper: Hyperparams, geom: GeometrySpec, init, k_max: Optional[int] = None,
             log_every: int = 1, h_diff_every: int = 0, risk_every: int = 0) -> StabilityLog:
    """Step both trainers in lockstep on the shared minibatch sequence.

    Args:
        log_every: compute ``||Delta||`` in the midpoint metric every this many steps
            (the last step is always logged).
        h_diff_every: compute ``||H_k - H'_k||_2`` every this many steps (0: only at the end).
        risk_every: log both training risks every this many steps (0: never).
    """
    k_max = hyper.k_max if k_max is None else int(k_max)
    for ds in (pair.S, pair.S_prime):
        ds.check_support()
        loss.check_labels(ds.y)
    w = flatten(init).copy() if isinstance(init, NetworkParams) else np.array(init, dtype=float)
    wp = w.copy()
    p = cfg.num_params
    st = PreconditionerState(p, hyper.alpha, hyper.lam)
    stp = PreconditionerState(p, hyper.alpha, hyper.lam)
    log = StabilityLog(lam=hyper.lam)
    log.delta_l2.append(0.0)
    log.delta_h.append(0.0)
    log.h_diff.append(0.0)
    wsum = np.zeros(p)
    wsum_p = np.zeros(p)
    v0 = None

    def _risk(wv, ds):
        return float(np.mean(loss.eval(forward(unflatten(wv, cfg), cfg, act, ds.X), ds.y)))

    for k in range(k_max):
        idx = pair.sampler.indices(k)
        log.batches.append(idx)
        log.j_in_batch.append(bool(np.any(idx == pair.j_star)))
        wsum += w
        wsum_p += wp
        try:
            w, _ = sgn_step(w, st, idx, pair.S, cfg, act, loss, hyper, geom, iteration=k)
            wp, _ = sgn_step(wp, stp, idx, pair.S_prime, cfg, act, loss, hyper, geom, iteration=k)
        except NumericalAbort as exc:
            raise NumericalAbort(exc.iteration, exc.quantity + " in paired run") from exc
        delta = w - wp
        last = k == k_max - 1
        log.delta_l2.append(float(np.linalg.norm(delta)))
        if last or (log_every and (k + 1) % log_every == 0):
            q = 0.5 * (delta @ (st.H @ delta) + delta @ (stp.H @ delta))
            log.delta_h.append(math.sqrt(max(q, 0.0)))
        else:
            log.delta_h.append(math.nan)
        if last or (h_diff_every and (k + 1) % h_diff_every == 0):
            val, v0 = _sym_norm(st.H - stp.H, v0)
            log.h_diff.append(val)
        else:
            log.h_diff.append(math.nan)
        if risk_every and ((k + 1) % risk_every == 0 or last):
            log.train_risk.append(_risk(w, pair.S))
            log.train_risk_prime.append(_risk(wp, pair.S_prime))

    n_avg = max(k_max, 1)
    log.w_avg = wsum / n_avg if k_max else w.copy()
    log.w_avg_prime = wsum_p / n_avg if k_max else wp.copy()
    log.w_final, log.w_final_prime = w, wp
    log.state, log.state_prime = st, stp
    return log


def stability_to_generalization(log: StabilityLog, lip: LipschitzBounds, lam: float) -> float:
    """``(Lip_loss Lip_phi / sqrt(lam)) (1/k) sum_{t=1..k} ||Delta_t||_{Hbar_{t-1}}``.

    Bounds the loss difference between the two averaged iterates at any test point.
    Needs every step logged.
    """
    if log.k < 1:
        raise ValueError("stability log is empty")
    d = np.asarray(log.delta_h[1:], dtype=float)
    if np.any(np.isnan(d)):
        raise ValueError("the bound needs the midpoint-metric distance at every step (log_every=1)")
    return lip.lip_loss * lip.lip_phi / math.sqrt(lam) * float(np.mean(d))


def probe_loss_difference(log: StabilityLog, cfg: NetworkConfig, act: ActivationSpec, loss: LossSpec,
                          n_probes: int = 1000, seed=0) -> float:
    """Max over random test points of ``|l(phi(x; w_avg), y) - l(phi(x; w_avg'), y)|``.

    A lower estimate of the supremum over all test points.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_probes, cfg.input_dim))
    X *= (rng.uniform(size=n_probes) / np.linalg.norm(X, axis=1))[:, None]
    if loss.binary_labels:
        y = rng.choice([-1.0, 1.0], size=n_probes)
    else:
        y = rng.uniform(-1.0, 1.0, size=n_probes)
    a = forward(unflatten(log.w_avg, cfg), cfg, act, X)
    b = forward(unflatten(log.w_avg_prime, cfg), cfg, act, X)
    return float(np.max(np.abs(loss.eval(a, y) - loss.eval(b, y))))


def empirical_generalization_gap(w, cfg: NetworkConfig, act: ActivationSpec, loss: LossSpec,
                                 train: Dataset, held_out: Dataset) -> float:
    """Held-out mean loss minus training mean loss at ``w``."""
    if held_out.n == 0:
        raise ValueError("empty held-out set")
    params = unflatten(np.asarray(w, dtype=float), cfg)
    tr = float(np.mean(loss.eval(forward(params, cfg, act, train.X), train.y)))
    te = float(np.mean(loss.eval(forward(params, cfg, act, held_out.X), held_out.y)))
    return te - tr
