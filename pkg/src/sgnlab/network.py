"""Deep feedforward network with 1/sqrt(m) layer scaling and exact per-sample gradients.

Parameters are flattened in the fixed order ``(W1 row-major, ..., WH row-major, c)``;
every other module indexes parameter vectors through :func:`flatten` and
:func:`unflatten` so that dense and incremental code paths agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List

import numpy as np

__all__ = [
    "ActivationSpec",
    "NetworkConfig",
    "NetworkParams",
    "GeometrySpec",
    "TANH",
    "SIGMOID",
    "ACTIVATIONS",
    "get_activation",
    "num_params",
    "flatten",
    "unflatten",
    "forward",
    "forward_flat",
    "per_sample_gradient",
    "batch_jacobian",
    "gaussian_init",
    "spectral_norm",
    "make_geometry",
    "sample_in_ball",
]


@dataclass(frozen=True)
class ActivationSpec:
    """A bounded smooth activation together with sup-norm bounds on it and its derivatives."""

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    second_deriv: Callable[[np.ndarray], np.ndarray]
    sigma0: float
    sigma1: float
    sigma2: float


def _tanh_d1(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _tanh_d2(z):
    t = np.tanh(z)
    return -2.0 * t * (1.0 - t * t)


def _sigmoid(z):
    # split on sign to avoid overflow in exp
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_d1(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


def _sigmoid_d2(z):
    s = _sigmoid(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


# (1, 2, 2) are the constants quoted for tanh in the analysis; the tight ones are
# (1, 1, 4/(3*sqrt(3))). The loose values are kept so bound arithmetic matches.
TANH = ActivationSpec("tanh", np.tanh, _tanh_d1, _tanh_d2, 1.0, 2.0, 2.0)

# tight constants: |s| < 1, |s'| <= 1/4, |s''| <= 1/(6*sqrt(3))
SIGMOID = ActivationSpec(
    "sigmoid", _sigmoid, _sigmoid_d1, _sigmoid_d2, 1.0, 0.25, 1.0 / (6.0 * math.sqrt(3.0))
)

ACTIVATIONS = {"tanh": TANH, "sigmoid": SIGMOID}


def get_activation(name: str) -> ActivationSpec:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass(frozen=True)
class NetworkConfig:
    depth: int
    width: int
    input_dim: int

    def __post_init__(self):
        for name in ("depth", "width", "input_dim"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def num_params(self) -> int:
        m, d, H = self.width, self.input_dim, self.depth
        return m * d + (H - 1) * m * m + m

    def layer_shapes(self):
        shapes = [(self.width, self.input_dim)]
        shapes += [(self.width, self.width)] * (self.depth - 1)
        return shapes


@dataclass
class NetworkParams:
    layers: List[np.ndarray]
    c: np.ndarray

    def copy(self) -> "NetworkParams":
        return NetworkParams([W.copy() for W in self.layers], self.c.copy())


def num_params(cfg: NetworkConfig) -> int:
    return cfg.num_params


def flatten(params: NetworkParams) -> np.ndarray:
    parts = [np.ravel(W) for W in params.layers] + [np.ravel(params.c)]
    return np.concatenate(parts).astype(float, copy=False)


def unflatten(w: np.ndarray, cfg: NetworkConfig) -> NetworkParams:
    """Split a flat vector into layer views; the result shares memory with ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (cfg.num_params,):
        raise ValueError(f"expected a vector of length {cfg.num_params}, got shape {w.shape}")
    layers = []
    off = 0
    for shape in cfg.layer_shapes():
        size = shape[0] * shape[1]
        layers.append(w[off:off + size].reshape(shape))
        off += size
    return NetworkParams(layers, w[off:off + cfg.width])


def _as_batch(x, cfg: NetworkConfig) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise ValueError(
            f"input dimension mismatch: expected (*, {cfg.input_dim}), got {np.shape(x)}"
        )
    return X


def _forward_cache(params: NetworkParams, cfg: NetworkConfig, act: ActivationSpec, X):
    scale = 1.0 / math.sqrt(cfg.width)
    xs = [X]
    pre = []
    h = X
    for W in params.layers:
        z = h @ W.T
        pre.append(z)
        h = scale * act.eval(z)
        xs.append(h)
    return xs, pre


def forward(params: NetworkParams, cfg: NetworkConfig, act: ActivationSpec, x) -> np.ndarray:
    """Network output ``c^T x^(H)``.

    ``x`` may be a single input of length ``d`` (returns a 0-d float) or an ``(n, d)``
    batch (returns a length-``n`` array).
    """
    X = _as_batch(x, cfg)
    xs, _ = _forward_cache(params, cfg, act, X)
    out = xs[-1] @ params.c
    if np.ndim(x) == 1:
        return float(out[0])
    return out


def forward_flat(w, cfg: NetworkConfig, act: ActivationSpec, X) -> np.ndarray:
    return forward(unflatten(w, cfg), cfg, act, np.atleast_2d(X))


def batch_jacobian(params: NetworkParams, cfg: NetworkConfig, act: ActivationSpec, batch,
                   return_output: bool = False):
    """Stack per-sample parameter gradients into a ``(B, p)`` matrix.

    Rows are independent: row ``j`` depends only on input ``j``. With
    ``return_output=True`` the network outputs on the batch are returned as well
    (they fall out of the forward pass for free).
    """
    X = np.asarray(batch, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    X = _as_batch(X, cfg)
    B = X.shape[0]
    scale = 1.0 / math.sqrt(cfg.width)
    xs, pre = _forward_cache(params, cfg, act, X)

    J = np.empty((B, cfg.num_params))
    offs = np.cumsum([0] + [a * b for a, b in cfg.layer_shapes()])
    J[:, offs[-1]:] = xs[-1]

    # u_h = d(out)/d x^(h); start from u_H = c and walk back through the layers
    u = np.broadcast_to(params.c, (B, cfg.width))
    for h in range(cfg.depth - 1, -1, -1):
        delta = act.deriv(pre[h]) * u  # (B, m): diag(sigma'(z_h)) u_h
        gW = scale * delta[:, :, None] * xs[h][:, None, :]
        J[:, offs[h]:offs[h + 1]] = gW.reshape(B, -1)
        if h > 0:
            u = scale * delta @ params.layers[h]
    if return_output:
        return J, xs[-1] @ params.c
    return J


def per_sample_gradient(params: NetworkParams, cfg: NetworkConfig, act: ActivationSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("per_sample_gradient expects a single input vector")
    return batch_jacobian(params, cfg, act, x[None, :])[0]


def gaussian_init(cfg: NetworkConfig, seed, scale: float = 1.0) -> NetworkParams:
    """i.i.d. N(0, scale^2) entries for every weight (the standard NTK initialization)."""
    rng = np.random.default_rng(seed)
    layers = [scale * rng.standard_normal(shape) for shape in cfg.layer_shapes()]
    return NetworkParams(layers, scale * rng.standard_normal(cfg.width))


def spectral_norm(A: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000, seed=0) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        Av = A @ v
        w = A.T @ Av
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


@dataclass
class GeometrySpec:
    """Anchor point, ball radius and the derived scale constants of the parameter set.

    ``C`` is the Euclidean ball of the given radius around ``w0``. Its diameter
    (``2 * radius``) is what enters the convergence and stability bounds.
    """

    w0: NetworkParams
    radius: float
    cfg: NetworkConfig
    kappa0: float = field(init=False)
    zeta0: float = field(init=False)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        m = self.cfg.width
        self.kappa0 = max(spectral_norm(W) for W in self.w0.layers) / math.sqrt(m)
        self.zeta0 = float(np.linalg.norm(self.w0.c))

    @cached_property
    def w0_flat(self) -> np.ndarray:
        w = flatten(self.w0).copy()
        w.setflags(write=False)
        return w

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def kappa_C(self) -> float:
        return self.kappa0 + self.radius / math.sqrt(self.cfg.width)

    @property
    def zeta_C(self) -> float:
        return self.zeta0 + self.radius / math.sqrt(self.cfg.width)


def make_geometry(w0: NetworkParams, cfg: NetworkConfig, radius: float) -> GeometrySpec:
    return GeometrySpec(w0=w0, radius=float(radius), cfg=cfg)


def sample_in_ball(center: np.ndarray, radius: float, rng, size: int = 1) -> np.ndarray:
    """Points ``center + t * radius * u`` with ``u`` uniform on the sphere and ``t ~ U[0, 1]``.

    Radii are drawn uniformly rather than volume-uniformly so probes cover the
    interior as well as the boundary shell.
    """
    p = center.shape[0]
    U = rng.standard_normal((size, p))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    t = rng.uniform(0.0, 1.0, size=(size, 1))
    return center[None, :] + radius * t * U
