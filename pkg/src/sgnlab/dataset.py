"""In-memory training sets with the compact-support normalisation ``||x|| <= 1, |y| <= 1``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "normalize_inputs"]

_SLACK = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` of shape ``(n, d)`` and scalar labels ``y`` of length ``n``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] == 0:
            raise ValueError("empty dataset")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def check_support(self) -> None:
        """Raise unless every input lies in the unit ball and every label in [-1, 1]."""
        norms = np.linalg.norm(self.X, axis=1)
        if np.any(norms > 1.0 + _SLACK):
            j = int(np.argmax(norms))
            raise ValueError(f"input {j} has norm {norms[j]:.6g} > 1; normalize the inputs first")
        if np.any(np.abs(self.y) > 1.0 + _SLACK):
            j = int(np.argmax(np.abs(self.y)))
            raise ValueError(f"label {j} is {self.y[j]:.6g}, outside [-1, 1]")

    def replace(self, j: int, x, y) -> "Dataset":
        """Copy with sample ``j`` swapped for ``(x, y)``."""
        if not 0 <= j < self.n:
            raise IndexError(f"sample index {j} out of range for n={self.n}")
        X = self.X.copy()
        Y = self.y.copy()
        X[j] = np.asarray(x, dtype=float)
        Y[j] = float(y)
        return Dataset(X, Y)


def normalize_inputs(X) -> tuple:
    """Divide every input by the largest row norm (if it exceeds 1).

    Returns:
        ``(X_scaled, scale)`` with ``X_scaled = X / scale`` and ``scale >= 1``.
    """
    X = np.asarray(X, dtype=float)
    top = float(np.max(np.linalg.norm(X, axis=1))) if X.size else 0.0
    scale = max(top, 1.0)
    return X / scale, scale
