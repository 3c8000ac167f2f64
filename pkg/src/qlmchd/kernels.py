"""Kernel functions and Gram matrices.

The RBF kernel uses the ``exp(-||x - y||^2 / (2 sigma^2))`` convention.
Squared distances are formed from coordinate differences (not from the
``|x|^2 + |y|^2 - 2<x, y>`` expansion) so Gram matrices are exactly symmetric,
have an exact unit diagonal and are invariant to translating the data.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


class KernelFamily(str, enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its width (``sigma`` is ignored for the linear kernel)."""

    family: KernelFamily = KernelFamily.RBF
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is KernelFamily.RBF and not self.sigma > 0:
            raise ValueError(f"RBF kernel needs sigma > 0, got {self.sigma}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelFamily.LINEAR, 1.0)

    @classmethod
    def rbf(cls, sigma: float) -> "KernelSpec":
        return cls(KernelFamily.RBF, float(sigma))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(KernelFamily(d["family"]), float(d["sigma"]))

    def __str__(self):
        if self.family is KernelFamily.LINEAR:
            return "linear"
        return f"rbf(sigma={self.sigma:g})"


def _as_2d(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D sample matrix, got shape {X.shape}")
    return X


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if spec.family is KernelFamily.LINEAR:
        return float(x @ y)
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))


def gram_cross(spec: KernelSpec, X, Z) -> np.ndarray:
    """Rectangular kernel block ``K[i, j] = k(X[i], Z[j])``."""
    X = _as_2d(X, "X")
    Z = _as_2d(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if X.shape[0] == 0 or Z.shape[0] == 0:
        return np.zeros((X.shape[0], Z.shape[0]))
    if spec.family is KernelFamily.LINEAR:
        return X @ Z.T
    return np.exp(-cdist(X, Z, "sqeuclidean") / (2.0 * spec.sigma**2))


def gram(spec: KernelSpec, X) -> np.ndarray:
    X = _as_2d(X, "X")
    if X.shape[0] == 0:
        raise ValueError("cannot build a Gram matrix from an empty sample set")
    return gram_cross(spec, X, X)
