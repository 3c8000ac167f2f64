"""Quasi-SVDD: the smallest soft ball whose center is pulled toward the class mean.

Primal, in feature space::

    min_{R, a, e}  R^2 + B * ||a - mean||^2 + C * sum(e)
    s.t.           ||phi(x_i) - a||^2 <= R^2 + e_i,   e_i >= 0

Stationarity gives ``sum(alpha) = 1``, ``0 <= alpha_i <= C`` and the center
``a = sum_i beta_i phi(x_i)`` with ``beta = (alpha + B/n) / (1 + B)``.
Substituting back, the dual objective (to maximise) is::

    sum_i alpha_i K_ii - (alpha^T K alpha + (2B/n) alpha^T K 1) / (1 + B) + const

which, as a minimisation in the ``0.5 a^T Q a + p^T a`` form, is::

    Q = 2 K / (1 + B)
    p = (2B / (n (1 + B))) K 1 - diag(K)

At ``B = 0`` this is the classical SVDD dual; as ``B -> inf`` the center tends
to the class mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qp

DEFAULT_B = 1.0
DEFAULT_C = 1.0


@dataclass(frozen=True)
class QsvddModel:
    alpha: np.ndarray
    beta: np.ndarray
    radius_sq: float
    B: float
    C: float
    gram: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def center_norm_sq(self) -> float:
        """``beta^T K beta``, the squared feature-space norm of the center."""
        return float(self.beta @ self.gram @ self.beta)

    def support_mask(self, tol=1e-9):
        return self.alpha > tol

    def margin_support_mask(self, tol=1e-9):
        return (self.alpha > tol) & (self.alpha < self.C - tol)


def _check_B(B):
    if not B > -1:
        raise ValueError(f"B must be > -1, got {B}")


def assemble_dual(gram, B: float = DEFAULT_B, C: float = DEFAULT_C, tol=1e-6, max_iter=None):
    _check_B(B)
    K = np.asarray(gram, dtype=float)
    n = K.shape[0]
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    Q = (2.0 / (1.0 + B)) * K
    p = (2.0 * B / (n * (1.0 + B))) * K.sum(axis=1) - np.diag(K)
    return qp.SimplexBoxQp(Q, p, C, tol=tol, max_iter=max_iter)


def center_coefficients(alpha, B: float, n: int | None = None) -> np.ndarray:
    _check_B(B)
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.shape[0] if n is None else n
    return (alpha + B / n) / (1.0 + B)


def _dist_sq_train(K, beta):
    Kb = K @ beta
    return np.diag(K) - 2.0 * Kb + beta @ Kb


def _radius_sq(alpha, d, C, tol):
    """Squared radius from the KKT conditions of the soft ball.

    Margin support vectors (strictly inside the box) sit on the sphere; the
    median of their distances absorbs solver jitter.  Without any, the radius
    is only bracketed: points with ``alpha = 0`` lie inside and points at the
    cap ``alpha = C`` lie outside, so take the midpoint of that bracket.
    """
    margin = (alpha > tol) & (alpha < C - tol)
    if margin.any():
        return max(float(np.median(d[margin])), 0.0)
    inside = alpha <= tol
    outside = alpha >= C - tol
    lo = float(d[inside].max()) if inside.any() else 0.0
    hi = float(d[outside].min()) if outside.any() else lo
    return max(0.5 * (lo + max(hi, lo)), 0.0)


def fit_qsvdd(gram, B: float = DEFAULT_B, C: float = DEFAULT_C, tol=1e-6, max_iter=None) -> QsvddModel:
    K = np.asarray(gram, dtype=float)
    n = K.shape[0]
    if n == 1:
        _check_B(B)
        one = np.ones(1)
        return QsvddModel(one, one.copy(), 0.0, float(B), float(C), K)
    problem = assemble_dual(K, B, C, tol=tol, max_iter=max_iter)
    alpha = qp.solve(problem).alpha
    beta = center_coefficients(alpha, B, n)
    d = _dist_sq_train(K, beta)
    sv_tol = 1e-9 * min(1.0, C)
    r2 = _radius_sq(alpha, d, C, sv_tol)
    return QsvddModel(alpha, beta, r2, float(B), float(C), K)


def fit_svdd(gram, C: float = DEFAULT_C, tol=1e-6, max_iter=None) -> QsvddModel:
    """Classical SVDD ball (no pull toward the mean), assembled on its own.

    Dual: ``max sum_i a_i K_ii - a^T K a`` on the capped simplex; the center
    coefficients are ``a`` itself.
    """
    K = np.asarray(gram, dtype=float)
    n = K.shape[0]
    if n == 1:
        one = np.ones(1)
        return QsvddModel(one, one.copy(), 0.0, 0.0, float(C), K)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    problem = qp.SimplexBoxQp(2.0 * K, -np.diag(K), C, tol=tol, max_iter=max_iter)
    alpha = qp.solve(problem).alpha
    d = _dist_sq_train(K, alpha)
    r2 = _radius_sq(alpha, d, C, 1e-9 * min(1.0, C))
    return QsvddModel(alpha, alpha.copy(), r2, 0.0, float(C), K)


def dist_sq_to_center(model: QsvddModel, k_z, k_zz) -> np.ndarray | float:
    """Squared feature-space distance from ``z`` to the ball center.

    ``k_z`` holds ``k(x_i, z)`` over the training points (length ``n``, or an
    ``(n, m)`` block for ``m`` queries) and ``k_zz`` is ``k(z, z)``.
    """
    k_z = np.asarray(k_z, dtype=float)
    if k_z.shape[0] != model.n:
        raise ValueError(f"kernel vector has length {k_z.shape[0]}, expected {model.n}")
    d = np.asarray(k_zz, dtype=float) - 2.0 * (model.beta @ k_z) + model.center_norm_sq
    return float(d) if d.ndim == 0 else d


def contains(model: QsvddModel, k_z, k_zz, tol=1e-9):
    return dist_sq_to_center(model, k_z, k_zz) <= model.radius_sq + tol


def explicit_center(model: QsvddModel, X) -> np.ndarray:
    """Center coordinates for a linear-kernel fit on the rows of ``X``."""
    return np.asarray(X, dtype=float).T @ model.beta


def primal_objective(X, center, radius_sq, B, C) -> float:
    """Value of the primal at an explicit (linear-kernel) center and radius."""
    X = np.asarray(X, dtype=float)
    slack = np.maximum(((X - center) ** 2).sum(axis=1) - radius_sq, 0.0).sum()
    gravity = ((X.mean(axis=0) - center) ** 2).sum()
    penalty = C * slack if slack > 0 else 0.0
    return float(radius_sq + B * gravity + penalty)


def dual_objective(model: QsvddModel) -> float:
    """Lagrangian dual value at ``model.alpha`` (equals the primal optimum)."""
    K, a, B, n = model.gram, model.alpha, model.B, model.n
    row = K.sum(axis=1)
    quad = (a @ K @ a + 2.0 * B / n * (a @ row)) / (1.0 + B)
    return float(a @ np.diag(K) - quad + B / (1.0 + B) * row.sum() / n**2)
