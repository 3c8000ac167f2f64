"""Hyperdisks (affine hull intersected with a bounding ball) and their closest pair.

A class with Gram matrix ``K`` spans, in feature space, the affine hull
``{Phi g : sum(g) = 1}``.  Eigendecomposing the doubly centered Gram
``J K J = U diag(lam) U^T`` (``J = I - 11^T/n``) gives an orthonormal basis of
the hull directions, ``V = Phi U diag(lam)^(-1/2)``; eigenvalues below
``tau * lam_max`` are dropped.  The disk is anchored at the ball center
``a = Phi beta`` (which lies in the hull because ``sum(beta) = 1``), so every
point of the disk is ``a + V s`` with ``|s| <= R`` and has affine coefficients
``beta + U diag(lam)^(-1/2) s``.

Projection onto a disk is then exact: project onto the hull, and if the
result is outside the ball pull it radially toward the center.  The closest
pair of two disks is found by alternating these projections, carried out in
the local coordinates ``s`` and ``t`` of the two disks so that each sweep only
touches an ``r_plus x r_minus`` matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qsvdd

DEFAULT_TAU = 1e-2


class OverlapError(RuntimeError):
    """The two hyperdisks intersect (or nearly so); no separating margin exists."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ClosestPairConvergenceError(RuntimeError):
    def __init__(self, message, pair):
        super().__init__(message)
        self.pair = pair


@dataclass(frozen=True)
class Hyperdisk:
    gram: np.ndarray = field(repr=False)
    ball: qsvdd.QsvddModel = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    eigvals: np.ndarray
    tau: float

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def rank(self) -> int:
        return self.eigvals.shape[0]

    @property
    def radius(self) -> float:
        return math.sqrt(self.ball.radius_sq)

    @property
    def center(self) -> np.ndarray:
        return self.ball.beta

    @property
    def basis(self) -> np.ndarray:
        """Coefficients of the orthonormal hull directions (``n x rank``)."""
        return self.eigvecs / np.sqrt(self.eigvals)

    def local_coords(self, k_point) -> np.ndarray:
        """Hull coordinates of a point's projection, from its kernel vector against the class."""
        k_point = np.asarray(k_point, dtype=float)
        if k_point.shape[0] != self.n:
            raise ValueError(f"kernel vector has length {k_point.shape[0]}, expected {self.n}")
        return self.basis.T @ (k_point - self.gram @ self.center)

    def coefficients(self, s) -> np.ndarray:
        return self.center + self.basis @ s

    def clip(self, s) -> np.ndarray:
        norm = math.sqrt(float(s @ s))
        r = self.radius
        return s if norm <= r else s * (r / norm)


def centered_eigh(gram):
    """Ascending eigenpairs of the doubly centered Gram ``J K J``."""
    K = np.asarray(gram, dtype=float)
    row = K.mean(axis=1)
    Kc = K - row[:, None] - row[None, :] + row.mean()
    return np.linalg.eigh(0.5 * (Kc + Kc.T))


def build_hyperdisk(
    gram, B=qsvdd.DEFAULT_B, C=qsvdd.DEFAULT_C, tau=DEFAULT_TAU, qp_tol=1e-6, ball=None, eig=None
) -> Hyperdisk:
    """Hyperdisk of one class.

    ``ball`` replaces the QSVDD fit with a precomputed ball and ``eig`` reuses
    a ``centered_eigh`` result; both let callers share work across settings.
    """
    K = np.asarray(gram, dtype=float)
    if ball is None:
        ball = qsvdd.fit_qsvdd(K, B, C, tol=qp_tol)
    n = K.shape[0]
    if n == 1:
        return Hyperdisk(K, ball, np.zeros((1, 0)), np.zeros(0), tau)
    lam, U = centered_eigh(K) if eig is None else eig
    lam_max = lam[-1]
    keep = lam > max(tau * lam_max, 0.0) if lam_max > 0 else np.zeros_like(lam, dtype=bool)
    # eigenvectors of J K J with nonzero eigenvalue are orthogonal to the ones
    # vector; enforce it, since lam^(-1/2) amplifies any round-off along it
    U = U[:, keep][:, ::-1]
    U = U - U.mean(axis=0)
    U /= np.linalg.norm(U, axis=0)
    return Hyperdisk(K, ball, U, lam[keep][::-1].copy(), tau)


def project_onto_hyperdisk(disk: Hyperdisk, k_point) -> np.ndarray:
    """Affine coefficients (over the disk's class) of the projection of a point.

    The point enters through ``k_point[i] = <phi(x_i), y>`` for the class
    samples ``x_i``.
    """
    return disk.coefficients(disk.clip(disk.local_coords(k_point)))


@dataclass(frozen=True)
class ClosestPair:
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    dist_sq: float
    iterations: int
    converged: bool


def pair_dist_sq(K_plus, K_minus, K_cross, alpha_plus, alpha_minus) -> float:
    d = alpha_plus @ K_plus @ alpha_plus - 2.0 * alpha_plus @ K_cross @ alpha_minus + alpha_minus @ K_minus @ alpha_minus
    return max(float(d), 0.0)


def overlap_tol(disk_plus: Hyperdisk, disk_minus: Hyperdisk) -> float:
    return 1e-6 * (disk_plus.radius + disk_minus.radius + 1.0)


def closest_pair(
    disk_plus: Hyperdisk,
    disk_minus: Hyperdisk,
    cross_gram,
    tol=1e-12,
    max_iter=100_000,
    check_overlap=True,
    trace=None,
) -> ClosestPair:
    """Closest points of two hyperdisks by alternating projections.

    ``cross_gram`` is the ``n_plus x n_minus`` block ``k(x_i^+, x_j^-)``.
    Starts from the two ball centers and stops once a sweep lowers the
    squared distance by less than ``tol``.  ``trace``, if a list, receives
    the squared distance after every sweep.
    """
    Kpm = np.asarray(cross_gram, dtype=float)
    if Kpm.shape != (disk_plus.n, disk_minus.n):
        raise ValueError(f"cross Gram has shape {Kpm.shape}, expected ({disk_plus.n}, {disk_minus.n})")
    Kp, Km = disk_plus.gram, disk_minus.gram
    bp, bm = disk_plus.center, disk_minus.center
    Wp, Wm = disk_plus.basis, disk_minus.basis

    M = Wp.T @ Kpm @ Wm
    Kpm_bm = Kpm @ bm
    Kmp_bp = Kpm.T @ bp
    # hull coordinates of (center_plus - center_minus) in each disk
    h_plus = Wp.T @ (Kp @ bp - Kpm_bm)
    h_minus = Wm.T @ (Kmp_bp - Km @ bm)
    delta_sq = bp @ Kp @ bp - 2.0 * bp @ Kpm_bm + bm @ Km @ bm

    Mt = np.ascontiguousarray(M.T)
    r_plus, r_minus = disk_plus.radius, disk_minus.radius

    def clip(v, r):
        norm = math.sqrt(v @ v)
        return v if norm <= r else v * (r / norm)

    s = np.zeros(disk_plus.rank)
    t = np.zeros(disk_minus.rank)
    prev = delta_sq
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        t = clip(h_minus + Mt @ s, r_minus)
        v = M @ t
        s = clip(v - h_plus, r_plus)
        # squared distance between a+ + V+ s and a- + V- t
        cur = delta_sq + 2.0 * (s @ h_plus - t @ h_minus) + s @ s + t @ t - 2.0 * (s @ v)
        if trace is not None:
            trace.append(cur)
        if prev - cur < tol:
            converged = True
            break
        prev = cur

    ap = disk_plus.coefficients(s)
    am = disk_minus.coefficients(t)
    pair = ClosestPair(ap, am, pair_dist_sq(Kp, Km, Kpm, ap, am), it, converged)
    if not converged:
        raise ClosestPairConvergenceError(
            f"alternating projections did not settle in {max_iter} sweeps", pair
        )
    if check_overlap and pair.dist_sq < overlap_tol(disk_plus, disk_minus):
        raise OverlapError(
            f"hyperdisks overlap (squared distance {pair.dist_sq:.3g}); "
            "lower C below 1 to shrink the balls, or change the kernel",
            pair,
        )
    return pair


def hyperdisk_overlap(disk_plus: Hyperdisk, disk_minus: Hyperdisk, cross_gram, **kw) -> bool:
    pair = closest_pair(disk_plus, disk_minus, cross_gram, check_overlap=False, **kw)
    return pair.dist_sq < overlap_tol(disk_plus, disk_minus)
