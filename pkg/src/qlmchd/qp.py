"""Pairwise coordinate descent (SMO) for QPs over the capped simplex.

Solves::

    min  0.5 a^T Q a + p^T a
    s.t. sum(a) = 1,  0 <= a_i <= C

with the maximal-violating-pair working set.  Each step moves mass from the
coordinate with the largest gradient (among those that can decrease) to the
one with the smallest gradient (among those that can increase), with an
exact line search clipped to the box.  Ties resolve to the lowest index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class QpError(ValueError):
    pass


class QpInfeasibleError(QpError):
    pass


class QpConvergenceError(QpError):
    """Iteration cap hit before the KKT gap closed; carries the best iterate."""

    def __init__(self, message, alpha, residual, iterations):
        super().__init__(message)
        self.alpha = alpha
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SimplexBoxQp:
    Q: np.ndarray
    p: np.ndarray
    C: float = math.inf
    tol: float = 1e-6
    max_iter: int | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        p = np.asarray(self.p, dtype=float).ravel()
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "p", p)
        n = p.shape[0]
        if n < 1:
            raise QpError("empty problem")
        if Q.shape != (n, n):
            raise QpError(f"Q has shape {Q.shape}, expected ({n}, {n})")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-10):
            raise QpError("Q is not symmetric")
        if not self.C > 0:
            raise QpError(f"C must be positive, got {self.C}")
        if n * self.C < 1.0 - 1e-12:
            raise QpInfeasibleError(f"infeasible: n*C = {n * self.C:g} < 1")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def objective(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(0.5 * alpha @ self.Q @ alpha + self.p @ alpha)

    def gradient(self, alpha) -> np.ndarray:
        return self.Q @ alpha + self.p


@dataclass(frozen=True)
class QpSolution:
    alpha: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


def _violation(alpha, grad, C):
    can_up = alpha < C
    can_down = alpha > 0
    if not can_up.any() or not can_down.any():
        return 0.0, -1, -1
    up = np.where(can_up, grad, np.inf)
    down = np.where(can_down, grad, -np.inf)
    i = int(np.argmin(up))
    j = int(np.argmax(down))
    return max(0.0, float(down[j] - up[i])), i, j


def kkt_residual(problem: SimplexBoxQp, alpha) -> float:
    """Largest first-order gap ``max_{a_j > 0} g_j - min_{a_i < C} g_i`` (clamped at 0)."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != problem.n:
        raise QpError(f"alpha has length {alpha.shape[0]}, expected {problem.n}")
    return _violation(alpha, problem.gradient(alpha), problem.C)[0]


def solve(problem: SimplexBoxQp, alpha0=None, trace=None) -> QpSolution:
    """Run SMO to ``problem.tol``.

    ``trace``, if a list, receives the objective after every step.
    """
    n, Q, C = problem.n, problem.Q, problem.C
    max_iter = problem.max_iter if problem.max_iter is not None else 100_000 * n
    if alpha0 is None:
        alpha = np.full(n, 1.0 / n)
    else:
        alpha = np.array(alpha0, dtype=float)
    grad = problem.gradient(alpha)
    diag = np.diag(Q)

    for it in range(max_iter + 1):
        gap, i, j = _violation(alpha, grad, C)
        if gap <= problem.tol:
            # the incremental gradient drifts; confirm against a fresh one
            grad = problem.gradient(alpha)
            gap, i, j = _violation(alpha, grad, C)
            if gap <= problem.tol:
                return QpSolution(alpha, problem.objective(alpha), gap, it)
        if it == max_iter:
            break
        # move t units of mass from j to i
        curvature = diag[i] + diag[j] - 2.0 * Q[i, j]
        step = gap / curvature if curvature > 1e-15 else math.inf
        room = C - alpha[i]
        step = min(step, room, alpha[j])
        alpha[i] = C if step == room else alpha[i] + step
        alpha[j] = 0.0 if step == alpha[j] else alpha[j] - step
        grad += step * (Q[:, i] - Q[:, j])
        if trace is not None:
            trace.append(problem.objective(alpha))

    raise QpConvergenceError(
        f"SMO did not reach tol={problem.tol:g} in {max_iter} iterations (gap {gap:.3g})",
        alpha,
        gap,
        max_iter,
    )
