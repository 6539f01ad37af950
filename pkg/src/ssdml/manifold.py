"""First-order Riemannian optimization on the Stiefel manifold.

Minimizes a smooth objective over matrices with orthonormal columns using
Polak-Ribiere conjugate directions built from tangent-projected gradients,
a QR retraction, and Armijo backtracking.  A plain (unconstrained) descent
mode with the same line search supports the no-orthogonality ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

GRAD_TOL = 1e-9
ARMIJO_C = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 30
ORTH_TOL = 1e-8


def orthonormality_error(L: np.ndarray) -> float:
    """Frobenius norm of L^T L - I."""
    l = L.shape[1]
    return float(np.linalg.norm(L.T @ L - np.eye(l)))


def random_stiefel(d: int, l: int, rng) -> np.ndarray:
    """Random point with orthonormal columns (QR of a Gaussian matrix)."""
    Q, R = np.linalg.qr(rng.standard_normal((d, l)))
    return Q * np.sign(np.diag(R))


def tangent_project(L: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Project a Euclidean gradient onto the tangent space at L.

    xi = G - L sym(L^T G); the result satisfies L^T xi + xi^T L = 0.
    """
    LtG = L.T @ G
    return G - L @ ((LtG + LtG.T) / 2.0)


def retract_qr(L: np.ndarray, xi: np.ndarray, step: float) -> np.ndarray:
    """Thin-QR retraction of the step L - step*xi back onto the manifold.

    The Q factor is sign-fixed so diag(R) > 0, which makes the retraction
    continuous in its inputs (and the zero step an exact no-op).
    """
    if step <= 0:
        raise ConfigError("retraction step must be positive")
    if not np.any(xi):
        return L.copy()
    Y = L - step * xi
    Q, R = np.linalg.qr(Y)
    diag = np.diag(R)
    if np.any(np.abs(diag) < 1e-12 * max(1.0, np.abs(diag).max())):
        raise NumericalError("rank-deficient retraction; retry with a smaller step")
    return Q * np.sign(diag)


@dataclass
class OptimizeResult:
    """Outcome of one optimize_L call.

    `objectives` lists the initial value followed by every accepted step's
    value; `step` is the last accepted step size (useful as the next call's
    step0 when optimizing batch after batch).
    """

    L: np.ndarray
    step: float
    stalled: bool = False
    n_iter: int = 0
    grad_norm: float = np.inf
    objectives: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objectives[-1]


def optimize_L(L0, fun_and_grad, max_iter: int = 10, step0: float = 1.0,
               use_cg: bool = True, orthonormal: bool = True,
               grad_tol: float = GRAD_TOL, max_step: float = np.inf,
               callback=None) -> OptimizeResult:
    """Descend `fun_and_grad` from L0 for at most max_iter accepted steps.

    fun_and_grad(L) must return (objective, euclidean gradient).  In
    orthonormal mode gradients are tangent-projected, steps retracted by
    QR, and the previous conjugate direction is transported by
    re-projection at the new point.  In the ablation mode (orthonormal
    False) this is plain gradient descent with the same Armijo search.
    Accepted objective values never increase; a failed line search (30
    halvings) returns the current iterate flagged as stalled.  `max_step`
    caps every line-search trial, which keeps successive mini-batch calls
    from leaping to each batch's private optimum.
    """
    L = np.array(L0, dtype=np.float64)
    if orthonormal and orthonormality_error(L) > ORTH_TOL:
        raise ConfigError("L0 must have orthonormal columns")

    J, G = fun_and_grad(L)
    g = tangent_project(L, G) if orthonormal else G
    gn2 = float(np.vdot(g, g))
    direction = g
    result = OptimizeResult(L=L, step=min(step0, max_step), objectives=[float(J)])

    for _ in range(max_iter):
        result.grad_norm = np.sqrt(gn2)
        if result.grad_norm < grad_tol:
            break
        slope = float(np.vdot(g, direction))
        if slope <= 0:  # conjugate direction lost descent; restart on gradient
            direction = g
            slope = gn2

        step = result.step
        accepted = False
        first_try = True
        for _ in range(MAX_BACKTRACKS):
            try:
                if orthonormal:
                    L_new = retract_qr(L, direction, step)
                else:
                    L_new = L - step * direction
                J_new, G_new = fun_and_grad(L_new)
            except NumericalError:
                step *= BACKTRACK_FACTOR
                first_try = False
                continue
            if np.isfinite(J_new) and J_new <= J - ARMIJO_C * step * slope:
                accepted = True
                break
            step *= BACKTRACK_FACTOR
            first_try = False
        if not accepted:
            result.stalled = True
            break

        g_new = tangent_project(L_new, G_new) if orthonormal else G_new
        gn2_new = float(np.vdot(g_new, g_new))
        if use_cg and orthonormal:
            g_prev = tangent_project(L_new, g)
            beta = max(0.0, float(np.vdot(g_new, g_new - g_prev)) / gn2) if gn2 > 0 else 0.0
            direction = g_new + beta * tangent_project(L_new, direction)
        else:
            direction = g_new

        L, J, g, gn2 = L_new, float(J_new), g_new, gn2_new
        result.L = L
        result.step = min(step * 2.0 if first_try else step, max_step)
        result.n_iter += 1
        result.objectives.append(J)
        if callback is not None:
            callback(L, J)

    result.grad_norm = np.sqrt(gn2)
    return result
