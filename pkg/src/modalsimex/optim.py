"""Numerical optimizers shared by all estimators.

Two workhorses:

* :func:`nelder_mead` -- derivative-free simplex search, used by the L1
  (median) estimator and available for any scalar objective.
* :func:`weighted_gauss_newton` -- Levenberg-damped Gauss-Newton for
  (weighted) nonlinear least squares on a regression model, used by the
  mean, Huber and modal-EM estimators.

Both are deterministic given identical inputs and options.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import RegressionModel, eval_and_grad

# Termination reasons.
GRADIENT_SMALL = "gradient_small"
STEP_SMALL = "step_small"
MAX_ITER = "max_iter"
DEGENERATE = "degenerate"

_CONVERGED = (GRADIENT_SMALL, STEP_SMALL)

# Levenberg damping schedule: start small, x10 on a rejected step, /10 on
# an accepted one; a hard cap bounds work on hopeless directions.
_MU0 = 1e-3
_MU_MAX = 1e8
_MU_MIN = 1e-12


@dataclass
class OptimResult:
    """Outcome of a single optimization run."""

    theta_hat: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    termination: str
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    flags: tuple[str, ...] = ()


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    theta0,
    *,
    step_tol: float = 1e-10,
    max_iter: int = 2000,
) -> OptimResult:
    """Minimize a scalar objective with the Nelder-Mead simplex method.

    The initial simplex is theta0 plus per-coordinate steps
    max(0.1, 0.1 * |theta0_i|), which keeps the simplex non-degenerate at
    theta0 = 0 and scale-aware elsewhere.  Terminates when the simplex
    diameter drops below ``step_tol`` or after ``max_iter`` iterations.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    q = theta0.shape[0]
    f0 = float(objective(theta0))
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    verts = np.tile(theta0, (q + 1, 1))
    for i in range(q):
        verts[i + 1, i] += max(0.1, 0.1 * abs(theta0[i]))
    vals = np.array([f0] + [float(objective(v)) for v in verts[1:]])
    vals = np.where(np.isfinite(vals), vals, np.inf)

    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    best_trace = []
    iterations = 0
    termination = MAX_ITER

    for iterations in range(1, max_iter + 1):
        order = np.argsort(vals, kind="stable")
        verts, vals = verts[order], vals[order]
        best_trace.append(vals[0])

        diameter = np.max(np.abs(verts[1:] - verts[0]))
        if diameter < step_tol:
            termination = STEP_SMALL
            break

        centroid = verts[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - verts[-1])
        fr = float(objective(xr))
        if not np.isfinite(fr):
            fr = np.inf

        if vals[0] <= fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[0]:
            xe = centroid + gamma * (centroid - verts[-1])
            fe = float(objective(xe))
            if not np.isfinite(fe):
                fe = np.inf
            if fe < fr:
                verts[-1], vals[-1] = xe, fe
            else:
                verts[-1], vals[-1] = xr, fr
            continue
        # Contraction (outside if the reflected point improved on the worst).
        if fr < vals[-1]:
            xc = centroid + rho * (xr - centroid)
        else:
            xc = centroid + rho * (verts[-1] - centroid)
        fc = float(objective(xc))
        if not np.isfinite(fc):
            fc = np.inf
        if fc < min(fr, vals[-1]):
            verts[-1], vals[-1] = xc, fc
            continue
        # Shrink toward the best vertex.
        for i in range(1, q + 1):
            verts[i] = verts[0] + sigma * (verts[i] - verts[0])
            fi = float(objective(verts[i]))
            vals[i] = fi if np.isfinite(fi) else np.inf

    order = np.argsort(vals, kind="stable")
    verts, vals = verts[order], vals[order]
    converged = termination in _CONVERGED
    return OptimResult(
        theta_hat=verts[0].copy(),
        objective_value=float(vals[0]),
        iterations=iterations,
        converged=converged,
        termination=termination,
        objective_trace=np.asarray(best_trace),
    )


def damped_least_squares(
    res_jac: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    theta0,
    *,
    grad_tol: float = 1e-9,
    step_tol: float = 1e-10,
    max_iter: int = 500,
) -> OptimResult:
    """Minimize ||r(theta)||^2 by Levenberg-damped Gauss-Newton.

    ``res_jac(theta)`` must return ``(r, J)`` with residuals written as
    data minus fit, and ``J`` the Jacobian of the fit (so dr/dtheta = -J).
    Accepted iterates never increase the sum of squares.
    """
    theta = np.asarray(theta0, dtype=float).reshape(-1).copy()
    q = theta.shape[0]

    r, jac = res_jac(theta)
    sse = float(r @ r)
    if not np.isfinite(sse):
        raise ValueError("residuals are not finite at the starting point")

    trace = [sse]
    mu = _MU0
    iterations = 0
    termination = MAX_ITER

    for iterations in range(1, max_iter + 1):
        g = jac.T @ r
        if np.max(np.abs(2.0 * g)) < grad_tol:
            termination = GRADIENT_SMALL
            iterations -= 1
            break
        a = jac.T @ jac

        accepted = False
        tiny_reject = False
        while True:
            try:
                delta = np.linalg.solve(a + mu * np.eye(q), g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                theta_new = theta + delta
                # Wild trial steps can overflow the residuals; an inf sum of
                # squares is simply a rejected step.
                with np.errstate(over="ignore", invalid="ignore"):
                    r_new, jac_new = res_jac(theta_new)
                    sse_new = float(r_new @ r_new)
                if np.isfinite(sse_new) and sse_new <= sse:
                    accepted = True
                    break
                # A rejected step already below the step tolerance means the
                # iterate sits at the numerical floor: that is convergence,
                # not degeneracy.
                if np.linalg.norm(delta) <= step_tol * (np.linalg.norm(theta) + step_tol):
                    tiny_reject = True
                    break
            mu *= 10.0
            if mu > _MU_MAX:
                break
        if tiny_reject:
            termination = STEP_SMALL
            iterations -= 1
            break
        if not accepted:
            termination = DEGENERATE
            break

        theta, r, jac, sse = theta_new, r_new, jac_new, sse_new
        trace.append(sse)
        mu = max(mu / 10.0, _MU_MIN)
        if np.linalg.norm(delta) <= step_tol * (np.linalg.norm(theta) + step_tol):
            termination = STEP_SMALL
            break

    converged = termination in _CONVERGED
    return OptimResult(
        theta_hat=theta,
        objective_value=sse,
        iterations=iterations,
        converged=converged,
        termination=termination,
        objective_trace=np.asarray(trace),
    )


def weighted_gauss_newton(
    model: RegressionModel,
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    theta0,
    *,
    grad_tol: float = 1e-9,
    step_tol: float = 1e-10,
    max_iter: int = 500,
) -> OptimResult:
    """Minimize sum_i w_i (y_i - m(x_i, theta))^2.

    Uses the model's analytic gradient.  An effective sample size
    (sum w)^2 / sum w^2 below dim(theta) leaves the problem underdetermined;
    the run still returns its best iterate but is marked degenerate with an
    ``n_eff_below_q`` flag.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != y.shape:
        raise ValueError("weights and y must have the same length")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    wsum = float(w.sum())
    if not wsum > 0:
        raise ValueError("weights must not all be zero")

    sw = np.sqrt(w)
    n_eff = wsum**2 / float(w @ w)

    def res_jac(theta):
        m, jac = eval_and_grad(model, x, theta)
        return sw * (y - m), sw[:, None] * jac

    result = damped_least_squares(
        res_jac, theta0, grad_tol=grad_tol, step_tol=step_tol, max_iter=max_iter
    )
    if n_eff < model.dim_theta:
        result.flags = result.flags + ("n_eff_below_q",)
        result.converged = False
        result.termination = DEGENERATE
    return result
