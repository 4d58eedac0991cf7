"""Per-dataset estimators: modal EM, mean LSE, Huber M-estimation, L1 median.

Every estimator maps a dataset (y, x-like matrix) to a parameter estimate
and is reused unchanged by both the naive and the SIMEX pipelines (the
pipeline only swaps which matrix plays the role of x).

All fits internally sort the rows into a canonical order before touching
the data, so results are exactly invariant to row permutation of the
input (floating-point summation order never differs between permutations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import Bandwidth, phi
from .model import RegressionModel, evaluate
from .optim import DEGENERATE, OptimResult, nelder_mead, weighted_gauss_newton

ESTIMATORS = ("modal", "lse", "huber", "median")

# 95%-efficiency constant for the Huber rho under normal errors.
HUBER_C_FACTOR = 1.345
# MAD-to-sigma conversion for normal data.
MAD_TO_SIGMA = 0.6745


@dataclass
class Dataset:
    """Observations (y_i, x_i); x holds true covariates, surrogates, or
    SIMEX pseudo-data depending on the pipeline."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != self.y.shape[0]:
            raise ValueError("x must be an (n, p) matrix aligned with y")
        if self.y.shape[0] == 0:
            raise ValueError("dataset must not be empty")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(x))):
            raise ValueError("dataset entries must all be finite")
        self.x = x

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class EmDiagnostics:
    """Per-run EM bookkeeping; objective_trace is non-decreasing (EM ascent)."""

    iterations: int
    converged: bool
    objective_trace: np.ndarray
    final_objective: float
    flags: tuple[str, ...] = ()


def _sorted_copy(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Rows in canonical (y, x) lexicographic order.

    Fit results then never depend on the order rows arrived in, down to
    the last bit.
    """
    keys = tuple(dataset.x[:, j] for j in range(dataset.p - 1, -1, -1)) + (dataset.y,)
    idx = np.lexsort(keys)
    return dataset.y[idx], dataset.x[idx]


def _check_model(model: RegressionModel, dataset: Dataset) -> None:
    if dataset.p != model.dim_x:
        raise ValueError(f"dataset has p={dataset.p} covariates, model expects {model.dim_x}")


def _initial_theta(model: RegressionModel, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cheap deterministic starting point for least-squares fits."""
    if model.kind == "linear":
        return np.zeros(model.dim_theta)
    # Exponential: log-linear regression on the positive responses.
    x1 = x[:, 0]
    mask = y > 0
    if mask.sum() >= 2 and np.ptp(x1[mask]) > 0:
        design = np.column_stack([np.ones(int(mask.sum())), x1[mask]])
        coef, *_ = np.linalg.lstsq(design, np.log(y[mask]), rcond=None)
        beta = float(np.clip(coef[1], -20.0, 20.0))
        alpha = float(np.exp(np.clip(coef[0], -20.0, 20.0)))
        return np.array([alpha, beta])
    scale = float(np.mean(np.abs(y)))
    return np.array([scale if scale > 0 else 1e-6, 0.0])


def _bandwidth_value(h) -> float:
    h = h.h if isinstance(h, Bandwidth) else float(h)
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    return h


def estep_weights(model: RegressionModel, dataset: Dataset, theta, h) -> np.ndarray:
    """Kernel weights pi(j | theta), normalized to sum to one.

    Computed through log-space normalization so small bandwidths cannot
    underflow the ratio.
    """
    h = _bandwidth_value(h)
    _check_model(model, dataset)
    r = dataset.y - evaluate(model, dataset.x, theta)
    logw = -0.5 * (r / h) ** 2  # shared phi_h constants cancel in the ratio
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def modal_objective(model: RegressionModel, dataset: Dataset, theta, h) -> float:
    """Kernel density of the residuals at zero: (nh)^-1 sum phi(r_i / h)."""
    h = _bandwidth_value(h)
    _check_model(model, dataset)
    r = dataset.y - evaluate(model, dataset.x, theta)
    return float(np.mean(phi(r / h)) / h)


def _modal_objective_sorted(model, x, y, theta, h) -> float:
    r = y - evaluate(model, x, theta)
    return float(np.mean(phi(r / h)) / h)


# Bandwidth ladder for the default EM start.  At the study bandwidths the
# kernel objective is multimodal and the plain LSE start can sit in the
# basin of a spurious mode; running the EM coarse-to-fine first keeps the
# final, full-resolution EM in the dominant basin.  Deterministic.
_ANNEAL_LADDER = (8.0, 4.0, 2.0)


def modal_em(
    model: RegressionModel,
    dataset: Dataset,
    h,
    theta0=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> tuple[np.ndarray, EmDiagnostics]:
    """Maximize the modal objective by EM.

    E-step: kernel weights at the current theta.  M-step: weighted least
    squares in theta (equivalent to maximizing the weighted kernel
    log-density), solved by damped Gauss-Newton warm-started at the
    current theta so each accepted step keeps the EM ascent property.
    Stops when the parameter change drops below ``tol`` in max-norm.

    Returns the final theta and diagnostics.  With no explicit ``theta0``
    the start is derived from the plain LSE fit by annealing: the EM is
    run at 8h, 4h and 2h in turn, each warm-starting the next, before the
    reported run at h.  An explicit ``theta0`` skips the annealing.
    """
    h = _bandwidth_value(h)
    _check_model(model, dataset)
    y, x = _sorted_copy(dataset)
    q = model.dim_theta

    annealed = False
    if theta0 is None:
        theta = lse_fit(model, dataset).theta_hat.copy()
        for mult in _ANNEAL_LADDER:
            theta, _ = modal_em(model, dataset, mult * h, theta0=theta,
                                tol=tol, max_iter=max_iter)
        annealed = True
    else:
        theta = np.asarray(theta0, dtype=float).reshape(-1).copy()
        if theta.shape[0] != q:
            raise ValueError(f"theta0 has length {theta.shape[0]}, expected {q}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta0 must be finite")

    trace = [_modal_objective_sorted(model, x, y, theta, h)]
    flags: tuple[str, ...] = ("annealed_start",) if annealed else ()
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        r = y - evaluate(model, x, theta)
        logw = -0.5 * (r / h) ** 2
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()

        guard = False
        ess = 1.0 / float(w @ w)  # weights sum to one
        if ess < q:
            # Nearly all weight sits on fewer points than parameters; fit
            # this step on the top-2q points with uniform weights.
            guard = True
            flags = flags if "ess_guard" in flags else flags + ("ess_guard",)
            k = min(y.shape[0], int(np.ceil(2 * q)))
            top = np.argsort(w, kind="stable")[-k:]
            w = np.zeros_like(w)
            w[top] = 1.0 / k

        step = weighted_gauss_newton(model, x, y, w, theta)
        if step.termination == DEGENERATE:
            converged = False
            flags = flags + ("m_step_degenerate",)
            break
        theta_new = step.theta_hat
        q_new = _modal_objective_sorted(model, x, y, theta_new, h)
        if guard and q_new < trace[-1] - 1e-12:
            # The guard step broke ascent; keep the last good iterate.
            flags = flags + ("guard_step_reverted",)
            break
        if not guard and q_new >= trace[-1]:
            # Step expansion: EM crawls along ridges, so probe lengthened
            # jumps in the same direction and keep one only when the
            # objective verifiably keeps ascending.
            direction = theta_new - theta
            for mult in (4.0, 2.0):
                cand = theta + mult * direction
                q_cand = _modal_objective_sorted(model, x, y, cand, h)
                if np.isfinite(q_cand) and q_cand >= q_new:
                    theta_new, q_new = cand, q_cand
                    break
        delta = np.max(np.abs(theta_new - theta))
        theta = theta_new
        trace.append(q_new)
        if delta < tol:
            converged = True
            break

    diagnostics = EmDiagnostics(
        iterations=iterations,
        converged=converged,
        objective_trace=np.asarray(trace),
        final_objective=trace[-1],
        flags=flags,
    )
    return theta, diagnostics


def lse_fit(model: RegressionModel, dataset: Dataset, theta0=None, **opts) -> OptimResult:
    """Plain least squares: unit-weight special case of the weighted solver."""
    _check_model(model, dataset)
    y, x = _sorted_copy(dataset)
    if theta0 is None:
        theta0 = _initial_theta(model, y, x)
    return weighted_gauss_newton(model, x, y, np.ones(y.shape[0]), theta0, **opts)


def huber_rho(r, c: float):
    """Huber loss: quadratic inside |r| <= c, linear outside."""
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    if np.isinf(c):
        out = 0.5 * r * r
    else:
        out = np.where(a <= c, 0.5 * r * r, c * a - 0.5 * c * c)
    return float(out) if out.ndim == 0 else out


def huber_scale(r) -> float:
    """Robust residual scale MAD / 0.6745 (the usual normal-consistent plug-in)."""
    r = np.asarray(r, dtype=float)
    return float(np.median(np.abs(r - np.median(r)))) / MAD_TO_SIGMA


def huber_fit(
    model: RegressionModel,
    dataset: Dataset,
    theta0=None,
    *,
    c_override: float | None = None,
    tol: float = 1e-8,
    max_outer: int = 100,
) -> OptimResult:
    """Huber M-estimation by iteratively reweighted Gauss-Newton.

    The cutoff is c = 1.345 * sigma_hat with sigma_hat re-estimated from
    the current residuals via MAD each outer iteration (pass ``c_override``
    to pin the cutoff instead).  If the MAD ever degenerates to zero the
    plain LSE fit is returned, flagged ``mad_zero_fallback``.
    """
    _check_model(model, dataset)
    if dataset.n <= model.dim_theta:
        raise ValueError("huber_fit needs n > dim(theta)")
    y, x = _sorted_copy(dataset)
    if theta0 is None:
        theta = lse_fit(model, dataset).theta_hat.copy()
    else:
        theta = np.asarray(theta0, dtype=float).reshape(-1).copy()

    ones = np.ones(y.shape[0])
    termination = "max_iter"
    converged = False
    last: OptimResult | None = None

    for outer in range(1, max_outer + 1):
        r = y - evaluate(model, x, theta)
        if c_override is None:
            sigma = huber_scale(r)
            if sigma == 0.0:
                fallback = lse_fit(model, dataset)
                fallback.flags = fallback.flags + ("mad_zero_fallback",)
                return fallback
            c = HUBER_C_FACTOR * sigma
        else:
            c = float(c_override)
        a = np.abs(r)
        w = np.where(a <= c, ones, c / np.maximum(a, 1e-300))

        last = weighted_gauss_newton(model, x, y, w, theta)
        theta_new = last.theta_hat
        delta = np.max(np.abs(theta_new - theta))
        theta = theta_new
        if delta < tol:
            converged = True
            termination = "step_small"
            break

    r = y - evaluate(model, x, theta)
    if c_override is None:
        sigma = huber_scale(r)
        c = HUBER_C_FACTOR * sigma if sigma > 0 else np.inf
    else:
        c = float(c_override)
    return OptimResult(
        theta_hat=theta,
        objective_value=float(np.sum(huber_rho(r, c))),
        iterations=outer,
        converged=converged and (last is None or last.termination != DEGENERATE),
        termination=termination if last is None or last.termination != DEGENERATE else DEGENERATE,
        flags=() if last is None else last.flags,
    )


def median_fit(model: RegressionModel, dataset: Dataset, theta0=None, **opts) -> OptimResult:
    """L1 regression: minimize sum |y_i - m(x_i, theta)| by simplex search."""
    _check_model(model, dataset)
    if dataset.n <= model.dim_theta:
        raise ValueError("median_fit needs n > dim(theta)")
    y, x = _sorted_copy(dataset)
    if theta0 is None:
        theta0 = lse_fit(model, dataset).theta_hat

    def objective(theta):
        return float(np.sum(np.abs(y - evaluate(model, x, theta))))

    return nelder_mead(objective, theta0, **opts)


def fit_estimator(
    name: str,
    model: RegressionModel,
    dataset: Dataset,
    theta0=None,
    h=None,
) -> tuple[np.ndarray, bool, int]:
    """Uniform front door for the four estimators.

    Returns (theta_hat, converged, iterations); ``h`` is required for and
    only used by the modal estimator.
    """
    if name == "modal":
        if h is None:
            raise ValueError("the modal estimator requires a bandwidth h")
        theta, diag = modal_em(model, dataset, h, theta0)
        return theta, diag.converged, diag.iterations
    if name == "lse":
        res = lse_fit(model, dataset, theta0)
    elif name == "huber":
        res = huber_fit(model, dataset, theta0)
    elif name == "median":
        res = median_fit(model, dataset, theta0)
    else:
        raise ValueError(f"unknown estimator {name!r}; expected one of {ESTIMATORS}")
    return res.theta_hat, res.converged, res.iterations
