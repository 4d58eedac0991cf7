"""SIMEX engine: pseudo-data simulation, per-lambda estimation, extrapolation.

The measurement error in w is deliberately inflated along a grid of
lambda values (total error (1 + lambda) * cov_u), the chosen estimator is
rerun on each of ``n_pseudo`` remeasured datasets per lambda, the per-lambda
averages trace out a trend, and a parametric curve fitted to that trend is
evaluated at lambda = -1 (zero measurement error) to produce the corrected
estimate.

All pseudo-error draws come from streams keyed by
(seed, replication, lambda_index, b), so the engine is bit-deterministic
under any execution order or thread count.  At lambda = 0 no noise is
added and the stream's draws are skipped; with per-(lambda, b) keys the
skip cannot shift any other stream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .estimators import Dataset, ESTIMATORS, fit_estimator, lse_fit, modal_em
from .model import RegressionModel
from .optim import damped_least_squares

EXTRAPOLANTS = {"linear": 2, "quadratic": 3, "rational": 3}

# Share of dropped (non-converged) fits at a single lambda above which the
# trace carries a quality warning.
DROP_WARN_FRACTION = 0.2

# The rational curve a + c / (d + lambda) has its pole at lambda = -d;
# fits with d within this distance of 1 cannot be evaluated at -1.
POLE_GUARD = 1e-6


class PoleError(RuntimeError):
    """Rational extrapolant pole too close to lambda = -1."""


class ExtrapolationError(RuntimeError):
    """Extrapolant fitting failed; carries the lambda-trace for inspection."""

    def __init__(self, message: str, trace: "LambdaTrace | None" = None):
        super().__init__(message)
        self.trace = trace


def default_lambda_grid(points: int = 10, lambda_max: float = 2.0) -> np.ndarray:
    """Equally spaced grid on [0, lambda_max] starting at 0."""
    return np.linspace(0.0, float(lambda_max), int(points))


def _as_cov(sigma_u, p: int) -> np.ndarray:
    """Normalize a scalar variance (p = 1) or covariance matrix to (p, p)."""
    arr = np.asarray(sigma_u, dtype=float)
    if arr.ndim == 0:
        if p != 1:
            raise ValueError("scalar sigma_u is only valid for p = 1")
        cov = arr.reshape(1, 1)
    else:
        cov = np.atleast_2d(arr)
    if cov.shape != (p, p):
        raise ValueError(f"measurement-error covariance must be {p}x{p}, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("measurement-error covariance must be symmetric")
    return cov


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("measurement-error covariance must be positive definite") from exc


@dataclass(frozen=True)
class SimexConfig:
    """Settings for one SIMEX run.

    ``sigma_u`` is the known measurement-error covariance; a scalar is
    read as the variance for p = 1.
    """

    sigma_u: float | np.ndarray
    lambda_grid: np.ndarray = field(default_factory=default_lambda_grid)
    n_pseudo: int = 50
    extrapolant: str = "quadratic"
    seed: int = 0
    dim_x: int = 1

    def __post_init__(self) -> None:
        grid = np.asarray(self.lambda_grid, dtype=float).reshape(-1)
        if grid.size < 1:
            raise ValueError("lambda grid must not be empty")
        if np.any(grid < 0):
            raise ValueError("lambda values must be nonnegative")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("lambda grid must be strictly increasing")
        if self.extrapolant not in EXTRAPOLANTS:
            raise ValueError(
                f"unknown extrapolant {self.extrapolant!r}; expected one of {tuple(EXTRAPOLANTS)}"
            )
        if grid.size < EXTRAPOLANTS[self.extrapolant]:
            raise ValueError(
                f"lambda grid has {grid.size} points but the {self.extrapolant} "
                f"extrapolant needs at least {EXTRAPOLANTS[self.extrapolant]}"
            )
        if self.n_pseudo < 1:
            raise ValueError("n_pseudo must be a positive integer")
        cov = _as_cov(self.sigma_u, self.dim_x)
        chol = _cholesky(cov)
        object.__setattr__(self, "lambda_grid", grid)
        object.__setattr__(self, "_cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def cov_u(self) -> np.ndarray:
        return self._cov

    @property
    def chol_u(self) -> np.ndarray:
        return self._chol


@dataclass
class LambdaTrace:
    """Averaged per-lambda estimates plus per-(lambda, b) diagnostics."""

    lambda_grid: np.ndarray
    theta_by_lambda: np.ndarray  # (M, q), mean of converged per-b fits
    per_b_theta: np.ndarray  # (M, B, q)
    per_b_converged: np.ndarray  # (M, B) bool
    per_b_iterations: np.ndarray  # (M, B) int
    dropped_count: np.ndarray  # (M,) int
    quality_warning: bool


@dataclass
class ExtrapolationFit:
    """Componentwise extrapolant fit and its value at lambda = -1."""

    family: str
    gamma_hat: np.ndarray  # (q, d) curve parameters, one row per theta component
    residual_sse: float
    theta_simex: np.ndarray


def simulate_pseudo(w: np.ndarray, lam: float, sigma_u, rand: np.random.Generator,
                    *, chol: np.ndarray | None = None) -> np.ndarray:
    """Remeasured covariates w + sqrt(lam) * V with V rows i.i.d. N(0, sigma_u).

    The caller keys ``rand`` by (seed, replication, lambda_index, b); see the
    module docstring.  lam = 0 returns w verbatim without consuming draws.
    """
    lam = float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    w = np.asarray(w, dtype=float)
    w2d = w.reshape(-1, 1) if w.ndim == 1 else w
    if lam == 0.0:
        return w.copy()
    if chol is None:
        chol = _cholesky(_as_cov(sigma_u, w2d.shape[1]))
    v = rand.standard_normal(w2d.shape) @ chol.T
    out = w2d + np.sqrt(lam) * v
    return out.reshape(w.shape)


def evaluate_extrapolant(family: str, gamma, lam: float) -> float:
    """Value of the fitted trend curve at a single lambda."""
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if family not in EXTRAPOLANTS:
        raise ValueError(f"unknown extrapolant family {family!r}")
    if gamma.shape[0] != EXTRAPOLANTS[family]:
        raise ValueError(f"{family} extrapolant takes {EXTRAPOLANTS[family]} parameters")
    lam = float(lam)
    if family == "linear":
        return float(gamma[0] + gamma[1] * lam)
    if family == "quadratic":
        return float(gamma[0] + gamma[1] * lam + gamma[2] * lam * lam)
    a, c, d = gamma
    if abs(d + lam) <= 1e-9:
        raise PoleError(f"rational extrapolant has a pole at lambda = {-d!r}")
    return float(a + c / (d + lam))


def _rational_three_point_start(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Exact a + c/(d + lambda) through three spread grid points, or a bland
    fallback when that solve is singular."""
    fallback = np.array([float(np.mean(values)), 1.0, 1.5])
    l1, lm, l3 = grid[0], grid[len(grid) // 2], grid[-1]
    v1, vm, v3 = values[0], values[len(grid) // 2], values[-1]
    dv_a, dv_b = v1 - vm, vm - v3
    if dv_b == 0.0 or lm == l1 or l3 == lm:
        return fallback
    ratio = dv_a / dv_b
    denom = ratio * (l3 - lm) - (lm - l1)
    if abs(denom) < 1e-12:
        return fallback
    d = ((lm - l1) * l3 - ratio * (l3 - lm) * l1) / denom
    if np.any(np.abs(d + grid) < 1e-6):  # pole inside the grid; start elsewhere
        return fallback
    c = dv_a * (d + l1) * (d + lm) / (lm - l1)
    a = v1 - c / (d + l1)
    start = np.array([a, c, d])
    return start if np.all(np.isfinite(start)) else fallback


def fit_extrapolant(lambda_grid, values, family: str) -> tuple[np.ndarray, float]:
    """Least-squares fit of one trend family to (lambda_j, value_j) pairs.

    Linear and quadratic are closed-form polynomial least squares; the
    rational family is solved by damped Gauss-Newton with an analytic
    Jacobian, started from an exact three-point solve.

    Returns (gamma_hat, residual_sse).
    """
    grid = np.asarray(lambda_grid, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if grid.shape != values.shape:
        raise ValueError("lambda grid and values must have the same length")
    if family not in EXTRAPOLANTS:
        raise ValueError(f"unknown extrapolant family {family!r}")
    d = EXTRAPOLANTS[family]
    if grid.size < d:
        raise ValueError(f"{family} extrapolant needs at least {d} points, got {grid.size}")
    if np.unique(grid).size != grid.size:
        raise ValueError("lambda grid contains duplicate values")

    if family in ("linear", "quadratic"):
        design = np.vander(grid, N=d, increasing=True)
        gamma, *_ = np.linalg.lstsq(design, values, rcond=None)
        resid = values - design @ gamma
        return gamma, float(resid @ resid)

    def res_jac(gamma):
        a, c, dd = gamma
        denom = dd + grid
        fitted = a + c / denom
        jac = np.column_stack([np.ones_like(grid), 1.0 / denom, -c / denom**2])
        return values - fitted, jac

    start = _rational_three_point_start(grid, values)
    result = damped_least_squares(res_jac, start, grad_tol=1e-14, step_tol=1e-14, max_iter=200)
    gamma = result.theta_hat
    if abs(gamma[2] - 1.0) <= POLE_GUARD:
        raise PoleError(
            f"fitted rational extrapolant has d = {gamma[2]!r}, a pole at lambda = -1"
        )
    return gamma, float(result.objective_value)


def simex_estimate(
    estimator: str,
    dataset: Dataset,
    model: RegressionModel,
    config: SimexConfig,
    h=None,
    *,
    replication: int = 0,
) -> tuple[np.ndarray, LambdaTrace, ExtrapolationFit]:
    """Full SIMEX run of one estimator on one dataset.

    For each lambda on the grid, each of ``config.n_pseudo`` remeasured
    datasets is fitted; non-converged fits are dropped from the per-lambda
    average (never imputed) and counted.  For the mean, Huber and median
    estimators, fits at the first lambda start from the plain LSE fit on
    (y, w) and later lambdas warm-start from the previous lambda's
    average.  The modal estimator instead starts every (lambda, b) fit
    from the naive modal estimate on (y, w): its kernel objective is
    multimodal, and a fixed anchor keeps the whole lambda-trend on the
    branch of the very estimate the extrapolation is correcting (warm
    starts were observed to ratchet across branches mid-trend).  The
    chosen extrapolant is then fitted componentwise and evaluated at
    lambda = -1.

    Returns (theta_simex, LambdaTrace, ExtrapolationFit).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    if estimator == "modal" and h is None:
        raise ValueError("the modal estimator requires a bandwidth h")
    if dataset.p != config.dim_x:
        raise ValueError(f"dataset has p={dataset.p} but config.dim_x={config.dim_x}")

    grid = config.lambda_grid
    m_points, b_count = grid.size, config.n_pseudo
    q = model.dim_theta

    theta_by_lambda = np.empty((m_points, q))
    per_b_theta = np.full((m_points, b_count, q), np.nan)
    per_b_converged = np.zeros((m_points, b_count), dtype=bool)
    per_b_iterations = np.zeros((m_points, b_count), dtype=int)
    dropped = np.zeros(m_points, dtype=int)

    start = lse_fit(model, dataset).theta_hat
    if estimator == "modal":
        start, _ = modal_em(model, dataset, h, theta0=start)
    for j, lam in enumerate(grid):
        for b in range(b_count):
            rand = rng.stream(config.seed, rng.DOMAIN_PSEUDO, replication, j, b)
            w_b = simulate_pseudo(dataset.x, lam, config.cov_u, rand, chol=config.chol_u)
            theta_b, conv, iters = fit_estimator(
                estimator, model, Dataset(dataset.y, w_b), theta0=start, h=h
            )
            per_b_theta[j, b] = theta_b
            per_b_converged[j, b] = conv and np.all(np.isfinite(theta_b))
            per_b_iterations[j, b] = iters
        kept = per_b_converged[j]
        dropped[j] = b_count - int(kept.sum())
        trace_j = per_b_theta[j][kept]
        if trace_j.shape[0] == 0:
            trace = LambdaTrace(grid, theta_by_lambda, per_b_theta, per_b_converged,
                                per_b_iterations, dropped, True)
            raise ExtrapolationError(
                f"no converged fits at lambda = {lam}; cannot trace the trend", trace
            )
        theta_by_lambda[j] = trace_j.mean(axis=0)
        if estimator != "modal":
            start = theta_by_lambda[j]

    quality_warning = bool(np.any(dropped / b_count > DROP_WARN_FRACTION))
    trace = LambdaTrace(
        lambda_grid=grid,
        theta_by_lambda=theta_by_lambda,
        per_b_theta=per_b_theta,
        per_b_converged=per_b_converged,
        per_b_iterations=per_b_iterations,
        dropped_count=dropped,
        quality_warning=quality_warning,
    )

    gamma_hat = np.empty((q, EXTRAPOLANTS[config.extrapolant]))
    theta_simex = np.empty(q)
    sse_total = 0.0
    try:
        for k in range(q):
            gamma_k, sse_k = fit_extrapolant(grid, theta_by_lambda[:, k], config.extrapolant)
            gamma_hat[k] = gamma_k
            sse_total += sse_k
            theta_simex[k] = evaluate_extrapolant(config.extrapolant, gamma_k, -1.0)
    except (PoleError, ValueError, np.linalg.LinAlgError) as exc:
        raise ExtrapolationError(f"extrapolant fit failed: {exc}", trace) from exc

    fit = ExtrapolationFit(
        family=config.extrapolant,
        gamma_hat=gamma_hat,
        residual_sse=sse_total,
        theta_simex=theta_simex,
    )
    return theta_simex, trace, fit


def naive_equivalence_check(
    estimator: str,
    dataset: Dataset,
    model: RegressionModel,
    h=None,
    *,
    tol: float = 1e-10,
) -> bool:
    """Check that a lambda = 0 pseudo-fit equals the naive fit on w.

    At lambda = 0 the remeasured data are exactly w, so running the
    estimator on them from the same start must reproduce the naive
    estimate.  First-class diagnostic for the engine's simulation step.
    """
    if estimator == "median":
        tol = max(tol, 1e-6)  # simplex tolerance
    start = lse_fit(model, dataset).theta_hat
    rand = rng.stream(0, rng.DOMAIN_PSEUDO, 0, 0, 0)
    cov = np.eye(dataset.p)
    w0 = simulate_pseudo(dataset.x, 0.0, cov, rand)
    theta_pseudo, _, _ = fit_estimator(estimator, model, Dataset(dataset.y, w0),
                                       theta0=start, h=h)
    theta_naive, _, _ = fit_estimator(estimator, model, dataset, theta0=start, h=h)
    return bool(np.max(np.abs(theta_pseudo - theta_naive)) <= tol)


def linear_normal_attenuation(lam, theta0: float, var_x: float, var_u: float):
    """Exact trend for the scalar linear model with normal X, error and U.

    theta(lambda) = theta0 * var_x / (var_x + (1 + lambda) * var_u); this is
    the one setting with a closed-form trend, used as a test oracle.  Note
    theta(-1) = theta0.
    """
    lam = np.asarray(lam, dtype=float)
    out = theta0 * var_x / (var_x + (1.0 + lam) * var_u)
    return float(out) if out.ndim == 0 else out


def write_trace(fileobj, trace: LambdaTrace) -> None:
    """Write the per-(lambda, b) trace as CSV: lambda, b, converged, theta, iters."""
    q = trace.theta_by_lambda.shape[1]
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["lambda", "b", "converged"]
                    + [f"theta_{k + 1}" for k in range(q)] + ["em_iterations"])
    for j, lam in enumerate(trace.lambda_grid):
        for b in range(trace.per_b_theta.shape[1]):
            writer.writerow(
                [repr(float(lam)), b + 1, int(trace.per_b_converged[j, b])]
                + [repr(float(v)) for v in trace.per_b_theta[j, b]]
                + [int(trace.per_b_iterations[j, b])]
            )


def trace_csv(trace: LambdaTrace) -> str:
    buf = io.StringIO()
    write_trace(buf, trace)
    return buf.getvalue()
