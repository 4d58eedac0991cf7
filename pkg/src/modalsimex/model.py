"""Parametric regression functions with analytic parameter gradients.

Two closed-form families are supported:

* ``"exp"``:    m(x, theta) = theta[0] * exp(theta[1] * x), univariate x
* ``"linear"``: m(x, theta) = theta @ x

Both are evaluated either on a single covariate row or, vectorised, on an
(n, p) matrix of rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# exp() overflows slightly above exp(709); clamp with headroom so optimizer
# line-search excursions never produce inf/NaN.
EXP_GUARD = 700.0

MODEL_KINDS = ("exp", "linear")


@dataclass(frozen=True)
class RegressionModel:
    """A regression function m(x, theta) from a closed family.

    Attributes:
        kind: "exp" (amplitude/rate, p=1, q=2) or "linear" (q=p, no intercept
            unless a constant column is included in x).
        dim_x: number of covariates p.
    """

    kind: str
    dim_x: int = 1

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.dim_x < 1:
            raise ValueError("dim_x must be a positive integer")
        if self.kind == "exp" and self.dim_x != 1:
            raise ValueError("exp model is univariate (dim_x must be 1)")

    @property
    def dim_theta(self) -> int:
        return 2 if self.kind == "exp" else self.dim_x


def exponential_model() -> RegressionModel:
    return RegressionModel(kind="exp", dim_x=1)


def linear_model(dim_x: int) -> RegressionModel:
    return RegressionModel(kind="linear", dim_x=dim_x)


def _as_rows(model: RegressionModel, x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coerce x to an (n, p) matrix; report whether the input was a single row."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
        single = True
    elif x.ndim == 1:
        if model.dim_x == 1:
            # 1-D input is a batch of scalar covariates.
            single = x.shape[0] == 1
            x = x.reshape(-1, 1)
        else:
            if x.shape[0] != model.dim_x:
                raise ValueError(f"covariate row has length {x.shape[0]}, expected {model.dim_x}")
            x = x.reshape(1, -1)
            single = True
    elif x.ndim == 2:
        if x.shape[1] != model.dim_x:
            raise ValueError(f"covariate matrix has {x.shape[1]} columns, expected {model.dim_x}")
        single = False
    else:
        raise ValueError("covariates must be at most 2-dimensional")
    return x, single


def _check_theta(model: RegressionModel, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != model.dim_theta:
        raise ValueError(f"theta has length {theta.shape[0]}, expected {model.dim_theta}")
    return theta


def evaluate(model: RegressionModel, x, theta) -> float | np.ndarray:
    """Evaluate m(x, theta); scalar for a single row, 1-D array for a batch."""
    m, _ = eval_and_grad(model, x, theta, need_grad=False)
    return m


def gradient(model: RegressionModel, x, theta) -> np.ndarray:
    """Gradient of m in theta: (q,) for a single row, (n, q) for a batch."""
    _, jac = eval_and_grad(model, x, theta)
    return jac


def eval_and_grad(
    model: RegressionModel, x, theta, need_grad: bool = True
) -> tuple[float | np.ndarray, np.ndarray | None]:
    """Evaluate m and (optionally) its theta-gradient in one pass.

    Sharing the exp() call between value and gradient roughly halves the
    cost of each Gauss-Newton iteration for the exponential model.
    """
    theta = _check_theta(model, theta)
    x, single = _as_rows(model, x)
    if model.kind == "linear":
        m = x @ theta
        jac = x if need_grad else None
    else:
        a, b = theta
        x1 = x[:, 0]
        expo = np.clip(b * x1, -EXP_GUARD, EXP_GUARD)
        e = np.exp(expo)
        m = a * e
        if need_grad:
            jac = np.empty((x1.shape[0], 2))
            jac[:, 0] = e
            jac[:, 1] = a * x1 * e
        else:
            jac = None
    if single:
        return float(m[0]), (None if jac is None else jac[0].copy())
    return m, jac


def exponent_saturated(model: RegressionModel, x, theta) -> bool:
    """True when the overflow guard clipped the exponential's exponent.

    The clipped evaluation stays finite; callers that care (diagnostics)
    can poll this flag.
    """
    if model.kind != "exp":
        return False
    theta = _check_theta(model, theta)
    x, _ = _as_rows(model, x)
    return bool(np.any(np.abs(theta[1] * x[:, 0]) > EXP_GUARD))
