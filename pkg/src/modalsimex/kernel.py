"""Standard normal kernel, its bandwidth-scaled form, and derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Bandwidth:
    """Kernel bandwidth, optionally carrying the rule h = c * n**(-1/7)."""

    h: float
    c: float | None = None
    n: int | None = None

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("bandwidth h must be positive")

    @classmethod
    def from_rule(cls, c: float, n: int) -> "Bandwidth":
        if not c > 0:
            raise ValueError("rule constant c must be positive")
        if n < 1:
            raise ValueError("sample size n must be positive")
        return cls(h=c * float(n) ** (-1.0 / 7.0), c=c, n=n)


def phi(t):
    """Standard normal density."""
    t = np.asarray(t, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    return float(out) if out.ndim == 0 else out


def log_phi(t):
    t = np.asarray(t, dtype=float)
    out = -_LOG_SQRT_2PI - 0.5 * t * t
    return float(out) if out.ndim == 0 else out


def _check_h(h: float) -> float:
    h = float(h)
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    return h


def phi_h(t, h):
    """Scaled kernel h**-1 * phi(t / h)."""
    h = _check_h(h)
    t = np.asarray(t, dtype=float)
    out = phi(t / h) / h
    return float(out) if np.ndim(out) == 0 else out


def log_phi_h(t, h):
    """log(phi_h); preferred over log(phi_h(t, h)) when t/h is large."""
    h = _check_h(h)
    t = np.asarray(t, dtype=float)
    out = -np.log(h) - _LOG_SQRT_2PI - 0.5 * (t / h) ** 2
    return float(out) if out.ndim == 0 else out


def phi_h_deriv(t, h, order: int):
    """Derivative of phi_h in t, for order 1, 2 or 3."""
    h = _check_h(h)
    t = np.asarray(t, dtype=float)
    u = t / h
    base = phi(u)
    if order == 1:
        out = -(u / h**2) * base
    elif order == 2:
        out = ((u * u - 1.0) / h**3) * base
    elif order == 3:
        out = ((3.0 * u - u**3) / h**4) * base
    else:
        raise ValueError(f"unsupported derivative order {order}; expected 1, 2 or 3")
    return float(out) if np.ndim(out) == 0 else out
