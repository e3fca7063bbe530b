"""Special functions and quadrature used by the analytical model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import special

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Q(38.5) is ~1e-324; beyond that erfc underflows.
_Y_MAX = 38.5


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped without meeting its tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if not self.abs_tol >= 0:
            raise ValueError(f"abs_tol must be non-negative, got {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


DEFAULT_QUAD = QuadratureSpec()


def q_function(y):
    """Gaussian tail probability Q(y) = P(Z > y) for standard normal Z.

    Accepts scalars or arrays. Saturates to 0 / 1 far in the tails.
    """
    out = 0.5 * special.erfc(np.asarray(y, dtype=float) / _SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def _q_scalar(y: float) -> float:
    return 0.5 * math.erfc(y / _SQRT2)


def _initial_guess(p: float) -> float:
    # Abramowitz & Stegun 26.2.23, |error| < 4.5e-4 for 0 < p <= 0.5.
    t = math.sqrt(-2.0 * math.log(p))
    num = 2.515517 + t * (0.802853 + t * 0.010328)
    den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))
    return t - num / den


def q_inverse(p: float) -> float:
    """Inverse of :func:`q_function` on (0, 1).

    Newton iteration on ``log Q(y) - log p`` kept inside a shrinking
    bisection bracket, so it cannot diverge even from a poor start.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inverse requires 0 < p < 1, got {p}")
    if p > 0.5:
        # 1 - p is exact here (Sterbenz), so symmetry costs no accuracy.
        return -q_inverse(1.0 - p)
    if p == 0.5:
        return 0.0

    lo, hi = 0.0, _Y_MAX
    y = min(max(_initial_guess(p), lo), hi)
    log_p = math.log(p)
    for _ in range(100):
        qy = _q_scalar(y)
        if qy <= 0.0:
            hi = y
            y = 0.5 * (lo + hi)
            continue
        h = math.log(qy) - log_p
        if h > 0:
            lo = y
        else:
            hi = y
        # d/dy log Q(y) = -phi(y) / Q(y)
        slope = -math.exp(-0.5 * y * y) / _SQRT2PI / qy
        step = -h / slope
        y_new = y + step
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-15 * max(1.0, abs(y)):
            return y_new
        y = y_new
    return y


def upper_incomplete_gamma0(x):
    """Gamma(0, x), i.e. the exponential integral E1(x), for x > 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("upper_incomplete_gamma0 requires x > 0")
    out = special.exp1(arr)
    return float(out) if np.ndim(out) == 0 else out


def scaled_gamma0(x):
    """exp(x) * Gamma(0, x) without overflow for large x."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("scaled_gamma0 requires x > 0")
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.exp(arr) * special.exp1(arr)
    # Asymptotic series; at x > 500 the 6-term remainder is below 1e-16.
    inv = 1.0 / arr
    asym = inv * (1 - inv * (1 - 2 * inv * (1 - 3 * inv * (1 - 4 * inv * (1 - 5 * inv)))))
    out = np.where(arr > 500.0, asym, direct)
    return float(out) if np.ndim(out) == 0 else out


def integrate(
    f: Callable[[float], float],
    lower: float,
    upper: float = math.inf,
    spec: QuadratureSpec = DEFAULT_QUAD,
    points=None,
) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[lower, upper]``.

    A semi-infinite range is mapped onto [0, 1) with
    ``z = lower + t / (1 - t)`` before subdividing. ``points`` are interior
    breakpoints for finite ranges only.

    Raises :class:`QuadratureError` when the subdivision budget runs out
    or the integrator reports divergence.
    """
    if math.isinf(upper):
        if points is not None:
            raise ValueError("breakpoints are only supported on finite ranges")

        def g(t):
            s = 1.0 - t
            return f(lower + t / s) / (s * s)

        a, b = 0.0, 1.0
    else:
        g, a, b = f, lower, upper
        if a == b:
            return 0.0

    result = _integrate.quad(
        g,
        a,
        b,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=spec.max_subdivisions,
        points=points,
        full_output=1,
    )
    value, err = result[0], result[1]
    if len(result) > 3:
        # quadpack raised a flag; keep the value only if its own error
        # estimate still meets the requested tolerance.
        if not err <= max(spec.abs_tol, spec.rel_tol * abs(value)):
            raise QuadratureError(
                f"quadrature did not converge (estimate {value!r}, error {err!r}): "
                + result[3].strip().splitlines()[0]
            )
    return value
