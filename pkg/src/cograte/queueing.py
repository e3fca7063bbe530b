"""Geo/Geo/1 queue with late arrivals.

Each slot the head-of-line packet departs with probability ``mu_p`` (if
the queue is non-empty), then a new packet arrives with probability
``lambda_p``. A packet never leaves in the slot it arrived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnstableQueueError(ValueError):
    """Raised for quantities that only exist when mu_p > lambda_p."""


@dataclass(frozen=True)
class QueueModel:
    lambda_p: float
    mu_p: float

    def __post_init__(self):
        for name in ("lambda_p", "mu_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray
    tail_mass: float


def is_stable(q: QueueModel) -> bool:
    return q.mu_p > q.lambda_p


def _require_stable(q: QueueModel):
    if q.lambda_p > 0 and not is_stable(q):
        raise UnstableQueueError(f"queue unstable: mu_p={q.mu_p} <= lambda_p={q.lambda_p}")


def empty_prob(q: QueueModel) -> float:
    """Long-run probability the queue is empty at a slot boundary."""
    if q.lambda_p == 0:
        return 1.0
    _require_stable(q)
    return 1.0 - q.lambda_p / q.mu_p


def load_ratio(q: QueueModel) -> float:
    """Geometric decay ratio eta = lambda (1 - mu) / ((1 - lambda) mu)."""
    return q.lambda_p * (1.0 - q.mu_p) / ((1.0 - q.lambda_p) * q.mu_p)


def stationary_dist(q: QueueModel, k_max: int | None = None) -> StationaryDistribution:
    """Probabilities of 0..k_max packets and the mass beyond k_max.

    ``nu_k = nu_0 * lambda / ((1 - lambda) mu) * eta**(k-1)`` for k >= 1,
    which equals ``nu_0 eta**k / (1 - mu)`` but stays finite at mu = 1.
    With ``k_max=None`` the truncation is chosen so the tail is below 1e-12.
    """
    if k_max is not None and k_max < 0:
        raise ValueError("k_max must be non-negative")
    if q.lambda_p == 0:
        n = 1 if k_max is None else k_max + 1
        probs = np.zeros(n)
        probs[0] = 1.0
        return StationaryDistribution(probs, 0.0)
    _require_stable(q)

    nu0 = empty_prob(q)
    eta = load_ratio(q)
    first = nu0 * q.lambda_p / ((1.0 - q.lambda_p) * q.mu_p)
    if k_max is None:
        if eta == 0.0:
            k_max = 1
        else:
            # first * eta**k / (1 - eta) < 1e-12
            k_max = max(1, math.ceil(math.log(1e-12 * (1.0 - eta) / first) / math.log(eta)) + 1)
    k = np.arange(1, k_max + 1)
    probs = np.empty(k_max + 1)
    probs[0] = nu0
    probs[1:] = first * eta ** (k - 1)
    tail = first * eta**k_max / (1.0 - eta) if k_max >= 1 else 1.0 - nu0
    return StationaryDistribution(probs, float(tail))


def mean_delay(q: QueueModel) -> float:
    """Mean sojourn in slots, ``(1 - lambda) / (mu - lambda)`` (Little's law).

    An empty arrival stream has no packets to delay; 1 slot is reported
    by convention (the minimum any packet can experience).
    """
    if q.lambda_p == 0:
        return 1.0
    _require_stable(q)
    return (1.0 - q.lambda_p) / (q.mu_p - q.lambda_p)


def empty_prob_array(lambda_p, mu_p):
    """Vectorised :func:`empty_prob`; NaN where the queue is unstable."""
    lam = np.asarray(lambda_p, dtype=float)
    mu = np.asarray(mu_p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(lam == 0, 1.0, np.where(mu > lam, 1.0 - lam / np.where(mu > 0, mu, 1.0), np.nan))
    return float(out) if out.ndim == 0 else out


def mean_delay_array(lambda_p, mu_p):
    """Vectorised :func:`mean_delay`; +inf where the queue is unstable."""
    lam = np.asarray(lambda_p, dtype=float)
    mu = np.asarray(mu_p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(lam == 0, 1.0, np.where(mu > lam, (1.0 - lam) / (mu - lam), np.inf))
    return float(out) if out.ndim == 0 else out
