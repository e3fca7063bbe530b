"""Outage probabilities and expected capacity of Rayleigh-faded links.

A link j -> k has an exponentially distributed power gain with mean
``sigma``. Transmitting ``bits`` in ``duration`` seconds over ``bandwidth``
Hz fails (outage) when the gain falls below

    alpha_th = (n0 / p0) * (2 ** (bits / (bandwidth * duration)) - 1).

All public functions accept numpy arrays in the TransmissionSpec fields so an entire
allocation grid can be evaluated at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import scaled_gamma0

# Spectral efficiencies above this (bits/s/Hz) are treated as certain
# outage; 2**60 is still finite but the threshold is meaningless.
EXPONENT_CAP = 60.0


class ChannelOverflowError(OverflowError):
    """Requested spectral efficiency exceeds :data:`EXPONENT_CAP`."""


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class LinkParams:
    sigma: float
    p0: float
    n0: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (self.p0 > 0 and self.n0 > 0):
            raise ValueError("p0 and n0 must be positive")

    @property
    def snr_per_gain(self) -> float:
        return self.p0 / self.n0


@dataclass(frozen=True)
class TransmissionSpec:
    """A packet of ``bits`` sent in ``duration`` seconds over ``bandwidth`` Hz.

    Zero duration or bandwidth is allowed: such a transmission is always in
    outage (the optimizer visits these grid corners).
    """

    bits: float
    duration: float
    bandwidth: float

    def __post_init__(self):
        for name in ("bits", "duration", "bandwidth"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")


def spectral_efficiency(spec: TransmissionSpec):
    """bits / (bandwidth * duration); +inf where the time-bandwidth is zero."""
    bits = np.asarray(spec.bits, dtype=float)
    tw = np.asarray(spec.bandwidth, dtype=float) * np.asarray(spec.duration, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(tw > 0, bits / np.where(tw > 0, tw, 1.0), np.where(bits > 0, np.inf, 0.0))
    return _scalar(eff)


def is_saturated(spec: TransmissionSpec):
    """True where the spectral efficiency exceeds the exponent cap."""
    return _scalar(np.asarray(spectral_efficiency(spec)) > EXPONENT_CAP)


def snr_requirement(spec: TransmissionSpec):
    """Required SNR 2**r - 1, +inf where saturated."""
    eff = np.asarray(spectral_efficiency(spec))
    capped = np.minimum(eff, EXPONENT_CAP)
    req = np.where(eff > EXPONENT_CAP, np.inf, np.expm1(capped * math.log(2.0)))
    return _scalar(req)


def outage_threshold(spec: TransmissionSpec, link: LinkParams):
    """Gain threshold below which the link is OFF.

    Raises :class:`ChannelOverflowError` if any point exceeds the cap.
    """
    if np.any(is_saturated(spec)):
        raise ChannelOverflowError(
            f"spectral efficiency above {EXPONENT_CAP} bits/s/Hz; link is always in outage"
        )
    return _scalar(np.asarray(snr_requirement(spec)) / link.snr_per_gain)


def gain_threshold(spec: TransmissionSpec, link: LinkParams):
    """Like :func:`outage_threshold` but returns +inf instead of raising."""
    return _scalar(np.asarray(snr_requirement(spec)) / link.snr_per_gain)


def outage_prob(spec: TransmissionSpec, link: LinkParams):
    """P{gain < alpha_th} = 1 - exp(-alpha_th / sigma).

    Saturated points (see :func:`is_saturated`) return exactly 1.
    """
    th = np.asarray(gain_threshold(spec, link))
    return _scalar(-np.expm1(-th / link.sigma))


def interference_success_prob(spec: TransmissionSpec, direct: LinkParams, interferer_sigma):
    """Probability the direct link survives a same-PSD interferer.

    The SINR ``a p0 / (n0 + a' p0)`` must reach ``2**r - 1`` with ``a``, ``a'``
    independent exponentials of means ``direct.sigma`` and
    ``interferer_sigma``. Conditioning on ``a'`` and averaging gives the
    no-interference success probability divided by
    ``1 + (interferer_sigma / direct.sigma) * (2**r - 1)``.
    """
    req = np.asarray(snr_requirement(spec))
    success = np.exp(-(req / direct.snr_per_gain) / direct.sigma)
    ratio = np.asarray(interferer_sigma, dtype=float) / direct.sigma
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(req), 0.0, success / (1.0 + ratio * np.where(np.isinf(req), 0.0, req)))
    return _scalar(out)


def expected_log_capacity(link: LinkParams) -> float:
    """E[log2(1 + gamma * a)] for a ~ Exp(mean sigma), gamma = p0 / n0.

    Closed form ``exp(1/x) * Gamma(0, 1/x) / ln 2`` with ``x = gamma * sigma``.
    """
    x = link.snr_per_gain * link.sigma
    return float(scaled_gamma0(1.0 / x)) / math.log(2.0)
