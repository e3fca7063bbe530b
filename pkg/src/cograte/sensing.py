"""Energy-detection spectrum sensing over the primary subband.

The detector averages ``n = 2 * w_p * tau_s`` energy samples. Under the
Gaussian approximation the statistic has mean ``Lambda`` and variance
``Lambda**2 / n`` where ``Lambda = n0 * w_p`` when the primary is idle
and ``Lambda = gain * p0 * w_p + n0 * w_p`` when it transmits. The
threshold is set for a target false-alarm probability; the misdetection
probability is then averaged over the exponential p -> s gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import DEFAULT_QUAD, QuadratureSpec, integrate, q_function, q_inverse


@dataclass(frozen=True)
class SensingParams:
    tau_s: float
    w_p: float
    p0: float
    n0: float
    sigma_ps: float
    target_pfa: float

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ValueError(f"tau_s must be positive, got {self.tau_s}")
        if not self.w_p > 0:
            raise ValueError(f"w_p must be positive, got {self.w_p}")
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError(f"target_pfa must lie in (0, 1), got {self.target_pfa}")
        if not (self.p0 > 0 and self.n0 > 0 and self.sigma_ps > 0):
            raise ValueError("p0, n0 and sigma_ps must be positive")

    @property
    def sample_count(self) -> float:
        # Used as a real number; no flooring.
        return 2.0 * self.w_p * self.tau_s

    @property
    def noise_power(self) -> float:
        return self.n0 * self.w_p

    @property
    def signal_power(self) -> float:
        return self.p0 * self.w_p


@dataclass(frozen=True)
class SensingErrors:
    p_fa: float
    p_md: float
    threshold: float


def detection_threshold(params: SensingParams) -> float:
    """Energy threshold that yields ``params.target_pfa`` under H0."""
    root_n = math.sqrt(params.sample_count)
    return params.noise_power * (q_inverse(params.target_pfa) / root_n + 1.0)


def false_alarm_prob(params: SensingParams, eps: float) -> float:
    root_n = math.sqrt(params.sample_count)
    return q_function(root_n * (eps / params.noise_power - 1.0))


def _detection_given_snr(root_n: float, q_target: float, snr):
    """Q(sqrt(n) (eps / Lambda_1 - 1)) written without eps.

    With ``sqrt(n) eps / N_p = q_target + sqrt(n)`` the argument becomes
    ``(q_target + sqrt(n)) / (1 + snr) - sqrt(n)``, which stays finite as
    the sample count goes to zero.
    """
    return q_function((q_target + root_n) / (1.0 + np.asarray(snr, dtype=float)) - root_n)


def conditional_detection_prob(params: SensingParams, eps: float, gain):
    """Detection probability given the realised p -> s power gain(s)."""
    root_n = math.sqrt(params.sample_count)
    mean_h1 = np.asarray(gain, dtype=float) * params.signal_power + params.noise_power
    return q_function(root_n * (eps / mean_h1 - 1.0))


def _average_misdetection(root_n: float, q_target: float, mean_snr: float, quad: QuadratureSpec) -> float:
    """Mean of 1 - P_D over an exponential received SNR with mean ``mean_snr``.

    Integrated over u = snr / mean_snr so the weight is exp(-u) at any
    scale; the complement is integrated directly so small P_MD keeps its
    relative accuracy. The integrand drops from ~1 to ~0 near ``center``
    over a width of about ``ratio / (sqrt(n) mean_snr)``.
    """

    def integrand(u):
        arg = (q_target + root_n) / (1.0 + mean_snr * u) - root_n
        return 0.5 * math.erfc(-arg / math.sqrt(2.0)) * math.exp(-u)

    if root_n == 0.0 or q_target <= 0.0:
        # No sharp transition: the threshold sits at or below the noise level.
        return min(max(integrate(integrand, 0.0, math.inf, quad), 0.0), 1.0)
    ratio = 1.0 + q_target / root_n
    center = max(ratio - 1.0, 0.0) / mean_snr
    width = ratio / (root_n * mean_snr)
    split = center + 40.0 * width
    # exp(-700) is far below any tolerance we use.
    if split >= 700.0:
        inner = [c for c in (center - 40.0 * width, center) if 0.0 < c < 700.0]
        return min(max(integrate(integrand, 0.0, 700.0, quad, points=inner or None), 0.0), 1.0)
    head = integrate(integrand, 0.0, split, quad, points=[center] if center > 0 else None)
    tail = integrate(integrand, split, math.inf, quad)
    return min(max(head + tail, 0.0), 1.0)


def misdetection_prob(params: SensingParams, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Misdetection probability averaged over gain ~ Exp(mean sigma_ps).

    Substituting ``Z = n0 w_p + gain * p0 w_p`` in the detection integral
    turns the weight into the exponential density of the gain, so

        P_MD = int_0^inf Q(-sqrt(n) (eps / Z(gain) - 1)) exp(-gain/s) / s dgain.
    """
    root_n = math.sqrt(params.sample_count)
    mean_snr = params.sigma_ps * params.p0 / params.n0
    return _average_misdetection(root_n, q_inverse(params.target_pfa), mean_snr, quad)


def zero_band_errors(target_pfa: float, sigma_ps: float, snr_per_gain: float) -> SensingErrors:
    """Limit of the detector as the sensed band (and sample count) goes to zero.

    The false-alarm rate stays at its target and detection tends to
    ``Q(Q^-1(P_FA) / (1 + snr))`` for each received SNR.
    """
    p_md = _average_misdetection(0.0, q_inverse(target_pfa), sigma_ps * snr_per_gain, DEFAULT_QUAD)
    return SensingErrors(p_fa=target_pfa, p_md=p_md, threshold=0.0)


def zero_band_detection_prob(target_pfa: float, snr):
    """Per-gain detection probability in the zero-band limit."""
    return _detection_given_snr(0.0, q_inverse(target_pfa), snr)


def _round_key(x: float) -> float:
    return float(f"{x:.12e}")


@lru_cache(maxsize=4096)
def _cached_errors(tau_s, w_p, p0, n0, sigma_ps, target_pfa) -> SensingErrors:
    params = SensingParams(tau_s, w_p, p0, n0, sigma_ps, target_pfa)
    eps = detection_threshold(params)
    return SensingErrors(p_fa=false_alarm_prob(params, eps), p_md=misdetection_prob(params), threshold=eps)


def sensing_errors(params: SensingParams) -> SensingErrors:
    """P_FA, P_MD and the threshold, memoised per parameter set.

    Keys are rounded to 12 significant digits so grid values that differ
    only by float noise share an entry. ``lru_cache`` is thread-safe.
    """
    return _cached_errors(
        _round_key(params.tau_s),
        _round_key(params.w_p),
        params.p0,
        params.n0,
        params.sigma_ps,
        params.target_pfa,
    )
