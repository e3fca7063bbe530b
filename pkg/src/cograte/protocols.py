"""Closed-form performance of the non-cooperative baseline and protocols P1, P2.

Conventions used throughout:

* durations in seconds, bandwidths in Hz, rates in bits/slot and energies
  in joules/slot;
* ``delta_s = w_s / W`` is the bandwidth fraction released to the SU;
* every formula is written with numpy operations so that an
  :class:`Allocation` whose ``t_p`` / ``w_p`` are arrays evaluates a whole
  grid at once.

The P2 rate and energy expressions are the ones for ``omega = 1``
(feedback-erasure "nothing" treated as NACK); ``omega`` only enters the
primary service rate through ``beta``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import channel, queueing, sensing
from .channel import LinkParams, TransmissionSpec

# Relative guard for the strict inequalities of the feasibility test.
STRICT_GUARD = 1e-12


class Protocol(str, Enum):
    NC = "NC"
    P1 = "P1"
    P2 = "P2"

    def __str__(self):
        return self.value


class InvalidParamsError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Physical and protocol constants.

    Defaults are the common numerical setting (10 MHz, 5 ms slots,
    5000-bit packets) with a weak direct link and 5% feedback time.
    """

    w: float = 10e6
    t: float = 5e-3
    tau_f: float = 0.05 * 5e-3
    tau_s: float = 0.05 * 5e-3
    b: float = 5000.0
    p0: float = 1e-10
    n0: float = 1e-11
    sigma_p_pd: float = 0.005
    sigma_p_s: float = 1.0
    sigma_s_pd: float = 0.1
    sigma_s_sd: float = 0.1
    f: float = 1.0
    omega: float = 1.0
    energy_budget: float = 5e-6
    target_pfa: float = 0.1
    lambda_p: float = 0.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise InvalidParamsError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for name in ("w", "t", "b", "p0", "n0", "sigma_p_pd", "sigma_p_s", "sigma_s_pd", "sigma_s_sd"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        if not self.tau_s > 0:
            out.append("tau_s must be positive")
        if not self.tau_f >= 0:
            out.append("tau_f must be non-negative")
        if not self.tau_s < self.t:
            out.append("tau_s must be shorter than the slot")
        if not self.tau_s + self.tau_f < self.t:
            out.append("tau_s + tau_f must be shorter than the slot")
        for name in ("f", "omega", "lambda_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name} must lie in [0, 1]")
        if not 0.0 < self.target_pfa < 1.0:
            out.append("target_pfa must lie in (0, 1)")
        if not self.energy_budget >= 0:
            out.append("energy_budget must be non-negative")
        return out

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def total_time(self, protocol: Protocol | str) -> float:
        """Time available for transmission plus relaying in one slot."""
        protocol = Protocol(protocol)
        if protocol is Protocol.P2:
            return self.t - 2.0 * self.tau_f
        return self.t - self.tau_f

    def link(self, sigma: float) -> LinkParams:
        return LinkParams(sigma=sigma, p0=self.p0, n0=self.n0)

    @property
    def beta(self) -> float:
        """Probability a NACK from the destination is taken as NACK by the SU."""
        return self.f + (1.0 - self.f) * self.omega


@dataclass(frozen=True)
class Allocation:
    t_p: float
    w_p: float
    t_s: float
    w_s: float

    @classmethod
    def make(cls, params: SystemParams, protocol: Protocol | str, t_p, w_p) -> "Allocation":
        t_s = np.maximum(params.total_time(protocol) - np.asarray(t_p, dtype=float), 0.0)
        w_s = np.maximum(params.w - np.asarray(w_p, dtype=float), 0.0)
        return cls(t_p=_s(t_p), w_p=_s(w_p), t_s=_s(t_s), w_s=_s(w_s))

    @classmethod
    def from_fractions(cls, params: SystemParams, protocol, tp_frac: float, wp_frac: float) -> "Allocation":
        """``t_p`` as a fraction of the usable time, ``w_p`` as a fraction of W."""
        return cls.make(params, protocol, tp_frac * params.total_time(protocol), wp_frac * params.w)

    @property
    def delta_s(self):
        return _s(np.asarray(self.w_s) / (np.asarray(self.w_p) + np.asarray(self.w_s)))


def _s(x):
    return float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float)


def allocation_violations(params: SystemParams, protocol, alloc: Allocation) -> list[str]:
    """Box constraints on a scalar allocation (tiny float slack allowed)."""
    total = params.total_time(protocol)
    tol = 1e-12
    out = []
    if alloc.t_p < params.tau_s * (1 - tol):
        out.append("t_p below sensing time")
    if alloc.t_p > total * (1 + tol):
        out.append("t_p exceeds usable slot time")
    if alloc.w_p < -tol * params.w or alloc.w_p > params.w * (1 + tol):
        out.append("w_p outside [0, W]")
    if abs(alloc.t_p + alloc.t_s - total) > tol * total:
        out.append("t_p + t_s does not fill the usable slot time")
    return out


@dataclass(frozen=True)
class LinkStats:
    out_p_pd: float
    out_p_s: float
    out_s_pd: float
    succ_p_pd_int: float
    p_md: float
    p_fa: float
    gamma_f: float
    beta: float
    saturated: tuple[str, ...] = ()


def _sensing_for_band(params: SystemParams, w_p):
    """(p_fa, p_md) for scalar or array ``w_p``; zero band uses the vanishing-sample limit."""
    w = np.atleast_1d(np.asarray(w_p, dtype=float))
    uniq, inverse = np.unique(w, return_inverse=True)
    fa = np.empty(uniq.shape)
    md = np.empty(uniq.shape)
    for i, wp in enumerate(uniq):
        if wp > 0:
            err = sensing.sensing_errors(
                sensing.SensingParams(params.tau_s, float(wp), params.p0, params.n0, params.sigma_p_s, params.target_pfa)
            )
        else:
            err = sensing.zero_band_errors(params.target_pfa, params.sigma_p_s, params.p0 / params.n0)
        fa[i], md[i] = err.p_fa, err.p_md
    fa, md = fa[inverse].reshape(w.shape), md[inverse].reshape(w.shape)
    if np.ndim(w_p) == 0:
        return float(fa[0]), float(md[0])
    return fa.reshape(np.shape(w_p)), md.reshape(np.shape(w_p))


def link_stats(params: SystemParams, alloc: Allocation) -> LinkStats:
    """Outage and sensing error probabilities at one allocation (or a grid)."""
    direct = TransmissionSpec(params.b, alloc.t_p, alloc.w_p)
    relay = TransmissionSpec(params.b, alloc.t_s, alloc.w_p)
    out_p_pd = channel.outage_prob(direct, params.link(params.sigma_p_pd))
    out_p_s = channel.outage_prob(direct, params.link(params.sigma_p_s))
    out_s_pd = channel.outage_prob(relay, params.link(params.sigma_s_pd))
    succ = channel.interference_success_prob(direct, params.link(params.sigma_p_pd), params.sigma_s_pd)
    p_fa, p_md = _sensing_for_band(params, alloc.w_p)
    gamma_f = _s(np.asarray(out_p_pd) * params.f + (1.0 - params.f))
    saturated = tuple(
        name for name, spec in (("p->pd", direct), ("p->s", direct), ("s->pd", relay)) if np.any(channel.is_saturated(spec))
    )
    return LinkStats(out_p_pd, out_p_s, out_s_pd, succ, p_md, p_fa, gamma_f, params.beta, saturated)


def mu_nc(params: SystemParams) -> float:
    """Service rate without cooperation: p -> pd over W for T - tau_f."""
    spec = TransmissionSpec(params.b, params.t - params.tau_f, params.w)
    return 1.0 - channel.outage_prob(spec, params.link(params.sigma_p_pd))


def _mu_coop(stats: LinkStats, relay_weight):
    relay_ok = relay_weight * (1.0 - np.asarray(stats.out_p_s)) * (1.0 - np.asarray(stats.out_s_pd))
    detected = (1.0 - np.asarray(stats.p_md)) * (1.0 - np.asarray(stats.out_p_pd) * (1.0 - relay_ok))
    return _s(detected + np.asarray(stats.p_md) * np.asarray(stats.succ_p_pd_int))


def mu_p1(stats: LinkStats):
    """Primary service rate under P1 (SU relays whenever it decoded and s->pd is ON)."""
    return _mu_coop(stats, 1.0)


def mu_p2(stats: LinkStats):
    """Primary service rate under P2; the relay path only helps after a perceived NACK."""
    return _mu_coop(stats, stats.beta)


@dataclass(frozen=True)
class RateBreakdown:
    rate_empty: float
    rate_busy: float
    mean_rate: float


@dataclass(frozen=True)
class EnergyBreakdown:
    energy_empty: float
    energy_busy: float
    mean_energy: float


def _nu0(params: SystemParams, mu, nu0):
    if nu0 is not None:
        return nu0
    return queueing.empty_prob(queueing.QueueModel(params.lambda_p, float(mu)))


def _idle_slot_factor(params: SystemParams, alloc: Allocation, stats: LinkStats, feedback_phases: int):
    """Bandwidth-weighted seconds the SU transmits when the primary queue is empty."""
    d = np.asarray(alloc.delta_s)
    p_fa = np.asarray(stats.p_fa)
    return (
        params.tau_s * d
        + (np.asarray(alloc.t_p) - params.tau_s) * (p_fa * d + 1.0 - p_fa)
        + np.asarray(alloc.t_s)
        + feedback_phases * params.tau_f
    )


def secondary_rate_p1(params: SystemParams, alloc: Allocation, stats: LinkStats, g: float, nu0=None) -> RateBreakdown:
    """SU rate (bits/slot) under P1 when the primary queue is empty, busy, and on average.

    ``nu0`` defaults to the empty probability of the P1 queue and raises
    :class:`~cograte.queueing.UnstableQueueError` if that queue is unstable.
    """
    d = np.asarray(alloc.delta_s)
    t_s = np.asarray(alloc.t_s)
    p_md, p_ps, p_spd = (np.asarray(x) for x in (stats.p_md, stats.out_p_s, stats.out_s_pd))
    scale = params.w * g
    empty = _idle_slot_factor(params, alloc, stats, 1) * scale
    busy = (
        (params.tau_f + np.asarray(alloc.t_p)) * d
        + (p_md + (1.0 - p_md) * p_ps) * t_s
        + (1.0 - p_md) * (1.0 - p_ps) * t_s * ((1.0 - p_spd) * d + p_spd)
    ) * scale
    nu0 = np.asarray(_nu0(params, mu_p1(stats), nu0))
    return RateBreakdown(_s(empty), _s(busy), _s(nu0 * empty + (1.0 - nu0) * busy))


def secondary_rate_p2(params: SystemParams, alloc: Allocation, stats: LinkStats, g: float, nu0=None) -> RateBreakdown:
    """SU rate (bits/slot) under P2.

    In a busy slot the SU relays only if it decoded the packet, perceives a
    NACK (probability ``gamma_f``) and s -> pd is ON; otherwise the relay
    interval carries its own data over the whole band.
    """
    d = np.asarray(alloc.delta_s)
    t_s = np.asarray(alloc.t_s)
    p_md, p_ps, p_spd, gf = (np.asarray(x) for x in (stats.p_md, stats.out_p_s, stats.out_s_pd, stats.gamma_f))
    scale = params.w * g
    empty = _idle_slot_factor(params, alloc, stats, 2) * scale
    relay_interval = (1.0 - p_ps) * (gf * ((1.0 - p_spd) * d + p_spd) + (1.0 - gf)) + p_ps
    busy = ((2.0 * params.tau_f + np.asarray(alloc.t_p)) * d + (1.0 - p_md) * t_s * relay_interval + p_md * t_s) * scale
    nu0 = np.asarray(_nu0(params, mu_p2(stats), nu0))
    return RateBreakdown(_s(empty), _s(busy), _s(nu0 * empty + (1.0 - nu0) * busy))


def _energy(params, alloc, stats, nu0, feedback_phases: int) -> EnergyBreakdown:
    d = np.asarray(alloc.delta_s)
    p_md = np.asarray(stats.p_md)
    scale = params.w * params.p0
    empty = _idle_slot_factor(params, alloc, stats, feedback_phases) * scale
    busy = (
        (feedback_phases * params.tau_f + params.tau_s) * d
        + (np.asarray(alloc.t_p) - params.tau_s) * ((1.0 - p_md) * d + p_md)
        + np.asarray(alloc.t_s)
    ) * scale
    nu0 = np.asarray(nu0)
    return EnergyBreakdown(_s(empty), _s(busy), _s(nu0 * empty + (1.0 - nu0) * busy))


def energy_breakdown_p1(params, alloc, stats, nu0=None) -> EnergyBreakdown:
    return _energy(params, alloc, stats, _nu0(params, mu_p1(stats), nu0), 1)


def energy_breakdown_p2(params, alloc, stats, nu0=None) -> EnergyBreakdown:
    return _energy(params, alloc, stats, _nu0(params, mu_p2(stats), nu0), 2)


def mean_energy_p1(params: SystemParams, alloc: Allocation, stats: LinkStats, nu0=None):
    """Mean SU transmit energy (J/slot) under P1.

    In a busy slot the SU is silent on W_p only while sensing, during the
    feedback phase, and over [tau_s, T_p] when it correctly detects the PU.
    """
    return energy_breakdown_p1(params, alloc, stats, nu0).mean_energy


def mean_energy_p2(params: SystemParams, alloc: Allocation, stats: LinkStats, nu0=None):
    return energy_breakdown_p2(params, alloc, stats, nu0).mean_energy


@dataclass(frozen=True)
class ProtocolMetrics:
    protocol: Protocol
    mu_p: float
    nu0: float
    delay: float
    mean_rate: float
    mean_energy: float
    rate_empty: float = 0.0
    rate_busy: float = 0.0
    stable: bool = True
    feasible: bool = False
    violations: tuple[str, ...] = field(default=())


def long_run_empty_prob(lambda_p, mu):
    """Fraction of slots with an empty queue; 0 when the queue is unstable."""
    lam = np.asarray(lambda_p, dtype=float)
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(lam == 0, 1.0, np.where(mu > lam, 1.0 - lam / np.where(mu > 0, mu, 1.0), 0.0))
    return _s(out)


def strictly_greater(a, b):
    """``a > b`` with a relative guard against float-equality artifacts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a > b + STRICT_GUARD * np.maximum(np.abs(b), np.finfo(float).tiny)


def cooperative_components(params: SystemParams, protocol, alloc: Allocation, g: float | None = None):
    """Lambda-independent pieces for P1/P2: stats, mu and the empty/busy rates and energies."""
    protocol = Protocol(protocol)
    if g is None:
        g = channel.expected_log_capacity(params.link(params.sigma_s_sd))
    stats = link_stats(params, alloc)
    if protocol is Protocol.P1:
        mu = mu_p1(stats)
        rates = secondary_rate_p1(params, alloc, stats, g, nu0=0.0)
        energy = energy_breakdown_p1(params, alloc, stats, nu0=0.0)
    elif protocol is Protocol.P2:
        mu = mu_p2(stats)
        rates = secondary_rate_p2(params, alloc, stats, g, nu0=0.0)
        energy = energy_breakdown_p2(params, alloc, stats, nu0=0.0)
    else:
        raise ValueError("cooperative components only exist for P1 and P2")
    return stats, mu, rates, energy


def evaluate(params: SystemParams, alloc: Allocation | None, protocol) -> ProtocolMetrics:
    """All metrics for one protocol at one allocation, with the feasibility verdict.

    Feasible means the primary service rate beats both the non-cooperative
    rate and the arrival rate, the SU energy is within budget and the
    allocation is inside its box. An unstable queue is reported with
    ``nu0 = 0`` (it is never empty in the long run) and infinite delay.
    The NC baseline ignores ``alloc``; it is feasible when its queue is stable.
    """
    protocol = Protocol(protocol)
    lam = params.lambda_p
    base = mu_nc(params)
    if protocol is Protocol.NC:
        stable = base > lam or lam == 0
        return ProtocolMetrics(
            protocol=protocol,
            mu_p=base,
            nu0=float(long_run_empty_prob(lam, base)),
            delay=float(queueing.mean_delay_array(lam, base)),
            mean_rate=0.0,
            mean_energy=0.0,
            stable=bool(stable),
            feasible=bool(stable),
            violations=() if stable else ("primary queue unstable",),
        )

    stats, mu, rates, energy = cooperative_components(params, protocol, alloc)
    nu0 = float(long_run_empty_prob(lam, mu))
    mean_rate = nu0 * rates.rate_empty + (1.0 - nu0) * rates.rate_busy
    mean_energy = nu0 * energy.energy_empty + (1.0 - nu0) * energy.energy_busy
    violations = list(allocation_violations(params, protocol, alloc))
    if not strictly_greater(mu, max(base, lam)):
        violations.append("service rate not above max(mu_nc, lambda_p)")
    if not mean_energy <= params.energy_budget * (1.0 + STRICT_GUARD):
        violations.append("SU energy above budget")
    stable = bool(mu > lam or lam == 0)
    return ProtocolMetrics(
        protocol=protocol,
        mu_p=float(mu),
        nu0=nu0,
        delay=float(queueing.mean_delay_array(lam, mu)),
        mean_rate=float(mean_rate),
        mean_energy=float(mean_energy),
        rate_empty=float(rates.rate_empty),
        rate_busy=float(rates.rate_busy),
        stable=stable,
        feasible=not violations,
        violations=tuple(violations),
    )


def delay_nc(params: SystemParams) -> float:
    """Non-cooperative queueing delay in slots (inf when unstable)."""
    return float(queueing.mean_delay_array(params.lambda_p, mu_nc(params)))

