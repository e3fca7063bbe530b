"""Slot-level Monte Carlo simulation of the NC, P1 and P2 protocols.

Every slot draws a fixed block of uniforms from a Philox stream (counter
based), so the value used for draw ``k`` of slot ``t`` depends only on
``(seed, t, k)``. Channel and sensing realisations do not depend on the
queue, so they are computed for all slots at once; only the queue
recursion runs sequentially.

Draw layout per slot::

    0 arrival           3 gain s->pd        6 gain p->s seen by the detector
    1 gain p->pd        4 gain s->sd        7 feedback decoded at the SU
    2 gain p->s         5 sensing decision  8 "nothing" taken as NACK
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import channel, sensing
from .channel import TransmissionSpec
from .protocols import Allocation, Protocol, ProtocolMetrics, SystemParams

DRAWS_PER_SLOT = 9
CHUNK = 1 << 16

SLOT_TRACE_FIELDS = (
    "slot",
    "queue_len_before",
    "arrival",
    "primary_tx",
    "sensing_outcome",
    "direct_success",
    "relay_attempted",
    "relay_success",
    "feedback_heard",
    "su_energy",
    "su_bits",
)


@dataclass(frozen=True)
class SimConfig:
    params: SystemParams
    protocol: Protocol
    alloc: Allocation | None = None
    n_slots: int = 1_000_000
    seed: int = 0
    warmup_slots: int = 10_000
    batches: int = 50
    # Reuse the p->s decoding gain for sensing instead of an independent copy.
    correlated_sensing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not self.n_slots > self.warmup_slots >= 0:
            raise ValueError("need n_slots > warmup_slots >= 0")
        if self.protocol is not Protocol.NC and self.alloc is None:
            raise ValueError(f"{self.protocol} needs an allocation")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.batches < 2:
            raise ValueError("need at least 2 batches for error estimates")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def z(self, reference: float) -> float:
        if self.stderr > 0:
            return (self.value - reference) / self.stderr
        return 0.0 if self.value == reference else math.copysign(math.inf, self.value - reference)


@dataclass
class SlotTrace:
    slot: int
    queue_len_before: int
    arrival: int
    primary_tx: int
    sensing_outcome: str
    direct_success: int
    relay_attempted: int
    relay_success: int
    feedback_heard: int
    su_energy: float
    su_bits: float


@dataclass
class SimReport:
    mu_hat: Estimate
    nu0_hat: Estimate
    delay_hat: Estimate
    rate_hat: Estimate
    energy_hat: Estimate
    slots_used: int
    busy_slots: int
    packets: int
    diverged: bool = False
    replications: int = 1
    notes: list[str] = field(default_factory=list)


def _batch_estimate(x: np.ndarray, batches: int) -> Estimate:
    n = x.size
    if n == 0:
        return Estimate(math.nan, math.nan)
    mean = float(x.mean())
    b = min(batches, n)
    if b < 2:
        return Estimate(mean, math.nan)
    size = n // b
    means = x[: size * b].reshape(b, size).mean(axis=1)
    return Estimate(mean, float(means.std(ddof=1) / math.sqrt(b)))


class _Thresholds:
    """Gain thresholds and sensing constants for one configuration."""

    def __init__(self, params: SystemParams, protocol: Protocol, alloc: Allocation | None):
        self.params = params
        p = params
        if protocol is Protocol.NC:
            nc = TransmissionSpec(p.b, p.t - p.tau_f, p.w)
            self.th_nc = channel.gain_threshold(nc, p.link(p.sigma_p_pd))
            return
        direct = TransmissionSpec(p.b, alloc.t_p, alloc.w_p)
        relay = TransmissionSpec(p.b, alloc.t_s, alloc.w_p)
        self.th_direct = channel.gain_threshold(direct, p.link(p.sigma_p_pd))
        self.th_ps = channel.gain_threshold(direct, p.link(p.sigma_p_s))
        self.th_spd = channel.gain_threshold(relay, p.link(p.sigma_s_pd))
        # SINR requirement on gains: a_pd >= req * (n0/p0 + a_spd)
        self.req = channel.snr_requirement(direct)
        self.delta_s = alloc.delta_s
        if alloc.w_p > 0:
            sp = sensing.SensingParams(p.tau_s, alloc.w_p, p.p0, p.n0, p.sigma_p_s, p.target_pfa)
            self.sensing = sp
            self.eps = sensing.detection_threshold(sp)
            self.p_fa = sensing.false_alarm_prob(sp, self.eps)
        else:
            self.sensing = None
            self.p_fa = p.target_pfa


def _slot_outcomes(cfg: SimConfig, th: _Thresholds, u: np.ndarray) -> dict[str, np.ndarray]:
    """Per-slot outcomes for a block of uniforms, both for a busy and an idle queue."""
    p = cfg.params
    # 1 - u lies in (0, 1], so the log is finite.
    gains = -np.log1p(-u[:, 1:5])
    a_pd = gains[:, 0] * p.sigma_p_pd
    a_ps = gains[:, 1] * p.sigma_p_s
    a_spd = gains[:, 2] * p.sigma_s_pd
    a_ssd = gains[:, 3] * p.sigma_s_sd
    n = u.shape[0]
    out = {"arrival": u[:, 0] < p.lambda_p}
    capacity = p.w * np.log2(1.0 + a_ssd * (p.p0 / p.n0))

    if cfg.protocol is Protocol.NC:
        direct_on = a_pd >= th.th_nc
        zeros = np.zeros(n, dtype=bool)
        out.update(
            success=direct_on,
            direct_on=direct_on,
            detected=zeros,
            relay=zeros,
            heard=zeros,
            false_alarm=zeros,
            bits_busy=np.zeros(n),
            bits_idle=np.zeros(n),
            energy_busy=np.zeros(n),
            energy_idle=np.zeros(n),
        )
        return out

    a = cfg.alloc
    d = th.delta_s
    a_sense = a_ps if cfg.correlated_sensing else -np.log1p(-u[:, 6]) * p.sigma_p_s
    if th.sensing is not None:
        p_detect = sensing.conditional_detection_prob(th.sensing, th.eps, a_sense)
    else:
        p_detect = sensing.zero_band_detection_prob(p.target_pfa, a_sense * (p.p0 / p.n0))
    detected = u[:, 5] < p_detect
    false_alarm = u[:, 5] < th.p_fa

    direct_on = a_pd >= th.th_direct
    ps_on = a_ps >= th.th_ps
    spd_on = a_spd >= th.th_spd
    if np.isinf(th.req):
        sinr_ok = np.zeros(n, dtype=bool)
    else:
        sinr_ok = a_pd >= th.req * (p.n0 / p.p0 + a_spd)

    if cfg.protocol is Protocol.P1:
        heard = np.zeros(n, dtype=bool)
        relay = detected & ps_on & spd_on
        feedback_time = p.tau_f
    else:
        heard = u[:, 7] < p.f
        nack = np.where(heard, ~direct_on, u[:, 8] < p.omega)
        relay = detected & ps_on & nack & spd_on
        feedback_time = 2.0 * p.tau_f
    success = np.where(detected, direct_on | relay, sinr_ok)

    # Bandwidth-weighted seconds (fractions of W) per slot.
    # Busy: W_s throughout; W_p too for the relay interval unless relaying.
    # Misdetection puts energy on W_p during [tau_s, T_p] but those bits are lost.
    own_busy = (p.tau_s + (a.t_p - p.tau_s) + feedback_time) * d + a.t_s * np.where(relay, d, 1.0)
    energy_busy = (p.tau_s + feedback_time) * d + (a.t_p - p.tau_s) * np.where(detected, d, 1.0) + a.t_s
    # Idle: everything but a false-alarmed [tau_s, T_p] uses the whole band.
    own_idle = p.tau_s * d + (a.t_p - p.tau_s) * np.where(false_alarm, d, 1.0) + a.t_s + feedback_time

    out.update(
        success=success,
        direct_on=direct_on,
        detected=detected,
        relay=relay,
        heard=heard & detected,
        false_alarm=false_alarm,
        bits_busy=own_busy * capacity,
        bits_idle=own_idle * capacity,
        energy_busy=energy_busy * p.w * p.p0,
        energy_idle=own_idle * p.w * p.p0,
    )
    return out


def _queue_scan(success: np.ndarray, arrival: np.ndarray):
    """Late-arrival queue: departure (if busy and served) precedes arrival."""
    n = success.size
    qlen = np.empty(n, dtype=np.int64)
    departures = []
    q = 0
    succ = success.tolist()
    arr = arrival.tolist()
    for t in range(n):
        qlen[t] = q
        if q and succ[t]:
            q -= 1
            departures.append(t)
        if arr[t]:
            q += 1
    return qlen, np.asarray(departures, dtype=np.int64), q


def _write_trace(stream, cfg, outcomes, qlen, busy, start, stop):
    for t in range(start, stop):
        b = bool(busy[t])
        if b:
            sensed = "detected" if outcomes["detected"][t] else "missed"
        else:
            sensed = "false_alarm" if outcomes["false_alarm"][t] else "true_idle"
        if cfg.protocol is Protocol.NC:
            sensed = "none"
        rec = SlotTrace(
            slot=t,
            queue_len_before=int(qlen[t]),
            arrival=int(outcomes["arrival"][t]),
            primary_tx=int(b),
            sensing_outcome=sensed,
            direct_success=int(b and outcomes["direct_on"][t]),
            relay_attempted=int(b and outcomes["relay"][t]),
            relay_success=int(b and outcomes["relay"][t]),
            feedback_heard=int(b and outcomes["heard"][t]),
            su_energy=float(outcomes["energy_busy"][t] if b else outcomes["energy_idle"][t]),
            su_bits=float(outcomes["bits_busy"][t] if b else outcomes["bits_idle"][t]),
        )
        stream.write(json.dumps(asdict(rec)) + "\n")


def run(config: SimConfig, trace=None, trace_slots: int | None = None) -> SimReport:
    """Simulate ``config.n_slots`` slots and estimate the protocol metrics.

    ``trace`` may be a writable text stream; one JSON object per slot (keys
    in :data:`SLOT_TRACE_FIELDS` order) is written for the first
    ``trace_slots`` slots (all slots if None).
    """
    cfg = config
    th = _Thresholds(cfg.params, cfg.protocol, cfg.alloc)
    gen = np.random.Generator(np.random.Philox(key=cfg.seed))
    parts: dict[str, list[np.ndarray]] = {}
    remaining = cfg.n_slots
    while remaining:
        m = min(CHUNK, remaining)
        block = _slot_outcomes(cfg, th, gen.random((m, DRAWS_PER_SLOT)))
        for k, v in block.items():
            parts.setdefault(k, []).append(v)
        remaining -= m
    outcomes = {k: np.concatenate(v) for k, v in parts.items()}

    qlen, departures, q_end = _queue_scan(outcomes["success"], outcomes["arrival"])
    busy = qlen > 0
    if trace is not None:
        stop = cfg.n_slots if trace_slots is None else min(trace_slots, cfg.n_slots)
        _write_trace(trace, cfg, outcomes, qlen, busy, 0, stop)

    w0 = cfg.warmup_slots
    window = slice(w0, None)
    busy_w = busy[window]
    served_w = busy_w & outcomes["success"][window]
    n_busy = int(busy_w.sum())
    notes = []
    if n_busy:
        mu = served_w.sum() / n_busy
        mu_est = Estimate(float(mu), float(math.sqrt(max(mu * (1 - mu), 0.0) / n_busy)))
    else:
        mu_est = Estimate(math.nan, math.nan)
        notes.append("no busy slots after warm-up; service rate undefined")

    bits = np.where(busy, outcomes["bits_busy"], outcomes["bits_idle"])[window]
    energy = np.where(busy, outcomes["energy_busy"], outcomes["energy_idle"])[window]

    # k-th departure belongs to the k-th arrival (FIFO); arrival in slot t
    # joins at t + 1, so an immediately served packet scores 1 slot.
    arrivals = np.flatnonzero(outcomes["arrival"])
    done = departures.size
    sojourn = departures - arrivals[:done]
    keep = arrivals[:done] >= w0
    delay_est = _batch_estimate(sojourn[keep].astype(float), cfg.batches)

    m = cfg.n_slots - w0
    lam = cfg.params.lambda_p
    growth = q_end - int(qlen[w0])
    diverged = growth > 5.0 * math.sqrt(m * lam * (1 - lam)) + 50
    if diverged:
        notes.append(f"queue grew by {growth} packets; primary queue looks unstable")

    return SimReport(
        mu_hat=mu_est,
        nu0_hat=_batch_estimate((~busy_w).astype(float), cfg.batches),
        delay_hat=delay_est,
        rate_hat=_batch_estimate(bits, cfg.batches),
        energy_hat=_batch_estimate(energy, cfg.batches),
        slots_used=m,
        busy_slots=n_busy,
        packets=int(keep.sum()),
        diverged=bool(diverged),
        notes=notes,
    )


def replication_seeds(seed: int, n_reps: int) -> list[int]:
    """Replication 0 keeps ``seed``; the others are spawned from it."""
    children = np.random.SeedSequence(seed).spawn(max(n_reps - 1, 0))
    return [seed] + [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _run_one(cfg):
    return run(cfg)


def replicate(config: SimConfig, n_reps: int, workers: int = 1) -> SimReport:
    """Independent replications aggregated by index order.

    Each value is the mean over replications and its error bar the
    standard error across them. With ``n_reps == 1`` this is :func:`run`.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    configs = [replace(config, seed=s) for s in replication_seeds(config.seed, n_reps)]
    if n_reps == 1:
        return run(configs[0])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, configs))
    else:
        reports = [run(c) for c in configs]

    def agg(name):
        vals = np.array([getattr(r, name).value for r in reports])
        return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_reps)))

    return SimReport(
        mu_hat=agg("mu_hat"),
        nu0_hat=agg("nu0_hat"),
        delay_hat=agg("delay_hat"),
        rate_hat=agg("rate_hat"),
        energy_hat=agg("energy_hat"),
        slots_used=sum(r.slots_used for r in reports),
        busy_slots=sum(r.busy_slots for r in reports),
        packets=sum(r.packets for r in reports),
        diverged=any(r.diverged for r in reports),
        replications=n_reps,
        notes=sorted({n for r in reports for n in r.notes}),
    )


@dataclass(frozen=True)
class Comparison:
    metric: str
    analytic: float
    simulated: float
    stderr: float
    z: float


def compare(metrics: ProtocolMetrics, report: SimReport) -> list[Comparison]:
    """Analytic value, simulated estimate and z-score for each shared metric."""
    rows = []
    pairs = (
        ("mu", metrics.mu_p, report.mu_hat),
        ("nu0", metrics.nu0, report.nu0_hat),
        ("delay", metrics.delay, report.delay_hat),
        ("rate", metrics.mean_rate, report.rate_hat),
        ("energy", metrics.mean_energy, report.energy_hat),
    )
    for name, ref, est in pairs:
        if math.isnan(est.value) or not math.isfinite(ref):
            continue
        rows.append(Comparison(name, float(ref), est.value, est.stderr, float(est.z(ref))))
    return rows
