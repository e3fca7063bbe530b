import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cograte import channel
from cograte.numerics import q_function, q_inverse
from cograte.protocols import (
    Allocation,
    InvalidParamsError,
    LinkStats,
    Protocol,
    SystemParams,
    allocation_violations,
    delay_nc,
    energy_breakdown_p1,
    energy_breakdown_p2,
    evaluate,
    link_stats,
    mean_energy_p1,
    mean_energy_p2,
    mu_nc,
    mu_p1,
    mu_p2,
    secondary_rate_p1,
    secondary_rate_p2,
)
from cograte.queueing import UnstableQueueError
from cograte.sensing import SensingParams, misdetection_prob


def stats(**kw):
    base = dict(out_p_pd=0.7, out_p_s=0.2, out_s_pd=0.3, succ_p_pd_int=0.05, p_md=0.1, p_fa=0.1, gamma_f=0.7, beta=1.0)
    base.update(kw)
    return LinkStats(**base)


# ---- link statistics ------------------------------------------------------


def test_link_stats_mid_allocation_by_hand(common):
    # Spreadsheet-style evaluation of every field from the defining formulas.
    p = common
    a = Allocation.from_fractions(p, "P1", 0.5, 0.5)
    t_p, w_p, t_s = 0.5 * 4.75e-3, 5e6, 0.5 * 4.75e-3
    req_direct = 2 ** (5000 / (w_p * t_p)) - 1
    req_relay = 2 ** (5000 / (w_p * t_s)) - 1
    assert (a.t_p, a.w_p, a.t_s) == pytest.approx((t_p, w_p, t_s), rel=1e-15)
    s = link_stats(p, a)
    assert s.out_p_pd == pytest.approx(1 - math.exp(-0.1 * req_direct / 0.005), rel=1e-12)
    assert s.out_p_s == pytest.approx(1 - math.exp(-0.1 * req_direct / 1.0), rel=1e-12)
    assert s.out_s_pd == pytest.approx(1 - math.exp(-0.1 * req_relay / 0.1), rel=1e-12)
    assert s.succ_p_pd_int == pytest.approx(
        math.exp(-0.1 * req_direct / 0.005) / (1 + (0.1 / 0.005) * req_direct), rel=1e-12
    )
    n = 2 * w_p * 2.5e-4
    eps_ratio = q_inverse(0.1) / math.sqrt(n) + 1
    assert s.p_fa == pytest.approx(q_function(math.sqrt(n) * (eps_ratio - 1)), rel=1e-12)
    assert s.p_md == misdetection_prob(SensingParams(2.5e-4, w_p, 1e-10, 1e-11, 1.0, 0.1))
    assert s.gamma_f == pytest.approx(s.out_p_pd * 1.0 + 0.0)
    assert s.beta == 1.0


def test_link_stats_degenerate_split(common):
    a = Allocation.make(common, "P1", common.total_time("P1"), common.w)
    s = link_stats(common, a)
    assert a.t_s == 0.0
    assert s.out_s_pd == 1.0
    assert "s->pd" in s.saturated


def test_link_stats_strong_relay(common):
    a = Allocation.from_fractions(common, "P1", 0.5, 0.5)
    assert link_stats(common.replace(sigma_s_pd=1e15), a).out_s_pd < 1e-12


# ---- service rates ---------------------------------------------------------


def test_mu_nc_values(common):
    assert mu_nc(common) == pytest.approx(math.exp(-0.1 * (2 ** (5000 / 4.75e4) - 1) / 0.005), rel=1e-13)
    assert round(mu_nc(common), 4) == 0.2201
    assert mu_nc(common.replace(sigma_p_pd=1e15)) == pytest.approx(1.0)
    taus = np.linspace(0.0, 2e-3, 20)
    vals = [mu_nc(common.replace(tau_f=t)) for t in taus]
    assert np.all(np.diff(vals) < 0)


def test_mu_p1_limits():
    s = stats(p_md=0.0, out_p_s=1.0, out_s_pd=1.0)
    assert mu_p1(s) == pytest.approx(1 - s.out_p_pd)
    assert mu_p1(stats(p_md=1.0)) == pytest.approx(0.05)
    perfect = stats(out_p_pd=0.0, out_p_s=0.0, out_s_pd=0.0, p_md=0.0)
    assert mu_p1(perfect) == 1.0


def test_mu_p2_limits():
    s = stats()
    assert mu_p2(s) == mu_p1(s)
    f1 = SystemParams(f=1.0, omega=0.0)
    assert f1.beta == 1.0
    f0 = SystemParams(f=0.0, omega=0.0)
    assert f0.beta == 0.0
    s0 = stats(beta=f0.beta)
    assert mu_p2(s0) == pytest.approx((1 - 0.1) * (1 - 0.7) + 0.1 * 0.05)


prob = st.floats(0.0, 1.0)


@given(prob, prob, prob, prob, prob, prob)
def test_mu_ranges(o_pd, o_ps, o_spd, succ, p_md, beta):
    succ = min(succ, 1 - o_pd)
    s = stats(out_p_pd=o_pd, out_p_s=o_ps, out_s_pd=o_spd, succ_p_pd_int=succ, p_md=p_md, beta=beta)
    m1, m2 = mu_p1(s), mu_p2(s)
    assert 0.0 <= m2 <= m1 + 1e-15 <= 1.0 + 1e-15


def test_t_s_zero_drops_relay(common):
    a = Allocation.make(common, "P1", common.total_time("P1"), 0.5 * common.w)
    s = link_stats(common, a)
    expected = (1 - s.p_md) * (1 - s.out_p_pd) + s.p_md * s.succ_p_pd_int
    assert evaluate(common, a, "P1").mu_p == pytest.approx(expected, rel=1e-14)


# ---- rates and energy: phase bookkeeping oracle ---------------------------


def phase_oracle(p, a, s, protocol):
    """Sum of (duration x band fraction x probability) over the slot phases.

    Returns bandwidth-weighted seconds of SU transmission for empty and busy
    slots and the energy-weighted equivalents.
    """
    d = a.w_s / p.w
    k = 1 if protocol == "P1" else 2
    fb = k * p.tau_f
    sense = p.tau_s
    mid = a.t_p - p.tau_s
    empty = [
        (sense, d, 1.0),
        (mid, d, s.p_fa),
        (mid, 1.0, 1 - s.p_fa),
        (a.t_s, 1.0, 1.0),
        (fb, 1.0, 1.0),
    ]
    own_busy = [(sense + mid + fb, d, 1.0)]
    relay = (1 - s.p_md) * (1 - s.out_p_s) * (1 - s.out_s_pd)
    if protocol == "P2":
        relay *= s.gamma_f
    own_busy += [(a.t_s, d, relay), (a.t_s, 1.0, 1 - relay)]
    energy_busy = [
        (sense + fb, d, 1.0),
        (mid, d, 1 - s.p_md),
        (mid, 1.0, s.p_md),
        (a.t_s, 1.0, 1.0),
    ]
    total = lambda phases: sum(t * f * q for t, f, q in phases)
    return total(empty), total(own_busy), total(energy_busy)


@pytest.mark.parametrize("protocol", ["P1", "P2"])
@pytest.mark.parametrize("tp,wp", [(0.5, 0.5), (0.2, 0.9), (0.9, 0.1)])
def test_rates_and_energy_against_phase_oracle(common, protocol, tp, wp):
    p = common.replace(lambda_p=0.1, f=0.7)
    a = Allocation.from_fractions(p, protocol, tp, wp)
    s = link_stats(p, a)
    g = channel.expected_log_capacity(p.link(p.sigma_s_sd))
    empty, busy, e_busy = phase_oracle(p, a, s, protocol)
    rate_fn = secondary_rate_p1 if protocol == "P1" else secondary_rate_p2
    energy_fn = energy_breakdown_p1 if protocol == "P1" else energy_breakdown_p2
    r = rate_fn(p, a, s, g, nu0=0.37)
    e = energy_fn(p, a, s, nu0=0.37)
    assert r.rate_empty == pytest.approx(empty * p.w * g, rel=1e-13)
    assert r.rate_busy == pytest.approx(busy * p.w * g, rel=1e-13)
    assert r.mean_rate == pytest.approx((0.37 * empty + 0.63 * busy) * p.w * g, rel=1e-13)
    assert e.energy_empty == pytest.approx(empty * p.w * p.p0, rel=1e-13)
    assert e.energy_busy == pytest.approx(e_busy * p.w * p.p0, rel=1e-13)


def test_full_band_secondary_rate(common):
    a = Allocation.make(common, "P1", 0.5 * common.total_time("P1"), 0.0)
    s = link_stats(common, a)
    g = channel.expected_log_capacity(common.link(common.sigma_s_sd))
    r = secondary_rate_p1(common, a, s, g)
    assert r.rate_empty == pytest.approx(common.t * common.w * g, rel=1e-14)
    assert r.mean_rate == r.rate_empty  # lambda_p = 0


def test_mean_rate_at_zero_arrivals(common):
    for protocol in ("P1", "P2"):
        a = Allocation.from_fractions(common, protocol, 0.4, 0.6)
        m = evaluate(common, a, protocol)
        assert m.nu0 == 1.0
        assert m.mean_rate == m.rate_empty


def test_p2_busy_rate_limits(common):
    a = Allocation.from_fractions(common, "P2", 0.5, 0.5)
    g = 1.0
    s = stats(gamma_f=1.0, p_md=0.0)
    # Always-NACK: P2 busy equals P1 busy with the feedback time doubled.
    p1_equiv = common.replace(tau_f=2 * common.tau_f)
    a1 = Allocation(a.t_p, a.w_p, a.t_s, a.w_s)
    assert secondary_rate_p2(common, a, s, g, nu0=0.0).rate_busy == pytest.approx(
        secondary_rate_p1(p1_equiv, a1, s, g, nu0=0.0).rate_busy, rel=1e-14
    )
    # Destination always decodes and feedback is heard: no relaying at all.
    p = common.replace(f=1.0)
    s0 = stats(out_p_pd=0.0, gamma_f=0.0 * 1.0 + 0.0)
    busy = secondary_rate_p2(p, a, s0, g, nu0=0.0).rate_busy
    d = a.delta_s
    expected = ((2 * p.tau_f + a.t_p) * d + a.t_s) * p.w
    assert busy == pytest.approx(expected, rel=1e-14)


def test_energy_identities(common):
    # delta_s = 1: the SU is on over the whole band for the whole slot.
    for protocol, fn in (("P1", mean_energy_p1), ("P2", mean_energy_p2)):
        p = common.replace(lambda_p=0.1)
        a = Allocation.make(p, protocol, 0.6 * p.total_time(protocol), 0.0)
        for p_md in (0.0, 0.4, 1.0):
            s = stats(p_md=p_md)
            assert fn(p, a, s, nu0=0.3) == pytest.approx(p.t * p.w * p.p0, rel=1e-14)
    # lambda = 0, no false alarms, no released band.
    for protocol, fn, k in (("P1", mean_energy_p1, 1), ("P2", mean_energy_p2, 2)):
        a = Allocation.make(common, protocol, 0.6 * common.total_time(protocol), common.w)
        s = stats(p_fa=0.0)
        expected = (a.t_p - common.tau_s + a.t_s + k * common.tau_f) * common.w * common.p0
        assert fn(common, a, s) == pytest.approx(expected, rel=1e-14)


def test_unstable_mean_raises(common):
    p = common.replace(lambda_p=0.9)
    a = Allocation.from_fractions(p, "P1", 0.5, 0.5)
    s = link_stats(p, a)
    with pytest.raises(UnstableQueueError):
        secondary_rate_p1(p, a, s, 1.0)
    with pytest.raises(UnstableQueueError):
        mean_energy_p1(p, a, s)


# ---- evaluate ---------------------------------------------------------------


def test_evaluate_nc(common):
    p = common.replace(lambda_p=0.1)
    m = evaluate(p, None, "NC")
    assert m.mu_p == mu_nc(p)
    assert m.delay == pytest.approx((1 - 0.1) / (mu_nc(p) - 0.1), rel=1e-14)
    assert m.delay == delay_nc(p)
    assert m.feasible and m.mean_rate == 0.0
    assert evaluate(p, Allocation.from_fractions(p, "P1", 0.5, 0.5), "NC") == m
    unstable = evaluate(common.replace(lambda_p=0.3), None, Protocol.NC)
    assert not unstable.feasible and unstable.delay == math.inf and unstable.nu0 == 0.0


def test_evaluate_mid_allocation(common):
    p = common.replace(lambda_p=0.2)
    a = Allocation.from_fractions(p, "P1", 0.5, 0.5)
    m = evaluate(p, a, "P1")
    assert m.feasible, m.violations
    assert m.mu_p > max(mu_nc(p), 0.2)
    assert m.delay < delay_nc(p)
    assert m.mean_energy <= p.energy_budget


def test_evaluate_flags_infeasible(common):
    p = common.replace(lambda_p=0.2)
    # No primary band: the PU can never deliver.
    a = Allocation.from_fractions(p, "P1", 0.5, 0.0)
    m = evaluate(p, a, "P1")
    assert not m.feasible and not m.stable
    assert m.delay == math.inf
    tight = evaluate(p.replace(energy_budget=1e-7), Allocation.from_fractions(p, "P1", 0.5, 0.5), "P1")
    assert "SU energy above budget" in tight.violations


def test_allocation_box(common):
    assert allocation_violations(common, "P1", Allocation.from_fractions(common, "P1", 0.5, 0.5)) == []
    bad = Allocation.make(common, "P1", 0.5 * common.tau_s, 0.5 * common.w)
    assert allocation_violations(common, "P1", bad)


def test_grid_ranges(common):
    for protocol in ("P1", "P2"):
        tp, wp = np.meshgrid(np.linspace(common.tau_s, common.total_time(protocol), 50), np.linspace(0, common.w, 50))
        a = Allocation.make(common.replace(lambda_p=0.1), protocol, tp, wp)
        for lam in (0.0, 0.1):
            p = common.replace(lambda_p=lam)
            for i in range(0, 50, 7):
                for j in range(0, 50, 7):
                    pt = Allocation(a.t_p[i, j], a.w_p[i, j], a.t_s[i, j], a.w_s[i, j])
                    m = evaluate(p, pt, protocol)
                    assert 0.0 <= m.mu_p <= 1.0
                    assert m.mean_rate >= 0.0 and m.mean_energy >= 0.0
                    assert m.mean_energy <= p.t * p.w * p.p0 * (1 + 1e-12)


def test_vectorised_matches_scalar(common):
    tp = np.array([0.3, 0.6]) * common.total_time("P2")
    wp = np.array([0.2, 0.8]) * common.w
    grid = Allocation.make(common, "P2", tp, wp)
    s = link_stats(common, grid)
    for k in range(2):
        one = Allocation.make(common, "P2", float(tp[k]), float(wp[k]))
        s1 = link_stats(common, one)
        assert mu_p2(s)[k] == pytest.approx(mu_p2(s1), rel=1e-14)


@pytest.mark.parametrize(
    "changes",
    [{"tau_s": 5e-3}, {"tau_f": -1.0}, {"tau_s": 3e-3, "tau_f": 2.5e-3}, {"f": 1.5}, {"target_pfa": 0.0}, {"w": 0.0}],
)
def test_params_validation(changes):
    with pytest.raises(InvalidParamsError):
        SystemParams(**changes)


def test_protocol_parsing():
    assert Protocol("P1") is Protocol.P1
    assert str(Protocol.NC) == "NC"
    assert dataclasses.replace(SystemParams(), f=0.5).beta == 0.5 + 0.5 * 1.0
