"""Grid search for the rate-maximising (T_p, W_p) split and the PU energy savings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel, queueing
from .protocols import (
    STRICT_GUARD,
    Allocation,
    Protocol,
    ProtocolMetrics,
    SystemParams,
    cooperative_components,
    long_run_empty_prob,
    mu_nc,
    strictly_greater,
)


@dataclass(frozen=True)
class GridSpec:
    n_t: int = 200
    n_w: int = 200

    def __post_init__(self):
        if self.n_t < 2 or self.n_w < 2:
            raise ValueError("grid needs at least 2 points per axis")


def grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    """Uniform closed grid. Points of an n-grid reappear bit-identically in
    any (k(n-1)+1)-grid because ``i / (n-1)`` is a correctly rounded ratio."""
    return lo + (hi - lo) * (np.arange(n) / (n - 1))


@dataclass
class GridEvaluation:
    """Per-point metrics; arrays are indexed ``[i_t, j_w]``."""

    t_p: np.ndarray
    w_p: np.ndarray
    mu: np.ndarray
    nu0: np.ndarray
    delay: np.ndarray
    mean_rate: np.ndarray
    mean_energy: np.ndarray
    feasible: np.ndarray


@dataclass
class OptResult:
    protocol: Protocol
    lambda_p: float
    mu_nc: float
    best_alloc: Allocation | None
    best_metrics: ProtocolMetrics | None
    feasible_count: int
    grid: GridEvaluation | None = None

    @property
    def feasible(self) -> bool:
        return self.best_alloc is not None

    @property
    def best_rate(self) -> float:
        """Optimal SU rate; 0 when the SU is denied access."""
        return self.best_metrics.mean_rate if self.best_metrics is not None else 0.0


class GridModel:
    """Lambda-independent part of a grid search, reused across a sweep."""

    def __init__(self, params: SystemParams, protocol, grid: GridSpec):
        protocol = Protocol(protocol)
        if protocol is Protocol.NC:
            raise ValueError("the non-cooperative baseline has nothing to optimise")
        self.params = params
        self.protocol = protocol
        self.grid = grid
        total = params.total_time(protocol)
        if params.tau_s > total:
            raise ValueError("sensing time exceeds the usable slot time")
        self.t_axis = grid_axis(params.tau_s, total, grid.n_t)
        self.w_axis = grid_axis(0.0, params.w, grid.n_w)
        tp, wp = np.meshgrid(self.t_axis, self.w_axis, indexing="ij")
        self.alloc = Allocation.make(params, protocol, tp, wp)
        self.g = channel.expected_log_capacity(params.link(params.sigma_s_sd))
        self.stats, self.mu, self.rates, self.energy = cooperative_components(params, protocol, self.alloc, self.g)
        self.mu_nc = mu_nc(params)

    def evaluate(self, lambda_p: float) -> GridEvaluation:
        mu = np.asarray(self.mu)
        nu0 = np.asarray(long_run_empty_prob(lambda_p, mu))
        rate = nu0 * self.rates.rate_empty + (1.0 - nu0) * self.rates.rate_busy
        energy = nu0 * self.energy.energy_empty + (1.0 - nu0) * self.energy.energy_busy
        feasible = (
            strictly_greater(mu, max(self.mu_nc, lambda_p))
            & (energy >= 0.0)
            & (energy <= self.params.energy_budget * (1.0 + STRICT_GUARD))
        )
        return GridEvaluation(
            t_p=np.asarray(self.alloc.t_p),
            w_p=np.asarray(self.alloc.w_p),
            mu=mu,
            nu0=nu0,
            delay=np.asarray(queueing.mean_delay_array(lambda_p, mu)),
            mean_rate=rate,
            mean_energy=energy,
            feasible=feasible,
        )

    def _metrics_at(self, ev: GridEvaluation, i: int, j: int) -> ProtocolMetrics:
        return ProtocolMetrics(
            protocol=self.protocol,
            mu_p=float(ev.mu[i, j]),
            nu0=float(ev.nu0[i, j]),
            delay=float(ev.delay[i, j]),
            mean_rate=float(ev.mean_rate[i, j]),
            mean_energy=float(ev.mean_energy[i, j]),
            rate_empty=float(self.rates.rate_empty[i, j]),
            rate_busy=float(self.rates.rate_busy[i, j]),
            stable=True,
            feasible=True,
        )

    def solve(self, lambda_p: float, keep_grid: bool = False) -> OptResult:
        ev = self.evaluate(lambda_p)
        count = int(ev.feasible.sum())
        best_alloc = best_metrics = None
        if count:
            rate = np.where(ev.feasible, ev.mean_rate, -np.inf)
            top = rate == rate.max()
            # Ties: keep more primary bandwidth, then more primary time.
            j = int(np.flatnonzero(top.any(axis=0)).max())
            i = int(np.flatnonzero(top[:, j]).max())
            best_alloc = Allocation(
                t_p=float(self.alloc.t_p[i, j]),
                w_p=float(self.alloc.w_p[i, j]),
                t_s=float(self.alloc.t_s[i, j]),
                w_s=float(self.alloc.w_s[i, j]),
            )
            best_metrics = self._metrics_at(ev, i, j)
        return OptResult(
            protocol=self.protocol,
            lambda_p=lambda_p,
            mu_nc=self.mu_nc,
            best_alloc=best_alloc,
            best_metrics=best_metrics,
            feasible_count=count,
            grid=ev if keep_grid else None,
        )


def optimize(params: SystemParams, protocol, grid: GridSpec = GridSpec(), keep_grid: bool = False) -> OptResult:
    """Maximise the mean SU rate over the (T_p, W_p) grid at ``params.lambda_p``.

    Returns a result with ``best_alloc=None`` when no grid point meets the
    primary service-rate and SU energy constraints; the SU then gets no
    access to the band.
    """
    return GridModel(params, protocol, grid).solve(params.lambda_p, keep_grid=keep_grid)


def savings_ratio(params: SystemParams, alloc: Allocation, mu_coop: float, lambda_p: float) -> float:
    """PU energy saved relative to transmitting alone over W for T - tau_f.

    ``1 - (W_p T_p) / (W (T - tau_f)) * max(mu_nc, lambda) / mu_coop``: each
    cooperative attempt costs the share ``W_p T_p`` of a non-cooperative one,
    and fewer attempts are needed per packet.
    """
    share = (alloc.w_p * alloc.t_p) / (params.w * (params.t - params.tau_f))
    return 1.0 - share * max(mu_nc(params), lambda_p) / mu_coop


def energy_savings(params: SystemParams, protocol, best: OptResult) -> float:
    """Energy savings at the optimum; zero when cooperation is infeasible."""
    if best.best_alloc is None:
        return 0.0
    return savings_ratio(params, best.best_alloc, best.best_metrics.mu_p, best.lambda_p)


@dataclass(frozen=True)
class SweepRow:
    lambda_p: float
    result: OptResult
    phi: float


def sweep_lambda(params: SystemParams, protocol, lambdas, grid: GridSpec = GridSpec()) -> list[SweepRow]:
    """One optimisation per arrival rate, in input order.

    Link statistics do not depend on the arrival rate, so the grid is
    built once and re-scored for each value.
    """
    lambdas = list(lambdas)
    if not lambdas:
        return []
    model = GridModel(params, protocol, grid)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"arrival rate {lam} outside [0, 1]")
        res = model.solve(lam)
        rows.append(SweepRow(lam, res, energy_savings(params.replace(lambda_p=lam), protocol, res)))
    return rows
