"""Command-line front end: ``evaluate``, ``optimize`` and ``validate``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 analytic and simulated values disagree (some |z| > 4).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys

from . import config as cfgmod
from .config import ConfigError, InvariantError
from .optimizer import GridSpec, savings_ratio, sweep_lambda
from .protocols import Allocation, Protocol, allocation_violations, evaluate, link_stats, mu_nc
from .simulator import SimConfig, compare, replicate, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_MISMATCH = 4
Z_LIMIT = 4.0

SWEEP_COLUMNS = ("lambda", "protocol", "t_p", "w_p", "mu", "delay", "rate", "energy", "phi", "feasible")
VALIDATE_COLUMNS = ("lambda", "protocol", "metric", "analytic", "simulated", "stderr", "z")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    return f"{float(value):.6g}"


def write_csv(path: str | None, columns, rows, stream=None):
    """Rows as fixed-format CSV (LF endings) to ``path`` or ``stream``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    if path is None:
        (stream or sys.stdout).write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _parse_grid(text: str) -> GridSpec:
    try:
        n_t, n_w = (int(v) for v in text.lower().split("x"))
        return GridSpec(n_t, n_w)
    except ValueError:
        raise ConfigError(f"--grid expects NxM with N, M >= 2, got {text!r}") from None


def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _load(args) -> cfgmod.ExperimentSpec:
    overrides = _parse_sets(args.set)
    if args.lambda_ is not None:
        overrides["sweep.lambdas"] = args.lambda_
    if args.protocol is not None:
        overrides["sweep.protocols"] = args.protocol
    return cfgmod.load(args.config, args.preset, overrides)


def _allocation(params, protocol, tp: float, wp: float) -> Allocation:
    alloc = Allocation.from_fractions(params, protocol, tp, wp)
    problems = allocation_violations(params, protocol, alloc)
    if problems:
        raise InvariantError(f"allocation t_p={tp:g}, w_p={wp:g} (fractions): " + "; ".join(problems))
    return alloc


def _nc_row(params, lam, label, feasible_flag=None):
    m = evaluate(params.replace(lambda_p=lam), None, Protocol.NC)
    return {
        "lambda": lam,
        "protocol": label,
        "t_p": params.t - params.tau_f,
        "w_p": params.w,
        "mu": m.mu_p,
        "delay": m.delay,
        "rate": 0.0,
        "energy": 0.0,
        "phi": 0.0,
        "feasible": m.feasible if feasible_flag is None else feasible_flag,
    }


def cmd_evaluate(args) -> int:
    spec = _load(args)
    rows = []
    out = sys.stdout
    for series in spec.series:
        base = series.params
        print(f"# series{series.label or ' (base)'}", file=out)
        print(f"mu_nc = {mu_nc(base):.4f}", file=out)
        for lam in spec.lambdas:
            params = base.replace(lambda_p=lam)
            for protocol in spec.protocols:
                label = f"{protocol}{series.label}"
                if protocol is Protocol.NC:
                    row = _nc_row(params, lam, label)
                    extra = {}
                else:
                    alloc = _allocation(params, protocol, args.tp, args.wp)
                    m = evaluate(params, alloc, protocol)
                    phi = savings_ratio(params, alloc, m.mu_p, lam) if m.feasible else 0.0
                    row = {
                        "lambda": lam,
                        "protocol": label,
                        "t_p": alloc.t_p,
                        "w_p": alloc.w_p,
                        "mu": m.mu_p,
                        "delay": m.delay,
                        "rate": m.mean_rate,
                        "energy": m.mean_energy,
                        "phi": phi,
                        "feasible": m.feasible,
                    }
                    st = link_stats(params, alloc)
                    extra = {
                        "nu0": m.nu0,
                        "rate_empty": m.rate_empty,
                        "rate_busy": m.rate_busy,
                        "out_p_pd": st.out_p_pd,
                        "out_p_s": st.out_p_s,
                        "out_s_pd": st.out_s_pd,
                        "succ_p_pd_int": st.succ_p_pd_int,
                        "p_md": st.p_md,
                        "p_fa": st.p_fa,
                        "gamma_f": st.gamma_f,
                        "beta": st.beta,
                    }
                    if m.violations:
                        extra["violations"] = "; ".join(m.violations)
                rows.append(row)
                print(f"[{label} lambda={fmt(lam)}]", file=out)
                for key in SWEEP_COLUMNS[2:]:
                    print(f"  {key} = {fmt(row[key])}", file=out)
                for key, value in extra.items():
                    print(f"  {key} = {fmt(value)}", file=out)
    if args.out:
        write_csv(args.out, SWEEP_COLUMNS, rows)
    return EXIT_OK


def optimize_rows(spec: cfgmod.ExperimentSpec, grid: GridSpec) -> list[dict]:
    """Sweep rows ordered by series, then arrival rate, then protocol."""
    rows = []
    for series in spec.series:
        params = series.params
        by_protocol = {
            p: sweep_lambda(params, p, spec.lambdas, grid) for p in spec.protocols if p is not Protocol.NC
        }
        for k, lam in enumerate(spec.lambdas):
            for protocol in spec.protocols:
                label = f"{protocol}{series.label}"
                if protocol is Protocol.NC:
                    rows.append(_nc_row(params, lam, label))
                    continue
                sweep = by_protocol[protocol][k]
                res = sweep.result
                if not res.feasible:
                    # No access for the SU; the PU keeps the whole band.
                    rows.append(_nc_row(params, lam, label, feasible_flag=False))
                    continue
                m = res.best_metrics
                rows.append(
                    {
                        "lambda": lam,
                        "protocol": label,
                        "t_p": res.best_alloc.t_p,
                        "w_p": res.best_alloc.w_p,
                        "mu": m.mu_p,
                        "delay": m.delay,
                        "rate": m.mean_rate,
                        "energy": m.mean_energy,
                        "phi": sweep.phi,
                        "feasible": True,
                    }
                )
    return rows


def cmd_optimize(args) -> int:
    spec = _load(args)
    grid = _parse_grid(args.grid) if args.grid else spec.grid
    rows = optimize_rows(spec, grid)
    write_csv(args.out, SWEEP_COLUMNS, rows)
    if args.out:
        print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _load(args)
    if args.slots <= args.warmup:
        raise ConfigError("--slots must exceed --warmup")
    rows = []
    worst = 0.0
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        for series in spec.series:
            for lam in spec.lambdas:
                params = series.params.replace(lambda_p=lam)
                for protocol in spec.protocols:
                    label = f"{protocol}{series.label}"
                    alloc = None if protocol is Protocol.NC else _allocation(params, protocol, args.tp, args.wp)
                    metrics = evaluate(params, alloc, protocol)
                    if not metrics.stable and not args.allow_unstable:
                        raise InvariantError(
                            f"{label} at lambda={lam:g}: queue unstable (mu={metrics.mu_p:.6g}); pass --allow-unstable"
                        )
                    if args.perturb_mu:
                        metrics = dataclasses.replace(metrics, mu_p=metrics.mu_p + args.perturb_mu)
                    sim = SimConfig(params, protocol, alloc, n_slots=args.slots, seed=args.seed, warmup_slots=args.warmup)
                    if trace_fh is not None:
                        run(sim, trace=trace_fh, trace_slots=args.trace_slots)
                    report = replicate(sim, args.reps, workers=args.workers)
                    print(f"[{label} lambda={fmt(lam)}] slots={report.slots_used} reps={report.replications}")
                    for note in report.notes:
                        print(f"  note: {note}")
                    print(f"  {'metric':<8}{'analytic':>14}{'simulated':>14}{'stderr':>12}{'z':>9}")
                    for c in compare(metrics, report):
                        flag = "  MISMATCH" if abs(c.z) > Z_LIMIT else ""
                        print(f"  {c.metric:<8}{fmt(c.analytic):>14}{fmt(c.simulated):>14}{fmt(c.stderr):>12}{c.z:>9.2f}{flag}")
                        worst = max(worst, abs(c.z) if math.isfinite(c.z) else math.inf)
                        rows.append(
                            {
                                "lambda": lam,
                                "protocol": label,
                                "metric": c.metric,
                                "analytic": c.analytic,
                                "simulated": c.simulated,
                                "stderr": c.stderr,
                                "z": c.z,
                            }
                        )
    finally:
        if trace_fh is not None:
            trace_fh.close()
    if args.out:
        write_csv(args.out, VALIDATE_COLUMNS, rows)
    ok = worst <= Z_LIMIT
    print(f"max |z| = {worst:.2f}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cograte", description="Cooperative cognitive relaying: analysis, optimisation, simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="config file (section.key = value lines)")
        p.add_argument("--preset", choices=cfgmod.PRESETS, help="use a bundled figure preset instead of a file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
        p.add_argument("--protocol", help="comma-separated subset of NC,P1,P2")
        p.add_argument("--lambda", dest="lambda_", metavar="L", help="arrival rate(s), comma-separated")
        p.add_argument("--out", help="CSV output path")

    def alloc_args(p):
        p.add_argument("--tp", type=float, default=0.5, help="T_p as a fraction of the usable slot time")
        p.add_argument("--wp", type=float, default=0.5, help="W_p as a fraction of W")

    ev = sub.add_parser("evaluate", help="closed-form metrics at one allocation")
    common(ev)
    alloc_args(ev)
    ev.set_defaults(func=cmd_evaluate)

    op = sub.add_parser("optimize", help="rate-maximising allocation for each arrival rate")
    common(op)
    op.add_argument("--grid", metavar="NxM", help="grid points along T_p and W_p (default from config, 200x200)")
    op.set_defaults(func=cmd_optimize)

    va = sub.add_parser("validate", help="compare closed forms with the slot simulator")
    common(va)
    alloc_args(va)
    va.add_argument("--slots", type=int, default=1_000_000)
    va.add_argument("--warmup", type=int, default=10_000)
    va.add_argument("--reps", type=int, default=1)
    va.add_argument("--seed", type=int, default=0)
    va.add_argument("--workers", type=int, default=1)
    va.add_argument("--allow-unstable", action="store_true")
    va.add_argument("--trace", metavar="PATH", help="write per-slot JSON lines of the first replication")
    va.add_argument("--trace-slots", type=int, default=None, metavar="N")
    va.add_argument("--perturb-mu", type=float, default=0.0, help=argparse.SUPPRESS)
    va.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        # Remaining value errors come from parameter checks deeper down.
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
