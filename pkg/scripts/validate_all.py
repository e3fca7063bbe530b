"""Check closed forms against the slot simulator over a grid of operating points.

For each protocol and arrival rate the simulator runs at a fixed allocation
and the script prints the largest |z| seen. Exit status 4 if any exceeds 4.

    python scripts/validate_all.py [--preset fig1] [--slots 1000000]
"""

import argparse
import math
import sys

from cograte.config import PRESETS, load
from cograte.protocols import Allocation, evaluate
from cograte.simulator import SimConfig, compare, run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="fig1", choices=PRESETS)
    ap.add_argument("--slots", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--tp", type=float, default=0.5)
    ap.add_argument("--wp", type=float, default=0.5)
    ap.add_argument("--lambdas", default="0.1,0.3,0.5")
    args = ap.parse_args(argv)

    spec = load(preset=args.preset)
    worst = 0.0
    seed = args.seed
    for series in spec.series or [None]:
        base = series.params if series else spec.params
        label = series.label if series else ""
        for lam in (float(x) for x in args.lambdas.split(",")):
            p = base.replace(lambda_p=lam)
            for protocol in ("NC", "P1", "P2"):
                alloc = None if protocol == "NC" else Allocation.from_fractions(p, protocol, args.tp, args.wp)
                m = evaluate(p, alloc, protocol)
                if not m.stable:
                    print(f"{protocol}{label} lambda={lam:g}: unstable, skipped")
                    continue
                rep = run(SimConfig(p, protocol, alloc, n_slots=args.slots, seed=seed))
                seed += 1
                zs = [abs(c.z) if math.isfinite(c.z) else math.inf for c in compare(m, rep)]
                top = max(zs, default=0.0)
                worst = max(worst, top)
                print(f"{protocol}{label} lambda={lam:g}: max |z| = {top:.2f}")
    print(f"overall max |z| = {worst:.2f}")
    return 4 if worst > 4 else 0


if __name__ == "__main__":
    sys.exit(main())
