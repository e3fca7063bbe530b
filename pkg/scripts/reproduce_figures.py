"""Run the optimiser for every bundled preset and write one CSV per preset.

    python scripts/reproduce_figures.py [--outdir results] [--grid 200x200]
"""

import argparse
import pathlib
import sys
import time

from cograte.cli import main as cli_main
from cograte.config import PRESETS


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--grid", default=None, help="override the preset grid, e.g. 50x50")
    args = ap.parse_args(argv)
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name in PRESETS:
        t0 = time.perf_counter()
        cmd = ["optimize", "--preset", name, "--out", str(outdir / f"{name}.csv")]
        if args.grid:
            cmd += ["--grid", args.grid]
        code = cli_main(cmd)
        if code:
            return code
        print(f"{name}: {outdir / f'{name}.csv'} ({time.perf_counter() - t0:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
