"""Run shipped recipes through the command-line entry point.

Usage::

    python scripts/run_recipes.py                 # every recipe
    python scripts/run_recipes.py fig5 fig6a      # a selection
    python scripts/run_recipes.py --outdir results --format json --workers 1

Each recipe writes ``<outdir>/<name>.<format>`` plus a ``.md`` sidecar with
the expected qualitative features. Exit status is the worst exit code seen.
"""

import argparse
import sys
import time
from pathlib import Path

from hybridom import cli
from hybridom.config import load_config


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="recipe names (default: all)")
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)

    names = args.names or cli.recipe_names()
    unknown = sorted(set(names) - set(cli.recipe_names()))
    if unknown:
        ap.error(f"unknown recipes: {', '.join(unknown)}")
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)

    worst = 0
    for name in names:
        task = load_config(str(cli.recipe_path(name))).task
        target = out / f"{name}.{args.format}"
        argv_run = [task, name, "--out", str(target), "--format", args.format, "--workers", str(args.workers)]
        for o in args.overrides:
            argv_run += ["--set", o]
        t0 = time.perf_counter()
        code = cli.main(argv_run)
        print(f"{name:8s} {task:11s} exit={code} {time.perf_counter() - t0:8.1f}s -> {target}", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
