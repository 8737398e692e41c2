"""Steady-state truncation study for one recipe at fixed pump settings.

Usage::

    python scripts/convergence_study.py steady --trunc 2,30 3,30 3,35 4,35
    python scripts/convergence_study.py fig4a --variant 1e5 --set pump.offset=-0.0558 --trunc 2,10 3,10 4,14

Prints phonon and photon numbers and phonon g2(0) for each (N_c, N_m), with
the relative change of the phonon number against the last (largest) entry.
"""

import argparse
import time

from hybridom import cli
from hybridom.analysis import steady_observables
from hybridom.config import load_config
from hybridom.core import SpaceLayout


def parse_trunc(text: str) -> tuple[int, int]:
    nc, nm = text.split(",")
    return int(nc), int(nm)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("recipe", help="recipe name or TOML path")
    ap.add_argument("--trunc", nargs="+", type=parse_trunc, required=True, metavar="NC,NM")
    ap.add_argument("--variant", type=float, default=None, help="value of the recipe's variant axis")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)

    path = args.recipe if args.recipe.endswith(".toml") else str(cli.recipe_path(args.recipe))
    cfg = load_config(path, args.overrides)
    params = cfg.resolved_params(args.variant)
    print(f"omega_p = {params.omega_p:.6f}, F_p = {params.F_p:g}, n_th = {params.n_th:g}")

    rows = []
    for nc, nm in args.trunc:
        t0 = time.perf_counter()
        obs = steady_observables(params, SpaceLayout.tripartite(nc, nm))
        rows.append((nc, nm, obs, time.perf_counter() - t0))
        g2 = obs["g2_phonon"]
        print(f"N_c={nc} N_m={nm:3d}  n_phonon={obs['n_phonon']:.6f}  n_photon={obs['n_photon']:.6f}  "
              f"g2_phonon={'nan' if g2 is None else f'{g2:.4f}'}  ({rows[-1][3]:.1f}s)", flush=True)
    ref = rows[-1][2]["n_phonon"]
    for nc, nm, obs, _ in rows[:-1]:
        print(f"({nc},{nm}) vs ({rows[-1][0]},{rows[-1][1]}): rel. change {abs(obs['n_phonon'] - ref) / abs(ref):.2e}")


if __name__ == "__main__":
    main()
