"""Command-line front end.

    hybridom <task> <config> [--set key=value]... [--workers N] [--out path] [--format csv|json]

``<config>`` is a TOML file or the name of a shipped recipe.  Exit codes:
0 ok, 2 configuration error, 3 solver failure, 4 truncation audit failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    classify_g2,
    default_fft_grid,
    g2_equal_time,
    g2_spectrum,
    g2_tau,
    joint_density,
    log_tau_grid,
    steady_observables,
    sweep_steady,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    config_from_fingerprint,
    load_config,
    parse_config,
    with_truncation,
)
from .core import Ops, SpaceLayout
from .lindblad import PositivityError, SolverError, liouvillian, steady_state
from .model import UnsupportedConfiguration, analytic_spectrum, numeric_levels_by_block

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4
AUDIT_THRESHOLD = 0.01
RUN_TASKS = ("spectrum", "steady", "sweep", "g2tau", "g2spectrum", "djos")
ALL_TASKS = RUN_TASKS + ("audit_truncation", "list_recipes")


@dataclass
class Table:
    """Rows of one task run; the column schema is fixed per task."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    headline: str = ""


# --- task runners --------------------------------------------------------------------------------

def _layout(cfg: ExperimentConfig) -> SpaceLayout:
    return SpaceLayout.tripartite(cfg.truncation.n_cavity, cfg.truncation.n_mech)


def _variant_cols(cfg: ExperimentConfig) -> list[str]:
    return [] if cfg.variants is None else [cfg.variants.name]


def _vprefix(cfg, v) -> list:
    return [] if v is None else [v]


def run_spectrum(cfg: ExperimentConfig) -> Table:
    spec = cfg.spectrum
    layout = _layout(cfg)
    axis = spec.axis
    cols = _variant_cols(cfg) + ([axis.name] if axis else []) + ["n", "level_index", "label", "E_analytic", "E_numeric"]
    table = Table(cols, headline="E_numeric")
    from .analysis import apply_axis

    for v in cfg.variant_values():
        base = cfg.resolved_params(v)
        points = axis.values() if axis else [None]
        for x in points:
            p = base if x is None else apply_axis(base, axis.name, x)
            numeric = numeric_levels_by_block(p, layout)
            levels = analytic_spectrum(p, spec.n_max, spec.levels)
            for n in range(spec.n_max + 1):
                ana = sorted((lv for lv in levels if lv.n == n), key=lambda lv: lv.energy)[: spec.levels]
                num = np.sort(numeric.get(n, np.array([])))
                for i, lv in enumerate(ana):
                    e_num = float(num[i]) if i < num.size else math.nan
                    table.rows.append(_vprefix(cfg, v) + ([x] if axis else []) + [n, i, lv.label, lv.energy, e_num])
    return table


STEADY_COLS = ["n_phonon", "n_photon", "g2_phonon", "g2_photon", "g2_phonon_class", "min_eigenvalue"]


def run_steady(cfg: ExperimentConfig) -> Table:
    layout = _layout(cfg)
    table = Table(_variant_cols(cfg) + STEADY_COLS, headline="n_phonon")
    for v in cfg.variant_values():
        obs = steady_observables(cfg.resolved_params(v), layout)
        table.rows.append(_vprefix(cfg, v) + [obs["n_phonon"], obs["n_photon"], obs["g2_phonon"], obs["g2_photon"],
                                              classify_g2(obs["g2_phonon"]), obs["min_eig"]])
    return table


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> Table:
    layout = _layout(cfg)
    sw = cfg.sweep
    axes = [sw.axis1.name] + ([sw.axis2.name] if sw.axis2 else [])
    table = Table(_variant_cols(cfg) + axes + ["n_phonon", "n_photon", "g2_phonon", "g2_photon", "g2_phonon_class",
                                               "status"], headline="n_phonon")
    nw = cfg.workers if workers is None else workers
    for v in cfg.variant_values():
        p = cfg.resolved_params(v)
        a2 = None if sw.axis2 is None else (sw.axis2.name, sw.axis2.values())
        s = sweep_steady(p, layout, (sw.axis1.name, sw.axis1.values()), a2, workers=nw)
        g1 = s.grid
        g2 = [None] if s.grid2 is None else list(s.grid2)
        for i, x1 in enumerate(g1):
            for j, x2 in enumerate(g2):
                idx = (i,) if s.grid2 is None else (i, j)
                gb = s.columns["g2_phonon"][idx]
                row = _vprefix(cfg, v) + [x1] + ([] if x2 is None else [x2])
                row += [s.values[idx], s.columns["n_photon"][idx], gb, s.columns["g2_photon"][idx],
                        classify_g2(None if math.isnan(gb) else gb), s.columns["status"][idx]]
                table.rows.append(row)
    return table


def run_g2tau(cfg: ExperimentConfig) -> Table:
    layout = _layout(cfg)
    g = cfg.g2
    table = Table(_variant_cols(cfg) + ["tau", "g2"], headline="g2")
    grid = log_tau_grid(g.tau_min, g.tau_max, g.n_tau)
    table.metadata["g2_zero"] = []
    for v in cfg.variant_values():
        p = cfg.resolved_params(v)
        L = liouvillian(p, layout)
        rho = steady_state(L)
        s = g2_tau(L, rho, g.mode, grid, params=p)
        o = Ops(layout)
        table.metadata["g2_zero"].append(g2_equal_time(o.a if g.mode == "photon" else o.b, rho))
        for t, val in zip(s.grid, s.values):
            table.rows.append(_vprefix(cfg, v) + [t, val])
    return table


def run_g2spectrum(cfg: ExperimentConfig) -> Table:
    layout = _layout(cfg)
    g = cfg.g2
    table = Table(_variant_cols(cfg) + ["omega", "G2_power"], headline="G2_power")
    table.metadata["fft"] = []
    for v in cfg.variant_values():
        p = cfg.resolved_params(v)
        L = liouvillian(p, layout)
        rho = steady_state(L)
        tau = default_fft_grid(p, g.window_gamma_m, g.steps_per_period)
        series = g2_tau(L, rho, g.mode, tau, params=p)
        spec = g2_spectrum(series, omega_max=g.omega_max)
        meta = {k: spec.metadata[k] for k in ("window", "window_length", "d_tau", "n_samples", "d_omega")}
        table.metadata["fft"].append(meta)
        keep = spec.grid >= g.omega_min
        for w, val in zip(spec.grid[keep], spec.values[keep]):
            table.rows.append(_vprefix(cfg, v) + [w, val])
    return table


def run_djos(cfg: ExperimentConfig) -> Table:
    d = cfg.djos
    table = Table(_variant_cols(cfg) + ["omega_p", "density"], headline="density")
    table.metadata["lines"] = []
    for v in cfg.variant_values():
        p = cfg.resolved_params(v)
        series, lines = joint_density(p, d.axis.values(), d.m_max, d.l_max, d.linewidth or None)
        for w, val in zip(series.grid, series.values):
            table.rows.append(_vprefix(cfg, v) + [w, val])
        table.metadata["lines"].append(
            [{"from": ln.from_level, "to": ln.to_level, "frequency": ln.frequency, "weight": ln.weight}
             for ln in lines if ln.weight > 0]
        )
    return table


RUNNERS = {
    "spectrum": run_spectrum,
    "steady": run_steady,
    "sweep": run_sweep,
    "g2tau": run_g2tau,
    "g2spectrum": run_g2spectrum,
    "djos": run_djos,
}


def run_config(cfg: ExperimentConfig, workers: int | None = None) -> Table:
    if cfg.task == "sweep":
        return run_sweep(cfg, workers)
    return RUNNERS[cfg.task](cfg)


# --- truncation audit ------------------------------------------------------------------------------

@dataclass
class AuditReport:
    task: str
    observable: str
    base: tuple[int, int]
    refined: tuple[int, int]
    relative_change: float
    threshold: float = AUDIT_THRESHOLD
    applicable: bool = True

    @property
    def flagged(self) -> bool:
        return self.applicable and not self.relative_change <= self.threshold

    def to_dict(self) -> dict:
        return {
            "task": self.task, "observable": self.observable, "base": list(self.base),
            "refined": list(self.refined), "relative_change": self.relative_change,
            "threshold": self.threshold, "applicable": self.applicable, "flagged": self.flagged,
        }


def _headline(cfg: ExperimentConfig, workers: int | None) -> tuple[str, np.ndarray]:
    audit_cfg = cfg
    if cfg.task == "g2spectrum":
        # the FFT window is long; the log-grid g2 carries the same truncation error
        audit_cfg = replace(cfg, task="g2tau")
    t = run_config(audit_cfg, workers)
    col = t.columns.index(t.headline)
    return t.headline, np.array([np.nan if r[col] is None else r[col] for r in t.rows], dtype=float)


def audit_truncation(cfg: ExperimentConfig, workers: int | None = None,
                     base_values: np.ndarray | None = None) -> AuditReport:
    """Recompute the task's headline observable at (N_c + 1, N_m + 2) and
    report the largest change relative to the largest base value."""
    nc, nm = cfg.truncation.n_cavity, cfg.truncation.n_mech
    if cfg.task == "djos":
        return AuditReport(cfg.task, "density", (nc, nm), (nc, nm), 0.0, applicable=False)
    name, base = _headline(cfg, workers) if base_values is None else (None, base_values)
    name2, fine = _headline(with_truncation(cfg, nc + 1, nm + 2), workers)
    ok = np.isfinite(base) & np.isfinite(fine)
    if not np.any(ok):
        rel = math.inf
    else:
        scale = float(np.max(np.abs(base[ok])))
        diff = float(np.max(np.abs(fine[ok] - base[ok])))
        rel = diff / scale if scale > 0 else diff
    return AuditReport(cfg.task, name2, (nc, nm), (nc + 1, nm + 2), rel)


# --- output ---------------------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_output(cfg: ExperimentConfig, table: Table, fmt: str, audit: AuditReport | None = None) -> str:
    meta = dict(table.metadata)
    if audit is not None:
        meta["truncation_audit"] = audit.to_dict()
    meta = _clean(meta)
    if fmt == "json":
        doc = {
            "tool": "hybridom",
            "version": __version__,
            "task": cfg.task,
            "units": cfg.units,
            "fingerprint": json.loads(cfg.fingerprint()),
            "metadata": meta,
            "columns": table.columns,
            "rows": _clean(table.rows),
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# tool: hybridom {__version__}\n")
    buf.write(f"# task: {cfg.task}\n")
    buf.write(f"# units: {cfg.units}\n")
    buf.write(f"# fingerprint: {cfg.fingerprint()}\n")
    buf.write(f"# metadata: {json.dumps(meta, sort_keys=True, separators=(',', ':'))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def read_output(text: str) -> tuple[ExperimentConfig, list[str], list[list[str]], dict]:
    """Parse a CSV or JSON output back into (config, columns, rows, metadata)."""
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return parse_config(doc["fingerprint"]), doc["columns"], doc["rows"], doc["metadata"]
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            header[key] = val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return config_from_fingerprint(header["fingerprint"]), rows[0], rows[1:], json.loads(header["metadata"])


# --- recipes --------------------------------------------------------------------------------------

def _recipe_dir():
    return resources.files("hybridom") / "recipes"


def recipe_names() -> list[str]:
    return sorted(p.name[:-5] for p in _recipe_dir().iterdir() if p.name.endswith(".toml"))


def recipe_path(name: str):
    p = _recipe_dir() / f"{name}.toml"
    return p if p.is_file() else None


def recipe_sidecar(name: str) -> str:
    p = _recipe_dir() / f"{name}.md"
    return p.read_text() if p.is_file() else ""


def list_recipes() -> list[tuple[str, str, str]]:
    """(name, task, one-line description) for every shipped recipe."""
    out = []
    for name in recipe_names():
        cfg = load_config(str(recipe_path(name)))
        out.append((name, cfg.task, cfg.description))
    return out


# --- entry point ----------------------------------------------------------------------------------

def _error(category: str, message: str, extra: dict | None = None) -> None:
    doc = {"error": category, "message": message}
    if extra:
        doc.update(extra)
    print(json.dumps(_clean(doc), sort_keys=True), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridom", description="Atom-cavity-mechanics simulator.")
    ap.add_argument("task", choices=ALL_TASKS + ("audit", "list-recipes"))
    ap.add_argument("config", nargs="?", help="TOML file or shipped recipe name")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    return ap


def _resolve_config(arg: str, overrides: list[str], task: str | None) -> tuple[ExperimentConfig, str | None]:
    path = Path(arg)
    recipe = None
    if not path.is_file():
        rp = recipe_path(arg)
        if rp is None:
            raise ConfigError(f"no config file or recipe named {arg!r}")
        recipe = arg
        path = rp
    ovs = list(overrides)
    if task is not None:
        ovs = [f"task=\"{task}\""] + ovs
    return load_config(str(path), ovs), recipe


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    task = {"audit": "audit_truncation", "list-recipes": "list_recipes"}.get(args.task, args.task)

    if task == "list_recipes":
        try:
            for name, t, desc in list_recipes():
                print(f"{name:8s} {t:11s} {desc}")
        except ConfigError as exc:
            _error("config", str(exc))
            return EXIT_CONFIG
        return EXIT_OK

    if args.config is None:
        _error("config", f"task {task} needs a config")
        return EXIT_CONFIG
    if args.workers is not None and args.workers < 1:
        _error("config", "--workers must be positive")
        return EXIT_CONFIG
    try:
        cfg, recipe = _resolve_config(args.config, args.overrides, None if task == "audit_truncation" else task)
    except ConfigError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    fmt = args.format or cfg.output.format
    out = args.out if args.out is not None else cfg.output.path

    try:
        if task == "audit_truncation":
            report = audit_truncation(cfg, args.workers)
            text = json.dumps(_clean(report.to_dict()), sort_keys=True) + "\n"
            _emit(text, out)
            return EXIT_AUDIT if report.flagged else EXIT_OK
        table = run_config(cfg, args.workers)
        report = None
        if cfg.truncation.convergence_audit:
            col = table.columns.index(table.headline)
            base = np.array([np.nan if r[col] is None else r[col] for r in table.rows], dtype=float)
            if cfg.task == "g2spectrum":
                base = None
            report = audit_truncation(cfg, args.workers, base_values=base)
    except (ConfigError, UnsupportedConfiguration) as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    except PositivityError as exc:
        extra = {}
        try:
            extra["truncation_audit"] = audit_truncation(cfg, args.workers).to_dict()
        except Exception as audit_exc:  # the audit is advisory here
            extra["truncation_audit"] = {"error": str(audit_exc)}
        _error("solver", str(exc), extra)
        return EXIT_SOLVER
    except (SolverError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        _error("solver", str(exc))
        return EXIT_SOLVER

    _emit(format_output(cfg, table, fmt, report), out)
    if out and recipe:
        side = recipe_sidecar(recipe)
        if side:
            Path(str(out) + ".md").write_text(side)
    if report is not None and report.flagged:
        _error("audit", "truncation audit flagged a change above threshold", {"truncation_audit": report.to_dict()})
        return EXIT_AUDIT
    return EXIT_OK


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
