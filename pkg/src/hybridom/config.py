"""Experiment configuration: strict TOML schema, overrides and fingerprints.

A configuration file looks like::

    schema_version = 1
    units = "omega_m"
    task = "sweep"
    name = "example"

    [system]
    omega_c = 100.0
    g_ac = 0.5
    ...

    [truncation]
    n_cavity = 2
    n_mech = 16

    [sweep]
    axis1 = { name = "detuning_plus", start = -0.1, stop = 0.1, num = 201 }

Every frequency is in units of the mechanical frequency, which is therefore
not a configurable key.  Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from .model import SystemParams

SCHEMA_VERSION = 1
UNITS = "omega_m"
TASKS = ("spectrum", "steady", "sweep", "g2tau", "g2spectrum", "djos")
FORMATS = ("csv", "json")
SYSTEM_KEYS = tuple(f.name for f in fields(SystemParams) if f.name != "omega_m")


class ConfigError(ValueError):
    """Schema violation or invalid value in an experiment configuration."""


def _strict(table: dict, allowed, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where} must be finite")
    return float(v)


def _integer(v, where: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class AxisSpec:
    name: str
    start: float
    stop: float
    num: int
    scale: str = "linear"

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.num)
        return np.linspace(self.start, self.stop, self.num)

    @classmethod
    def parse(cls, d: dict, where: str) -> "AxisSpec":
        _strict(d, ("name", "start", "stop", "num", "scale"), where)
        for k in ("name", "start", "stop", "num"):
            if k not in d:
                raise ConfigError(f"{where}.{k} is required")
        scale = d.get("scale", "linear")
        if scale not in ("linear", "log"):
            raise ConfigError(f"{where}.scale must be 'linear' or 'log'")
        ax = cls(str(d["name"]), _number(d["start"], f"{where}.start"), _number(d["stop"], f"{where}.stop"),
                 _integer(d["num"], f"{where}.num", 1), scale)
        if ax.num > 1 and ax.start == ax.stop:
            raise ConfigError(f"{where} has zero extent")
        if scale == "log" and (ax.start <= 0 or ax.stop <= 0):
            raise ConfigError(f"{where} log axis needs positive bounds")
        return ax


@dataclass(frozen=True)
class Truncation:
    n_cavity: int = 2
    n_mech: int = 12
    convergence_audit: bool = False


@dataclass(frozen=True)
class PumpSpec:
    """Pump frequency; 'minus'/'plus' pin it to omega_-^(1)/omega_+^(1) + offset."""

    reference: str = "absolute"
    offset: float = 0.0


@dataclass(frozen=True)
class VariantSpec:
    name: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SpectrumSpec:
    axis: AxisSpec | None = None
    n_max: int = 1
    levels: int = 7


@dataclass(frozen=True)
class SweepSpec:
    axis1: AxisSpec | None = None
    axis2: AxisSpec | None = None


@dataclass(frozen=True)
class G2Spec:
    mode: str = "photon"
    tau_min: float = 1.0
    tau_max: float = 1e6
    n_tau: int = 200
    window_gamma_m: float = 50.0
    steps_per_period: float = 40.0
    omega_min: float = 0.0
    omega_max: float = 2.0


@dataclass(frozen=True)
class DjosSpec:
    axis: AxisSpec | None = None
    m_max: int = 5
    l_max: int = 5
    linewidth: float = 0.0  # 0 selects gamma_c


@dataclass(frozen=True)
class OutputSpec:
    path: str = ""
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    system: SystemParams = field(default_factory=SystemParams)
    truncation: Truncation = field(default_factory=Truncation)
    name: str = ""
    description: str = ""
    schema_version: int = SCHEMA_VERSION
    units: str = UNITS
    pump: PumpSpec = field(default_factory=PumpSpec)
    variants: VariantSpec | None = None
    spectrum: SpectrumSpec = field(default_factory=SpectrumSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    g2: G2Spec = field(default_factory=G2Spec)
    djos: DjosSpec = field(default_factory=DjosSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    workers: int = 1

    # --- physics helpers ---------------------------------------------------------------------

    def variant_values(self) -> list[float | None]:
        return [None] if self.variants is None else list(self.variants.values)

    def resolved_params(self, variant: float | None = None) -> SystemParams:
        """SystemParams after the variant and the pump reference are applied."""
        from .analysis import apply_axis

        p = self.system
        if variant is not None:
            p = apply_axis(p, self.variants.name, variant)
        if self.pump.reference == "minus":
            p = p.replace(omega_p=p.polariton_frequency(-1) + self.pump.offset)
        elif self.pump.reference == "plus":
            p = p.replace(omega_p=p.polariton_frequency(+1) + self.pump.offset)
        return p

    # --- serialization ------------------------------------------------------------------

    def to_dict(self, execution: bool = True) -> dict:
        """Nested plain dict mirroring the TOML layout.

        ``execution=False`` drops ``workers`` and ``output``; that reduced form
        is the fingerprint, so results do not depend on how they were run.
        """
        d = {
            "schema_version": self.schema_version,
            "units": self.units,
            "task": self.task,
            "name": self.name,
            "description": self.description,
            "system": {k: getattr(self.system, k) for k in SYSTEM_KEYS},
            "truncation": asdict(self.truncation),
            "pump": asdict(self.pump),
            "spectrum": _drop_none(asdict(self.spectrum)),
            "sweep": _drop_none(asdict(self.sweep)),
            "g2": asdict(self.g2),
            "djos": _drop_none(asdict(self.djos)),
        }
        if self.variants is not None:
            d["variants"] = {"name": self.variants.name, "values": list(self.variants.values)}
        if execution:
            d["workers"] = self.workers
            d["output"] = asdict(self.output)
        return d

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(execution=False), sort_keys=True, separators=(",", ":"))

    def physics_equal(self, other: "ExperimentConfig") -> bool:
        return self.to_dict(execution=False) == other.to_dict(execution=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return parse_config(d)


def _drop_none(d: dict) -> dict:
    return {k: (_drop_none(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}


TOP_KEYS = ("schema_version", "units", "task", "name", "description", "system", "truncation", "pump",
            "variants", "spectrum", "sweep", "g2", "djos", "output", "workers")


def parse_config(d: dict) -> ExperimentConfig:
    """Validate a nested dict (parsed TOML or a fingerprint) into a config."""
    _strict(d, TOP_KEYS, "top level")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    units = d.get("units")
    if units != UNITS:
        raise ConfigError(f"units must be declared as {UNITS!r}, got {units!r}")
    task = d.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")

    sysd = d.get("system", {})
    _strict(sysd, SYSTEM_KEYS, "system")
    try:
        system = SystemParams(**{k: _number(v, f"system.{k}") for k, v in sysd.items()})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if system.omega_c <= 0 or system.omega_a <= 0:
        raise ConfigError("omega_c and omega_a must be positive")
    for k in ("gamma_c", "gamma_a", "gamma_m", "gamma_inc", "n_th"):
        if getattr(system, k) < 0:
            raise ConfigError(f"system.{k} must be non-negative")

    td = d.get("truncation", {})
    _strict(td, ("n_cavity", "n_mech", "convergence_audit"), "truncation")
    audit = td.get("convergence_audit", False)
    if not isinstance(audit, bool):
        raise ConfigError("truncation.convergence_audit must be a boolean")
    trunc = Truncation(_integer(td.get("n_cavity", 2), "truncation.n_cavity", 2),
                       _integer(td.get("n_mech", 12), "truncation.n_mech", 2), audit)

    pd = d.get("pump", {})
    _strict(pd, ("reference", "offset"), "pump")
    pump = PumpSpec(pd.get("reference", "absolute"), _number(pd.get("offset", 0.0), "pump.offset"))
    if pump.reference not in ("absolute", "minus", "plus"):
        raise ConfigError("pump.reference must be 'absolute', 'minus' or 'plus'")
    if pump.reference != "absolute" and system.omega_p != 0.0:
        raise ConfigError("set either system.omega_p or a pump reference, not both")

    variants = None
    if "variants" in d:
        vd = d["variants"]
        _strict(vd, ("name", "values"), "variants")
        vals = vd.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("variants.values must be a non-empty list")
        variants = VariantSpec(str(vd.get("name", "")), tuple(_number(v, "variants.values") for v in vals))
        _check_axis_name(variants.name, "variants.name")

    sd = d.get("spectrum", {})
    _strict(sd, ("axis", "n_max", "levels"), "spectrum")
    spectrum = SpectrumSpec(AxisSpec.parse(sd["axis"], "spectrum.axis") if "axis" in sd else None,
                            _integer(sd.get("n_max", 1), "spectrum.n_max", 1),
                            _integer(sd.get("levels", 7), "spectrum.levels", 1))

    swd = d.get("sweep", {})
    _strict(swd, ("axis1", "axis2"), "sweep")
    sweep = SweepSpec(AxisSpec.parse(swd["axis1"], "sweep.axis1") if "axis1" in swd else None,
                      AxisSpec.parse(swd["axis2"], "sweep.axis2") if "axis2" in swd else None)
    for ax, where in ((sweep.axis1, "sweep.axis1"), (sweep.axis2, "sweep.axis2")):
        if ax is not None:
            _check_axis_name(ax.name, f"{where}.name")
    if sweep.axis2 is not None and sweep.axis1 is None:
        raise ConfigError("sweep.axis2 needs sweep.axis1")

    gd = d.get("g2", {})
    defaults = G2Spec()
    _strict(gd, [f.name for f in fields(G2Spec)], "g2")
    g2 = G2Spec(
        mode=gd.get("mode", defaults.mode),
        **{k: _number(gd.get(k, getattr(defaults, k)), f"g2.{k}")
           for k in ("tau_min", "tau_max", "window_gamma_m", "steps_per_period", "omega_min", "omega_max")},
        n_tau=_integer(gd.get("n_tau", defaults.n_tau), "g2.n_tau", 2),
    )
    if g2.mode not in ("photon", "phonon"):
        raise ConfigError("g2.mode must be 'photon' or 'phonon'")
    if not 0 < g2.tau_min < g2.tau_max:
        raise ConfigError("g2 needs 0 < tau_min < tau_max")
    if g2.omega_max <= g2.omega_min or g2.window_gamma_m <= 0 or g2.steps_per_period < 2:
        raise ConfigError("invalid g2 spectrum window")

    dd = d.get("djos", {})
    _strict(dd, ("axis", "m_max", "l_max", "linewidth"), "djos")
    djos = DjosSpec(AxisSpec.parse(dd["axis"], "djos.axis") if "axis" in dd else None,
                    _integer(dd.get("m_max", 5), "djos.m_max"), _integer(dd.get("l_max", 5), "djos.l_max"),
                    _number(dd.get("linewidth", 0.0), "djos.linewidth"))
    if djos.linewidth < 0:
        raise ConfigError("djos.linewidth must be non-negative")

    od = d.get("output", {})
    _strict(od, ("path", "format"), "output")
    output = OutputSpec(str(od.get("path", "")), od.get("format", "csv"))
    if output.format not in FORMATS:
        raise ConfigError(f"output.format must be one of {FORMATS}")

    cfg = ExperimentConfig(
        task=task, system=system, truncation=trunc, name=str(d.get("name", "")),
        description=str(d.get("description", "")), pump=pump, variants=variants, spectrum=spectrum,
        sweep=sweep, g2=g2, djos=djos, output=output,
        workers=_integer(d.get("workers", 1), "workers", 1),
    )
    _check_task_inputs(cfg)
    return cfg


def _check_axis_name(name: str, where: str):
    from .analysis import DERIVED_AXES

    if name not in DERIVED_AXES and name not in SYSTEM_KEYS:
        raise ConfigError(f"{where}: unknown axis {name!r}")


def _check_task_inputs(cfg: ExperimentConfig):
    if cfg.task == "sweep" and cfg.sweep.axis1 is None:
        raise ConfigError("task 'sweep' needs [sweep] axis1")
    if cfg.task == "djos" and cfg.djos.axis is None:
        raise ConfigError("task 'djos' needs [djos] axis")
    if cfg.task in ("g2tau", "g2spectrum"):
        for v in cfg.variant_values():
            if cfg.resolved_params(v).gamma_m <= 0 and cfg.task == "g2spectrum":
                raise ConfigError("g2spectrum needs gamma_m > 0 to size the window")


# --- loading and overrides ----------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_override(d: dict, assignment: str) -> dict:
    """Apply one ``key=value`` override to a nested config dict in place.

    Bare keys naming a system parameter go to ``[system]``; otherwise dots
    separate table levels.  Values are parsed as TOML literals, falling back
    to a plain string.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, text = assignment.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {assignment!r} has an empty key")
    path = key.split(".")
    if len(path) == 1 and path[0] in SYSTEM_KEYS:
        path = ["system", path[0]]
    node = d
    for part in path[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key!r} descends into a non-table")
        node = nxt
    node[path[-1]] = _parse_value(text.strip())
    return d


def load_config(path: str | Path, overrides: list[str] | tuple[str, ...] = ()) -> ExperimentConfig:
    """Read a TOML file, apply overrides left to right and validate."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        d = tomli.loads(raw)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for ov in overrides:
        apply_override(d, ov)
    return parse_config(d)


def config_from_fingerprint(text: str) -> ExperimentConfig:
    return parse_config(json.loads(text))


def with_truncation(cfg: ExperimentConfig, n_cavity: int, n_mech: int) -> ExperimentConfig:
    return replace(cfg, truncation=replace(cfg.truncation, n_cavity=n_cavity, n_mech=n_mech))
