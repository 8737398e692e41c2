"""Steady-state observables, correlation functions, spectra and sweeps."""
from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from .core import Ops, QOperator, QState, SpaceLayout, expectation
from .lindblad import (
    SolverError,
    Superoperator,
    liouvillian,
    regression_correlator,
    steady_state,
)
from .model import (
    SystemParams,
    dressed_energy,
    displaced_overlap,
    displacement_q0,
    polariton_basis,
    polariton_number_diag,
    _psi,
    _require_resonant,
)

KINDS = ("g2_tau", "g2_spectrum", "sweep_nphonon", "sweep_g2b", "djos")
G2_FLOOR = 1e-12


@dataclass
class CorrelationSeries:
    """Sampled quantity on a strictly monotone grid plus provenance.

    ``values`` is the headline column; ``columns`` holds any further columns
    sampled on the same grid.  Two-dimensional maps set ``grid2`` and store
    arrays of shape ``(len(grid), len(grid2))``.
    """

    kind: str
    grid: np.ndarray
    values: np.ndarray
    grid_name: str = "x"
    fingerprint: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)
    grid2: np.ndarray | None = None
    grid2_name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values)
        _check_monotone(self.grid, self.grid_name)
        shape = (self.grid.size,)
        if self.grid2 is not None:
            self.grid2 = np.asarray(self.grid2, dtype=float)
            _check_monotone(self.grid2, self.grid2_name)
            shape = (self.grid.size, self.grid2.size)
        for name, col in [("values", self.values), *self.columns.items()]:
            if np.shape(col) != shape:
                raise ValueError(f"column {name} has shape {np.shape(col)}, expected {shape}")


def _check_monotone(grid: np.ndarray, name: str):
    if grid.ndim != 1:
        raise ValueError(f"grid {name} must be one-dimensional")
    d = np.diff(grid)
    if grid.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError(f"grid {name} must be strictly monotone")


# --- equal-time quantities -------------------------------------------------------------------

def g2_equal_time(op: QOperator, rho_ss: QState, floor: float = G2_FLOOR) -> float | None:
    """<op^dag op^dag op op> / <op^dag op>^2, or None when the occupation is below ``floor``."""
    opd = op.dag()
    n = expectation(opd @ op, rho_ss).real
    if n < floor:
        return None
    return expectation(opd @ opd @ op @ op, rho_ss).real / n**2


def classify_g2(value: float | None) -> str:
    """Reporting label for an equal-time g2 value."""
    if value is None:
        return "undefined"
    if value < 0.9:
        return "antibunched"
    if value <= 1.1:
        return "coherent"
    if value > 1.5:
        return "thermal"
    return "intermediate"


def steady_observables(params: SystemParams, layout: SpaceLayout) -> dict:
    o = Ops(layout)
    rho = steady_state(liouvillian(params, layout))
    return {
        "n_phonon": expectation(o.n_phon, rho).real,
        "n_photon": expectation(o.n_phot, rho).real,
        "g2_phonon": g2_equal_time(o.b, rho),
        "g2_photon": g2_equal_time(o.a, rho),
        "min_eig": rho.min_eigenvalue(),
    }


# --- sweeps ------------------------------------------------------------------------------------

DERIVED_AXES = {
    "detuning_minus": "omega_p = omega_-^(1) + value",
    "detuning_plus": "omega_p = omega_+^(1) + value",
    "coupling_ratio": "g_am = g_cm (1/2 - value), value = (g_cm/2 - g_am)/g_cm",
    "g_pm_ratio": "g_am = g_cm (1 - value)/2, value = g_pm/g_cm",
    "Q_ac": "gamma_c = gamma_a = omega_c / value",
    "Q_m": "gamma_m = omega_m / value",
}


def apply_axis(params: SystemParams, name: str, value: float) -> SystemParams:
    """Set a SystemParams field or one of the derived sweep controls."""
    v = float(value)
    if name == "detuning_minus":
        return params.replace(omega_p=params.polariton_frequency(-1) + v)
    if name == "detuning_plus":
        return params.replace(omega_p=params.polariton_frequency(+1) + v)
    if name == "coupling_ratio":
        return params.replace(g_am=params.g_cm * (0.5 - v))
    if name == "g_pm_ratio":
        return params.replace(g_am=0.5 * params.g_cm * (1.0 - v))
    if name == "Q_ac":
        g = params.omega_c / v
        return params.replace(gamma_c=g, gamma_a=g)
    if name == "Q_m":
        return params.replace(gamma_m=params.omega_m / v)
    if name in SystemParams.__dataclass_fields__:
        return params.replace(**{name: v})
    raise ValueError(f"unknown sweep axis {name!r}")


SWEEP_COLUMNS = ("n_phonon", "n_photon", "g2_phonon", "g2_photon")


def _sweep_point(task) -> tuple:
    params, layout = task
    try:
        obs = steady_observables(params, layout)
    except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
        return (math.nan,) * len(SWEEP_COLUMNS) + (f"error:{type(exc).__name__}",)
    vals = tuple(math.nan if obs[c] is None else float(obs[c]) for c in SWEEP_COLUMNS)
    status = "ok" if obs["g2_phonon"] is not None else "ok:g2_undefined"
    return vals + (status,)


def sweep_steady(template: SystemParams, layout: SpaceLayout, axis1: tuple[str, Sequence[float]],
                 axis2: tuple[str, Sequence[float]] | None = None, workers: int = 1) -> CorrelationSeries:
    """Steady-state phonon/photon numbers and g2 over one or two parameter axes.

    Points are independent; results are gathered in grid order, so the output
    does not depend on ``workers``.  Solver failures are recorded per point in
    the ``status`` column and the sweep continues.
    """
    name1, grid1 = axis1[0], np.asarray(axis1[1], dtype=float)
    tasks = []
    if axis2 is None:
        for v in grid1:
            tasks.append((apply_axis(template, name1, v), layout))
    else:
        name2, grid2 = axis2[0], np.asarray(axis2[1], dtype=float)
        for v1 in grid1:
            p1 = apply_axis(template, name1, v1)
            for v2 in grid2:
                tasks.append((apply_axis(p1, name2, v2), layout))
    if workers > 1 and len(tasks) > 1:
        # spawn: forking after BLAS threads start is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
            results = list(ex.map(_sweep_point, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_sweep_point(t) for t in tasks]
    shape = (grid1.size,) if axis2 is None else (grid1.size, grid2.size)
    cols = {c: np.array([r[i] for r in results], dtype=float).reshape(shape) for i, c in enumerate(SWEEP_COLUMNS)}
    cols["status"] = np.array([r[-1] for r in results], dtype=object).reshape(shape)
    values = cols.pop("n_phonon")
    return CorrelationSeries(
        kind="sweep_nphonon",
        grid=grid1,
        values=values,
        grid_name=name1,
        fingerprint={"params": template.to_dict(), "factor_dims": list(layout.factor_dims)},
        metadata={"value_name": "n_phonon"},
        columns=cols,
        grid2=None if axis2 is None else grid2,
        grid2_name="" if axis2 is None else name2,
    )


def refine_peak(fn: Callable[[float], float], lo: float, hi: float, xatol: float = 1e-6) -> float:
    """Location of the maximum of ``fn`` on [lo, hi] (bounded Brent search)."""
    res = minimize_scalar(lambda x: -fn(x), bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    return float(res.x)


# --- delayed correlations ----------------------------------------------------------------------

def _mode_ops(layout: SpaceLayout, mode: str):
    o = Ops(layout)
    if mode == "photon":
        return o.a, o.n_phot
    if mode == "phonon":
        return o.b, o.n_phon
    raise ValueError(f"mode must be 'photon' or 'phonon', got {mode!r}")


def g2_tau(L: Superoperator, rho_ss: QState, mode: str, tau_grid, params: SystemParams | None = None,
           use_symmetry: bool = True, imag_tol: float = 1e-8) -> CorrelationSeries:
    """Normalized second-order correlation g2(tau) by quantum regression.

    With ``use_symmetry`` the propagation is restricted to the block of
    Liouville space diagonal in polariton number whenever that block is
    invariant (undriven problems).
    """
    layout = L.layout
    A, B = _mode_ops(layout, mode)
    n = expectation(B, rho_ss).real
    if n < G2_FLOOR:
        raise ValueError(f"{mode} occupation {n:.3e} too small for a normalized g2")
    charge = None
    if use_symmetry:
        charge = polariton_number_diag(layout)
        try:
            res = regression_correlator(L, rho_ss, A, B, tau_grid, charge=charge)
        except ValueError:
            charge = None
    if charge is None:
        res = regression_correlator(L, rho_ss, A, B, tau_grid)
    vals = res.values / n**2
    imag = float(np.max(np.abs(vals.imag), initial=0.0))
    scale = max(float(np.max(np.abs(vals.real), initial=0.0)), 1e-300)
    if imag > imag_tol * scale:
        raise SolverError(f"g2(tau) has imaginary residue {imag:.3e}")
    real = vals.real
    if np.min(real, initial=0.0) < -1e-10:
        raise SolverError(f"g2(tau) went negative ({real.min():.3e})")
    real = np.clip(real, 0.0, None)
    meta = {"mode": mode, "mean_occupation": n, "method": res.method, "warnings": list(res.warnings),
            "sector_reduced": charge is not None}
    fp = {"factor_dims": list(layout.factor_dims)}
    if params is not None:
        fp["params"] = params.to_dict()
    return CorrelationSeries("g2_tau", res.tau, real, "tau", fp, meta)


def default_fft_grid(params: SystemParams, window_gamma_m: float = 50.0, steps_per_period: float = 40.0) -> np.ndarray:
    """Uniform tau grid: window of ``window_gamma_m / gamma_m``, step pi/(20 omega_m)."""
    if params.gamma_m <= 0:
        raise ValueError("gamma_m must be positive to size the correlation window")
    dt = 2 * math.pi / (steps_per_period * params.omega_m)
    n = int(math.floor(window_gamma_m / params.gamma_m / dt)) + 1
    return np.arange(n) * dt


def log_tau_grid(t_min: float, t_max: float, n: int, include_zero: bool = True) -> np.ndarray:
    g = np.logspace(math.log10(t_min), math.log10(t_max), n)
    return np.concatenate([[0.0], g]) if include_zero else g


def g2_spectrum(series: CorrelationSeries, omega_max: float | None = None) -> CorrelationSeries:
    """|G2(omega)|^2 for a g2(tau) series sampled uniformly from tau = 0.

    g2 of a stationary state is even in tau, so its transform is real:
    G2(omega) = dtau * (2 Re sum_j g2_j e^{i omega tau_j} - g2_0) with a
    rectangular window.  The output grid is mirrored so that the value at
    -omega is the same number as at +omega.
    """
    if series.kind != "g2_tau":
        raise ValueError("g2_spectrum expects a g2_tau series")
    tau = series.grid
    if tau.size < 3 or tau[0] != 0.0:
        raise ValueError("g2 series must start at tau = 0 with at least 3 samples")
    dt = tau[1] - tau[0]
    if np.max(np.abs(np.diff(tau) - dt)) > 1e-9 * dt:
        raise ValueError("g2_spectrum needs a uniform tau grid")
    g = np.asarray(series.values, dtype=float)
    s = np.fft.rfft(g)
    G = dt * (2.0 * s.real - g[0])
    w = 2 * math.pi * np.fft.rfftfreq(g.size, dt)
    if omega_max is not None:
        keep = w <= omega_max
        w, G = w[keep], G[keep]
    power = G**2
    grid = np.concatenate([-w[:0:-1], w])
    vals = np.concatenate([power[:0:-1], power])
    meta = {
        "window": "rectangular",
        "window_length": float(tau[-1] + dt),
        "d_tau": float(dt),
        "n_samples": int(g.size),
        "d_omega": float(w[1] - w[0]) if w.size > 1 else math.nan,
        "source": series.metadata,
    }
    return CorrelationSeries("g2_spectrum", grid, vals, "omega", dict(series.fingerprint), meta)


@dataclass(frozen=True)
class SpectralPeak:
    omega: float
    height: float
    relative: float


def spectral_structure(spectrum: CorrelationSeries, center: float, half_width: float,
                       min_separation: float, rel_floor: float = 1e-6) -> tuple[SpectralPeak, list[SpectralPeak]]:
    """Main peak of |G2|^2 in [center - half_width, center + half_width] and the
    satellites: other local maxima above ``rel_floor`` of the main peak, at
    least ``min_separation`` away from it."""
    w, p = spectrum.grid, np.asarray(spectrum.values, dtype=float)
    sel = (w >= center - half_width) & (w <= center + half_width)
    ws, ps = w[sel], p[sel]
    if ws.size < 3:
        raise ValueError("spectral window contains fewer than 3 samples")
    idx, _ = find_peaks(ps)
    if idx.size == 0:
        idx = np.array([int(np.argmax(ps))])
    top = idx[np.argmax(ps[idx])]
    main = SpectralPeak(float(ws[top]), float(ps[top]), 1.0)
    sats = [
        SpectralPeak(float(ws[k]), float(ps[k]), float(ps[k] / ps[top]))
        for k in idx
        if k != top and abs(ws[k] - ws[top]) >= min_separation and ps[k] >= rel_floor * ps[top]
    ]
    return main, sats


# --- spectral joint density of states --------------------------------------------------------------

@dataclass(frozen=True)
class TransitionLine:
    from_level: str
    to_level: str
    frequency: float
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("line weight must be non-negative")


def drive_amplitude(params: SystemParams, m: int, branch: str, l: int) -> complex:
    """<s_{1,m}| i F_p (a^dag - a) |G, l>, with |G, l> the l-th level of the
    (displaced) zero-polariton oscillator.

    Only the |g, 1> component of the dressed state contributes; the overlap of
    the two displaced phonon bases is evaluated in closed form.
    """
    _require_resonant(params)
    q1 = displacement_q0(params, 1)
    dq = displacement_q0(params, 0) - q1
    d = polariton_basis(params, 1)
    pg, mg = d.plus[0], d.minus[0]
    if m == 0:
        amp = np.conj(mg) * displaced_overlap(0, l, dq)
    else:
        psi = _psi(params, 1, m)
        if branch == "+":
            cp, cm = math.cos(psi / 2), math.sin(psi / 2)
        else:
            cp, cm = math.sin(psi / 2), -math.cos(psi / 2)
        amp = np.conj(cp * pg) * displaced_overlap(m - 1, l, dq) + np.conj(cm * mg) * displaced_overlap(m, l, dq)
    return complex(1j * params.F_p * amp)


def lorentzian(x, center: float, fwhm: float):
    hw = 0.5 * fwhm
    return (hw / math.pi) / ((np.asarray(x) - center) ** 2 + hw * hw)


def transition_lines(params: SystemParams, m_max: int, l_max: int) -> list[TransitionLine]:
    """Every |G, l> -> |s_{1,m}> line with m, l within bounds."""
    _require_resonant(params)
    lines = []
    for m in range(m_max + 1):
        branches = ("G",) if m == 0 else ("-", "+")
        for br in branches:
            e_s = dressed_energy(params, 1, m, br)
            to = "G_1" if m == 0 else f"{br}_1,{m}"
            for l in range(l_max + 1):
                w = abs(drive_amplitude(params, m, br, l)) ** 2
                lines.append(TransitionLine(f"G,{l}", to, e_s - l * params.omega_m, w))
    return lines


def joint_density(params: SystemParams, pump_grid, m_max: int = 5, l_max: int = 5,
                  linewidth: float | None = None) -> tuple[CorrelationSeries, list[TransitionLine]]:
    """Drive-weighted density of |G, l> -> |s_{1,m}> transitions versus pump
    frequency, each line broadened into a unit-area Lorentzian of FWHM
    ``linewidth`` (default gamma_c)."""
    width = params.gamma_c if linewidth is None else linewidth
    if width <= 0:
        raise ValueError("linewidth must be positive")
    grid = np.asarray(pump_grid, dtype=float)
    lines = transition_lines(params, m_max, l_max)
    dens = np.zeros_like(grid)
    for ln in lines:
        if ln.weight > 0:
            dens += ln.weight * lorentzian(grid, ln.frequency, width)
    series = CorrelationSeries(
        "djos", grid, dens, "omega_p",
        {"params": params.to_dict()},
        {"m_max": m_max, "l_max": l_max, "linewidth": width, "n_lines": len(lines)},
    )
    return series, lines


def nearest_line(lines: Sequence[TransitionLine], omega: float, min_weight: float = 0.0) -> TransitionLine:
    cands = [ln for ln in lines if ln.weight > min_weight]
    return min(cands, key=lambda ln: abs(ln.frequency - omega))
