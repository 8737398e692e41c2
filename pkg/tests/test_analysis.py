import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from hybridom.analysis import (
    CorrelationSeries,
    TransitionLine,
    apply_axis,
    classify_g2,
    default_fft_grid,
    drive_amplitude,
    g2_equal_time,
    g2_spectrum,
    g2_tau,
    joint_density,
    log_tau_grid,
    lorentzian,
    spectral_structure,
    sweep_steady,
    transition_lines,
)
from hybridom.core import GROUND, Ops, SpaceLayout, basis_state, pure_state, thermal_mechanics_state
from hybridom.lindblad import liouvillian, steady_state
from hybridom.model import SystemParams, UnsupportedConfiguration


def coherent_mechanics(layout, alpha):
    n = layout.n_mech
    amps = np.array([math.exp(-abs(alpha) ** 2 / 2) * alpha**k / math.sqrt(math.factorial(k)) for k in range(n)])
    psi = np.kron(np.kron([0, 1], np.eye(layout.n_cavity)[0]), amps)
    return pure_state(layout, psi)


def test_g2_thermal():
    lay = SpaceLayout.tripartite(2, 120)
    rho = thermal_mechanics_state(lay, 3.45)
    assert g2_equal_time(Ops(lay).b, rho) == pytest.approx(2.0, abs=1e-8)


def test_g2_coherent():
    lay = SpaceLayout.tripartite(2, 60)
    rho = coherent_mechanics(lay, 1.3)
    assert g2_equal_time(Ops(lay).b, rho) == pytest.approx(1.0, abs=1e-8)


def test_g2_fock_and_vacuum():
    lay = SpaceLayout.tripartite(3, 3)
    o = Ops(lay)
    one = pure_state(lay, basis_state(lay, GROUND, 1, 0))
    assert g2_equal_time(o.a, one) == pytest.approx(0.0)
    vac = pure_state(lay, basis_state(lay, GROUND, 0, 0))
    assert g2_equal_time(o.a, vac) is None
    assert classify_g2(None) == "undefined"


@pytest.mark.parametrize("value,label", [(0.5, "antibunched"), (0.95, "coherent"), (1.1, "coherent"),
                                         (1.3, "intermediate"), (2.0, "thermal")])
def test_classify(value, label):
    assert classify_g2(value) == label


def test_series_invariants():
    with pytest.raises(ValueError):
        CorrelationSeries("g2_tau", [0.0, 1.0, 1.0], [1, 1, 1])
    with pytest.raises(ValueError):
        CorrelationSeries("g2_tau", [0.0, 1.0], [1, 1, 1])
    with pytest.raises(ValueError):
        CorrelationSeries("nope", [0.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        TransitionLine("a", "b", 1.0, -1e-3)


@pytest.mark.parametrize("name,check", [
    ("coupling_ratio", lambda p: (0.05 - p.g_am) / 0.1 == pytest.approx(0.3)),
    ("g_pm_ratio", lambda p: p.g_pm_eff == pytest.approx(0.3 * 0.1)),
    ("detuning_minus", lambda p: p.omega_p == pytest.approx(99.5 + 0.3)),
    ("detuning_plus", lambda p: p.omega_p == pytest.approx(100.5 + 0.3)),
    ("Q_m", lambda p: p.gamma_m == pytest.approx(1 / 0.3)),
    ("F_p", lambda p: p.F_p == 0.3),
])
def test_apply_axis(name, check):
    assert check(apply_axis(SystemParams(g_cm=0.1), name, 0.3))
    with pytest.raises(ValueError):
        apply_axis(SystemParams(), "bogus", 1.0)


def test_coupling_ratio_zero_is_null():
    p = apply_axis(SystemParams(g_cm=0.1), "coupling_ratio", 0.0)
    assert p.g_pm_eff == 0.0


# --- spectra -------------------------------------------------------------------------------

def _series(tau, vals):
    return CorrelationSeries("g2_tau", tau, vals, "tau")


def test_spectrum_constant_input():
    tau = np.arange(2000) * 0.05
    spec = g2_spectrum(_series(tau, np.ones_like(tau)))
    i0 = int(np.argmax(spec.values))
    assert spec.grid[i0] == 0.0
    # window leakage: sinc^2 zeros sit on the FFT bins away from omega = 0
    far = np.abs(spec.grid) > 1.0
    assert np.max(spec.values[far]) < 1e-3 * spec.values[i0]


def test_spectrum_is_symmetric_and_grid_monotone():
    tau = np.arange(1001) * 0.1
    g = 1 + 0.3 * np.exp(-tau / 10) * np.cos(2.0 * tau)
    spec = g2_spectrum(_series(tau, g))
    np.testing.assert_array_equal(spec.values, spec.values[::-1])
    np.testing.assert_array_equal(spec.grid, -spec.grid[::-1])
    main, sats = spectral_structure(spec, 2.0, 0.5, 0.1)
    assert main.omega == pytest.approx(2.0, abs=0.07)


def test_spectrum_rejects_non_uniform():
    with pytest.raises(ValueError):
        g2_spectrum(_series(log_tau_grid(1e-2, 10.0, 50), np.ones(51)))


def test_fft_grid_defaults():
    p = SystemParams(gamma_m=1e-2)
    t = default_fft_grid(p)
    assert t[1] - t[0] == pytest.approx(math.pi / 20)
    assert t[-1] == pytest.approx(50 / 1e-2, rel=1e-3)


# --- delayed correlations -------------------------------------------------------------------

INCOH = dict(omega_c=5.0, omega_a=5.0, g_ac=0.5, g_cm=0.1, g_am=0.0,
             gamma_c=0.05, gamma_a=0.05, gamma_m=0.01, gamma_inc=0.01)


def test_g2_tau_zero_matches_equal_time():
    p = SystemParams(**INCOH)
    lay = SpaceLayout.tripartite(3, 4)
    L = liouvillian(p, lay)
    rho = steady_state(L)
    s = g2_tau(L, rho, "photon", log_tau_grid(0.1, 100.0, 20), params=p)
    assert s.values[0] == pytest.approx(g2_equal_time(Ops(lay).a, rho), rel=1e-9)
    assert s.metadata["sector_reduced"]
    assert np.all(s.values >= 0)


def test_g2_tau_stays_real_at_very_long_delay():
    # tau far beyond every decay time: only the stationary mode survives
    p = SystemParams(**{**INCOH, "gamma_m": 1e-4, "gamma_inc": 1e-4})
    lay = SpaceLayout.tripartite(3, 5)
    L = liouvillian(p, lay)
    s = g2_tau(L, steady_state(L), "photon", [1e6, 1e8, 1e10])
    np.testing.assert_allclose(s.values, 1.0, atol=1e-8)


def test_g2_tau_driven_falls_back_to_full_space():
    p = SystemParams(**{**INCOH, "gamma_inc": 0.0, "F_p": 0.02, "omega_p": 4.5})
    lay = SpaceLayout.tripartite(3, 3)
    L = liouvillian(p, lay)
    rho = steady_state(L)
    s = g2_tau(L, rho, "phonon", np.linspace(0, 5, 6))
    assert not s.metadata["sector_reduced"]
    assert s.values[-1] > 0


def test_g2_tau_coherent_drive_cavity_only():
    # a driven empty cavity is in a coherent state: g2(tau) = 1
    p = SystemParams(omega_c=5.0, omega_a=50.0, g_ac=0.0, g_cm=0.0, g_am=0.0,
                     gamma_c=0.5, gamma_a=0.5, gamma_m=0.1, F_p=0.05, omega_p=5.0)
    lay = SpaceLayout.tripartite(8, 2)
    L = liouvillian(p, lay)
    rho = steady_state(L)
    s = g2_tau(L, rho, "photon", np.linspace(0, 4, 5))
    np.testing.assert_allclose(s.values, 1.0, atol=1e-6)


def test_g2_tau_requires_occupation():
    p = SystemParams(**{**INCOH, "gamma_inc": 0.0})
    lay = SpaceLayout.tripartite(2, 3)
    L = liouvillian(p, lay)
    with pytest.raises(ValueError):
        g2_tau(L, steady_state(L), "photon", [0.0, 1.0])


# --- joint density of states -----------------------------------------------------------------

FIG4 = SystemParams(gamma_c=1e-3, gamma_a=1e-3, gamma_m=1e-4, F_p=0.01)


def test_djos_zero_drive():
    s, lines = joint_density(FIG4.replace(F_p=0.0), np.linspace(100.3, 100.7, 50))
    assert np.all(s.values == 0.0)
    assert all(ln.weight == 0.0 for ln in lines)


def test_djos_rejects_off_resonance():
    with pytest.raises(UnsupportedConfiguration):
        joint_density(FIG4.replace(omega_a=100.2), np.linspace(100.3, 100.7, 5))


def test_djos_integrated_weight():
    s, lines = joint_density(FIG4, np.linspace(100.3, 100.7, 5))
    w = FIG4.gamma_c
    centers = sorted(ln.frequency for ln in lines if ln.weight > 0)

    def dens(x):
        return sum(ln.weight * lorentzian(x, ln.frequency, w) for ln in lines)

    lo, hi = centers[0] - 1.0, centers[-1] + 1.0
    inner = quad(dens, lo, hi, points=centers, limit=2000, epsabs=0, epsrel=1e-10)[0]
    tails = quad(dens, -np.inf, lo, epsabs=0, epsrel=1e-10)[0] + quad(dens, hi, np.inf, epsabs=0, epsrel=1e-10)[0]
    total = sum(ln.weight for ln in lines)
    assert inner + tails == pytest.approx(total, rel=1e-6)


def test_djos_weights_from_overlaps_at_zero_shift():
    # without optomechanical coupling only l = m transitions to the polariton survive
    p = FIG4.replace(g_cm=0.0, g_am=0.0)
    amp = drive_amplitude(p, 0, "G", 0)
    assert abs(amp) ** 2 == pytest.approx(0.5 * p.F_p**2)
    assert drive_amplitude(p, 0, "G", 1) == 0


@given(st.integers(0, 5), st.sampled_from(["+", "-"]), st.floats(0.0, 0.15))
def test_drive_amplitude_completeness(l, branch, g_cm):
    # summing over all dressed final states recovers |<g,1|i F (a^dag - a)|g,0>|^2 = F^2
    p = FIG4.replace(g_cm=g_cm)
    total = abs(drive_amplitude(p, 0, "G", l)) ** 2
    for m in range(1, 60):
        for br in ("+", "-"):
            total += abs(drive_amplitude(p, m, br, l)) ** 2
    assert total == pytest.approx(p.F_p**2, rel=1e-8)


def test_lines_adjacent_to_upper_polariton_end_in_one_phonon_states():
    lines = [ln for ln in transition_lines(FIG4, 5, 5) if ln.weight > 1e-8 * FIG4.F_p**2]
    wp = FIG4.polariton_frequency(+1)
    below = max((ln for ln in lines if ln.frequency < wp), key=lambda ln: ln.frequency)
    above = min((ln for ln in lines if ln.frequency > wp), key=lambda ln: ln.frequency)
    assert {below.to_level, above.to_level} == {"+_1,1", "-_1,1"}
    assert below.from_level == above.from_level == "G,0"


# --- sweeps ----------------------------------------------------------------------------------

SWEEP = SystemParams(omega_c=20.0, omega_a=20.0, g_ac=0.5, g_cm=0.1, gamma_c=0.05, gamma_a=0.05,
                     gamma_m=0.01, n_th=0.5, F_p=0.05)


def test_sweep_deterministic_across_workers():
    lay = SpaceLayout.tripartite(2, 6)
    ax = ("detuning_minus", np.linspace(-0.2, 0.2, 5))
    one = sweep_steady(SWEEP, lay, ax, workers=1)
    many = sweep_steady(SWEEP, lay, ax, workers=3)
    assert one.values.tobytes() == many.values.tobytes()
    for k in ("n_photon", "g2_phonon"):
        assert one.columns[k].tobytes() == many.columns[k].tobytes()
    assert one.kind == "sweep_nphonon"


def test_sweep_2d_shape_and_in_band_errors():
    lay = SpaceLayout.tripartite(2, 4)
    s = sweep_steady(SWEEP, lay, ("gamma_m", [0.0, 0.01]), ("detuning_minus", [0.0, 0.1, 0.2]))
    assert s.values.shape == (2, 3)
    # gamma_m = 0 with n_th > 0 still has a unique state; all points succeed
    assert set(s.columns["status"].ravel()) <= {"ok", "ok:g2_undefined"}
    # lossless atom and cavity without drive: every polariton sector keeps its own stationary state
    bad = sweep_steady(SWEEP.replace(gamma_a=0.0, F_p=0.0), lay, ("gamma_c", [0.0, 0.05]))
    assert bad.columns["status"][0].startswith("error:")
    assert math.isnan(bad.values[0])
    assert bad.columns["status"][1] == "ok"
