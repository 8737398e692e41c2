
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from hybridom.core import GROUND, Ops, SpaceLayout, basis_state, expectation, pure_state, thermal_mechanics_state
from hybridom.lindblad import (
    CollapseChannel,
    DegenerateSteadyState,
    NonSteadyWarning,
    build_liouvillian,
    dissipation_channels,
    lab_frame,
    liouvillian,
    liouvillian_spectrum,
    propagate,
    propagate_driven_lab,
    regression_correlator,
    restrict,
    sector_indices,
    steady_state,
    to_rotating_frame,
    trace_row,
    unvec,
    vec,
)
from hybridom.model import SystemParams, polariton_number_diag

SMALL = SpaceLayout.tripartite(3, 3)


def driven(**kw):
    base = dict(omega_c=5.0, omega_a=5.0, omega_m=1.0, g_ac=0.5, g_cm=0.1, g_am=0.02,
                gamma_c=0.2, gamma_a=0.1, gamma_m=0.05, n_th=0.3, F_p=0.1, omega_p=4.6)
    base.update(kw)
    return SystemParams(**base)


params_st = st.builds(
    driven,
    g_am=st.floats(-0.1, 0.1),
    gamma_c=st.floats(0.0, 0.5),
    gamma_a=st.floats(0.0, 0.5),
    gamma_m=st.floats(0.0, 0.2),
    n_th=st.floats(0.0, 2.0),
    gamma_inc=st.floats(0.0, 0.1),
    F_p=st.floats(0.0, 0.3),
    omega_p=st.floats(3.0, 7.0),
)


def random_density(layout, seed):
    rng = np.random.default_rng(seed)
    n = layout.total_dim
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


def test_vec_convention():
    a = np.arange(9.0).reshape(3, 3)
    v = vec(a)
    np.testing.assert_array_equal(v[:3], a[:, 0])
    np.testing.assert_array_equal(unvec(v, 3), a)
    assert trace_row(3) @ v == pytest.approx(np.trace(a))


def test_vec_kron_identity():
    rng = np.random.default_rng(1)
    a, x, b = (rng.normal(size=(4, 4)) for _ in range(3))
    np.testing.assert_allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x), atol=1e-12)


def test_channel_rates():
    p = driven(n_th=2.0, gamma_m=0.1, gamma_inc=0.03)
    ch = {c.name: c.rate for c in dissipation_channels(p, SMALL)}
    assert ch["mech_heating"] == pytest.approx(0.2)
    assert ch["mech_damping"] == pytest.approx(0.3)
    assert ch["atom_pump"] == pytest.approx(0.03)
    p0 = driven(n_th=0.0, gamma_inc=0.0)
    names = {c.name for c in dissipation_channels(p0, SMALL)}
    assert "mech_heating" not in names and "atom_pump" not in names
    with pytest.raises(ValueError):
        CollapseChannel(Ops(SMALL).a, -1.0, "bad")


@given(params_st)
def test_trace_preservation(p):
    L = liouvillian(p, SMALL)
    n = SMALL.total_dim
    row = trace_row(n) @ L.matrix
    scale = float(abs(L.matrix).max())
    assert float(np.max(np.abs(row))) <= 1e-12 * scale


@given(params_st, st.integers(0, 1000))
def test_hermiticity_preservation(p, seed):
    L = liouvillian(p, SMALL)
    rho = random_density(SMALL, seed)
    out = L.apply(rho)
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * max(np.max(np.abs(out)), 1.0)


def test_rotating_frame_time_independent_terms():
    p = driven()
    prob = to_rotating_frame(p, SMALL)
    assert prob.frame.kind == "rotating"
    assert prob.hamiltonian.is_hermitian(1e-14)
    assert to_rotating_frame(p.replace(F_p=0.0), SMALL).frame.kind == "lab"


@pytest.mark.parametrize("seed", [0, 3])
def test_steady_state_properties(seed):
    p = driven(omega_p=4.6 + 0.1 * seed)
    rho = steady_state(liouvillian(p, SMALL))
    rho.validate(trace_tol=1e-10, herm_tol=1e-12, pos_tol=1e-8)
    assert rho.min_eigenvalue() >= -1e-8


def test_steady_state_methods_agree():
    L = liouvillian(driven(), SMALL)
    r1 = steady_state(L, method="direct")
    r2 = steady_state(L, method="eig")
    assert r1.trace_distance(r2) < 1e-9


def test_degenerate_steady_state_detected():
    # no dissipation at all: every diagonal state is stationary
    p = driven(gamma_c=0.0, gamma_a=0.0, gamma_m=0.0, n_th=0.0, F_p=0.0)
    with pytest.raises(DegenerateSteadyState):
        steady_state(liouvillian(p, SMALL))


def test_thermal_mechanics_steady_state():
    p = SystemParams(g_ac=0.0, g_cm=0.0, g_am=0.0, gamma_c=0.1, gamma_a=0.1, gamma_m=0.05, n_th=1.2)
    lay = SpaceLayout.tripartite(2, 40)
    rho = steady_state(liouvillian(p, lay))
    ref = thermal_mechanics_state(lay, 1.2)
    assert rho.trace_distance(ref) < 1e-9


def test_steady_vs_long_time_propagation():
    p = driven()
    L = liouvillian(p, SMALL)
    rho_ss = steady_state(L)
    rho0 = pure_state(SMALL, basis_state(SMALL, GROUND, 0, 0))
    # slowest rate is gamma_m = 0.05; 800 time units is 40 e-folds
    traj = propagate(L, rho0, [0.0, 800.0])
    assert traj.states[-1].trace_distance(rho_ss) <= 1e-6
    assert traj.max_trace_drift < 1e-9


def test_cavity_decay_matches_exponential():
    p = SystemParams(g_ac=0.0, g_cm=0.0, g_am=0.0, gamma_c=0.3)
    lay = SpaceLayout.tripartite(4, 2)
    rho0 = pure_state(lay, basis_state(lay, GROUND, 3, 0))
    t = np.linspace(0, 10, 11)
    traj = propagate(liouvillian(p, lay), rho0, t)
    n = [expectation(Ops(lay).n_phot, s).real for s in traj.states]
    np.testing.assert_allclose(n, 3 * np.exp(-0.3 * t), rtol=1e-8)


def test_propagate_rejects_bad_grid():
    L = liouvillian(driven(), SMALL)
    rho0 = pure_state(SMALL, basis_state(SMALL, GROUND, 0, 0))
    with pytest.raises(ValueError):
        propagate(L, rho0, [1.0, 2.0])


def test_rotating_frame_matches_time_dependent_drive():
    p = driven(omega_c=3.0, omega_a=3.0, omega_p=2.6, F_p=0.15)
    L = liouvillian(p, SMALL)
    rho0 = pure_state(SMALL, basis_state(SMALL, GROUND, 0, 0))
    t = np.linspace(0.0, 20.0, 6)
    rot = propagate(L, rho0, t)
    lab = propagate_driven_lab(p, SMALL, rho0, t)
    o = Ops(SMALL)
    # phonon number and all polariton-diagonal quantities are frame invariant
    for s_rot, s_lab in zip(rot.states, lab.states):
        nb_rot = expectation(o.n_phon, s_rot).real
        nb_lab = expectation(o.n_phon, s_lab).real
        assert abs(nb_rot - nb_lab) <= 1e-6
        assert abs(expectation(o.n_phot, s_rot) - expectation(o.n_phot, s_lab)) <= 1e-6


def test_liouvillian_spectrum_contains_zero():
    ev = liouvillian_spectrum(liouvillian(driven(), SMALL))
    assert np.min(np.abs(ev)) < 1e-10
    assert np.max(ev.real) < 1e-10


def test_sector_restriction():
    p = driven(F_p=0.0, gamma_inc=0.05)
    L = liouvillian(p, SMALL)
    charge = polariton_number_diag(SMALL)
    idx = sector_indices(charge, 0)
    blk = restrict(L, idx)
    assert blk.shape == (idx.size, idx.size)
    with pytest.raises(ValueError):
        restrict(liouvillian(driven(), SMALL), idx)


def test_regression_correlator_matches_propagation():
    p = driven(F_p=0.0, gamma_inc=0.05)
    L = liouvillian(p, SMALL)
    rho = steady_state(L)
    o = Ops(SMALL)
    tau = np.linspace(0.0, 5.0, 11)
    full = regression_correlator(L, rho, o.a, o.n_phot, tau, method="expm")
    sect = regression_correlator(L, rho, o.a, o.n_phot, tau, charge=polariton_number_diag(SMALL))
    np.testing.assert_allclose(sect.values, full.values, rtol=1e-8, atol=1e-14)
    # oracle: propagate a rho a^dag directly
    x = o.a.toarray() @ rho.rho @ o.ad.toarray()
    ref = []
    for t in tau:
        if t == 0.0:
            y = x
        else:
            y = unvec(sp.linalg.expm_multiply(L.matrix * t, vec(x)), SMALL.total_dim)
        ref.append(np.trace(o.n_phot.toarray() @ y))
    np.testing.assert_allclose(full.values, ref, rtol=1e-8, atol=1e-14)


def test_regression_warns_on_non_steady_input():
    p = driven(F_p=0.0, gamma_inc=0.05)
    L = liouvillian(p, SMALL)
    rho0 = pure_state(SMALL, basis_state(SMALL, GROUND, 1, 0))
    o = Ops(SMALL)
    with pytest.warns(NonSteadyWarning):
        regression_correlator(L, rho0, o.a, o.n_phot, [0.0, 1.0])


def test_hamiltonian_only_liouvillian_is_unitary():
    p = driven(gamma_c=0.0, gamma_a=0.0, gamma_m=0.0, n_th=0.0)
    L = build_liouvillian(lab_frame(p, SMALL))
    ev = np.linalg.eigvals(L.matrix.toarray())
    assert np.max(np.abs(ev.real)) < 1e-10
