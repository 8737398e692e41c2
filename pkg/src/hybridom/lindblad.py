"""Master-equation compilation, steady states, propagation and two-time correlators.

Vectorization is column stacking: ``vec(rho)[i + j*D] = rho[i, j]``, so that
``vec(A X B) = (B^T kron A) vec(X)`` and ``Tr(B X) = B.ravel() @ vec(X)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .core import Ops, QOperator, QState, SpaceLayout
from .model import SystemParams, build_hamiltonian


class SolverError(RuntimeError):
    """A steady-state, propagation or correlator computation failed."""


class DegenerateSteadyState(SolverError):
    pass


class PositivityError(SolverError):
    """Steady state has eigenvalues below tolerance; usually under-truncation."""


class NonSteadyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CollapseChannel:
    operator: QOperator
    rate: float
    name: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"collapse rate must be non-negative, got {self.rate}")


@dataclass(frozen=True)
class Frame:
    kind: str = "lab"  # "lab" or "rotating"
    omega_p: float = 0.0


@dataclass(frozen=True)
class LiouvilleProblem:
    hamiltonian: QOperator
    channels: tuple[CollapseChannel, ...]
    frame: Frame = Frame()

    def __post_init__(self):
        if not self.hamiltonian.is_hermitian(1e-12):
            raise ValueError("Liouville problem Hamiltonian must be Hermitian")

    @property
    def layout(self) -> SpaceLayout:
        return self.hamiltonian.layout


@dataclass(frozen=True, eq=False)
class Superoperator:
    layout: SpaceLayout
    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.matrix @ vec(rho)).reshape((d, d), order="F")


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


def trace_row(d: int) -> np.ndarray:
    return vec(np.eye(d))


# --- problem construction ---------------------------------------------------------------

def dissipation_channels(params: SystemParams, layout: SpaceLayout) -> tuple[CollapseChannel, ...]:
    """Cavity, atomic, thermal mechanical and incoherent-pump channels (zero rates dropped)."""
    o = Ops(layout)
    p = params
    raw = [
        (o.a, p.gamma_c, "cavity_loss"),
        (o.sm, p.gamma_a, "atom_loss"),
        (o.bd, p.n_th * p.gamma_m, "mech_heating"),
        (o.b, (p.n_th + 1.0) * p.gamma_m, "mech_damping"),
        (o.sp, p.gamma_inc, "atom_pump"),
    ]
    return tuple(CollapseChannel(op, rate, name) for op, rate, name in raw if rate > 0)


def lab_frame(params: SystemParams, layout: SpaceLayout) -> LiouvilleProblem:
    """Undriven problem in the lab frame (drive ignored)."""
    return LiouvilleProblem(build_hamiltonian(params, layout), dissipation_channels(params, layout))


def to_rotating_frame(params: SystemParams, layout: SpaceLayout) -> LiouvilleProblem:
    """Time-independent problem in the frame rotating at the drive frequency.

    The drive ``i F_p (a^dag e^{-i w_p t} - a e^{i w_p t})`` becomes the static
    term ``i F_p (a^dag - a)`` after the unitary generated by
    ``w_p (a^dag a + sigma_+ sigma_-)``; every other term commutes with that
    generator, so only omega_c and omega_a shift by -omega_p.
    """
    if params.F_p == 0.0:
        return lab_frame(params, layout)
    h0 = build_hamiltonian(params, layout)
    o = Ops(layout)
    n_pol = o.n_phot + o.sp @ o.sm
    h = h0 - params.omega_p * n_pol + (1j * params.F_p) * (o.ad - o.a)
    h = QOperator(layout, 0.5 * (h.data + h.data.conj().T))
    return LiouvilleProblem(h, dissipation_channels(params, layout), Frame("rotating", params.omega_p))


def build_liouvillian(problem: LiouvilleProblem) -> Superoperator:
    layout = problem.layout
    d = layout.total_dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h = problem.hamiltonian.tosparse()
    lmat = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for ch in problem.channels:
        c = ch.operator.tosparse()
        cdc = (c.conj().T @ c).tocsr()
        lmat = lmat + ch.rate * (
            sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
        )
    lmat = sp.csr_matrix(lmat)
    lmat.eliminate_zeros()
    return Superoperator(layout, lmat)


def liouvillian(params: SystemParams, layout: SpaceLayout) -> Superoperator:
    return build_liouvillian(to_rotating_frame(params, layout))


# --- steady state --------------------------------------------------------------------

def _hermitize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state(L: Superoperator, residual_tol: float = 1e-8, pos_tol: float = 1e-8,
                 method: str = "direct") -> QState:
    """Unique stationary density matrix of ``L``.

    The direct method solves the bordered system in which the (0, 0) population
    equation is replaced by the trace condition.  A singular bordered matrix
    means the null space is degenerate.  The eigen fallback (``method="eig"``,
    or automatically when the factorization fails for another reason) looks
    for the eigenvector of the smallest-magnitude eigenvalue.
    """
    d = L.dim
    m = L.matrix
    if method == "direct":
        try:
            rho = _steady_direct(m, d)
        except DegenerateSteadyState:
            raise
        except (RuntimeError, MemoryError) as exc:
            warnings.warn(f"direct steady-state solve failed ({exc}); using eigen fallback")
            rho = _steady_eig(m, d)
    elif method == "eig":
        rho = _steady_eig(m, d)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    rho = _hermitize(rho)
    scale = max(float(abs(m).max()), 1e-300)
    res = float(np.max(np.abs(m @ vec(rho))))
    if res > residual_tol * scale:
        raise SolverError(f"steady-state residual {res:.3e} above tolerance")
    state = QState(L.layout, rho)
    lo = state.min_eigenvalue()
    if lo < -pos_tol:
        raise PositivityError(f"steady state has eigenvalue {lo:.3e} < -{pos_tol:g}; check truncation")
    return state


def _steady_direct(m: sp.csr_matrix, d: int, pivot_tol: float = 1e-13) -> np.ndarray:
    n = d * d
    tr = sp.csr_matrix(trace_row(d).reshape(1, n))
    bordered = sp.vstack([tr, m[1:, :]], format="csc")
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    try:
        lu = spla.splu(bordered)
    except RuntimeError as exc:
        if "singular" in str(exc).lower():
            raise DegenerateSteadyState("Liouvillian null space is degenerate (bordered system singular)") from exc
        raise
    # a second null vector leaves a pivot at roundoff level instead of exactly zero
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= pivot_tol * piv.max():
        raise DegenerateSteadyState(
            f"Liouvillian null space is degenerate (pivot ratio {piv.min() / piv.max():.1e})"
        )
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyState("bordered steady-state system is numerically singular")
    return unvec(x, d)


def _steady_eig(m: sp.csr_matrix, d: int, degeneracy_tol: float = 1e-10) -> np.ndarray:
    n = d * d
    scale = max(float(abs(m).max()), 1e-300)
    if n <= 2500:
        vals, vecs = la.eig(m.toarray())
    else:
        vals, vecs = spla.eigs(m, k=min(4, n - 2), sigma=-1e-6 * scale, which="LM")
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    if len(vals) > 1 and abs(vals[1]) <= degeneracy_tol * scale:
        raise DegenerateSteadyState(f"two eigenvalues within {degeneracy_tol:g} of zero: {vals[:2]}")
    rho = unvec(vecs[:, 0], d)
    return rho / np.trace(rho)


def liouvillian_spectrum(L: Superoperator) -> np.ndarray:
    """Full dense spectrum, sorted by decreasing real part (small systems only)."""
    vals = la.eigvals(L.matrix.toarray())
    return vals[np.argsort(-vals.real)]


# --- propagation --------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: list[QState]
    max_trace_drift: float = 0.0


def propagate(L: Superoperator, rho0: QState, t_grid, rtol: float = 1e-10, atol: float = 1e-12,
              method: str = "DOP853", max_step: float = math.inf) -> Trajectory:
    """Integrate d vec(rho)/dt = L vec(rho) with an adaptive Runge-Kutta scheme."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must start at 0 and be strictly increasing")
    m = L.matrix
    return _integrate(lambda _t, y: m @ y, L.layout, rho0, t, rtol, atol, method, max_step)


def _integrate(rhs, layout, rho0, t, rtol, atol, method, max_step) -> Trajectory:
    d = layout.total_dim
    y0 = vec(rho0.rho).astype(complex)
    if t.size == 1:
        return Trajectory(t, [QState(layout, rho0.rho.copy())], 0.0)
    sol = solve_ivp(rhs, (t[0], t[-1]), y0, method=method, t_eval=t, rtol=rtol, atol=atol,
                    max_step=max_step)
    if sol.status != 0:
        raise SolverError(f"propagation aborted at t={sol.t[-1] if sol.t.size else t[0]:.6g}: {sol.message}")
    tr0 = np.trace(rho0.rho).real
    drift = 0.0
    states = []
    for k in range(sol.y.shape[1]):
        rho = unvec(sol.y[:, k], d)
        drift = max(drift, abs(np.trace(rho).real - tr0))
        states.append(QState(layout, _hermitize(rho)))
    return Trajectory(sol.t, states, drift)


def propagate_driven_lab(params: SystemParams, layout: SpaceLayout, rho0: QState, t_grid,
                         rtol: float = 1e-10, atol: float = 1e-12) -> Trajectory:
    """Lab-frame propagation with the explicit time-dependent coherent drive.

    Independent of the rotating-frame construction; used as its oracle.
    """
    t = np.asarray(t_grid, dtype=float)
    base = build_liouvillian(lab_frame(params, layout)).matrix
    o = Ops(layout)
    d = layout.total_dim
    eye = sp.identity(d, dtype=complex, format="csr")

    def comm(op):
        h = op.tosparse()
        return sp.csr_matrix(-1j * (sp.kron(eye, h) - sp.kron(h.T, eye)))

    up = comm(1j * params.F_p * o.ad)      # multiplies e^{-i w_p t}
    down = comm(-1j * params.F_p * o.a)    # multiplies e^{+i w_p t}
    wp = params.omega_p

    def rhs(time, y):
        return base @ y + np.exp(-1j * wp * time) * (up @ y) + np.exp(1j * wp * time) * (down @ y)

    return _integrate(rhs, layout, rho0, t, rtol, atol, "DOP853", math.inf)


# --- two-time correlators ---------------------------------------------------------------------

@dataclass
class CorrelatorResult:
    tau: np.ndarray
    values: np.ndarray
    warnings: list[str] = field(default_factory=list)
    method: str = ""


def sector_indices(charge: np.ndarray, difference: int = 0) -> np.ndarray:
    """vec indices (i, j) with charge[i] - charge[j] == difference."""
    d = charge.size
    i = np.tile(np.arange(d), d)
    j = np.repeat(np.arange(d), d)
    return np.flatnonzero(charge[i] - charge[j] == difference)


def restrict(L: Superoperator, idx: np.ndarray, tol: float = 1e-12) -> sp.csr_matrix:
    """Block of ``L`` on the index set ``idx``; rejects sets that are not invariant."""
    m = L.matrix.tocsc()
    cols = m[:, idx]
    mask = np.ones(m.shape[0], dtype=bool)
    mask[idx] = False
    leak = cols[mask, :]
    scale = max(float(abs(m).max()), 1e-300)
    if leak.nnz and float(abs(leak).max()) > tol * scale:
        raise ValueError("index set is not invariant under the Liouvillian")
    return sp.csr_matrix(cols[idx, :])


def _is_uniform(t: np.ndarray) -> bool:
    if t.size < 3:
        return True
    dt = np.diff(t)
    return bool(np.max(np.abs(dt - dt[0])) <= 1e-9 * max(abs(dt[0]), 1e-300))


def _modal_sum(lam: np.ndarray, amp: np.ndarray, t: np.ndarray, block: int = 2048) -> np.ndarray:
    """sum_k amp_k exp(lam_k t); uniform grids use a blocked power factorization."""
    if t.size == 0:
        return np.zeros(0, dtype=complex)
    if not _is_uniform(t) or t.size <= block:
        out = np.empty(t.size, dtype=complex)
        for s in range(0, t.size, block):
            out[s:s + block] = np.exp(np.outer(t[s:s + block], lam)) @ amp
        return out
    dt = t[1] - t[0]
    nq = -(-t.size // block)
    r = np.arange(block) * dt
    q = t[0] + np.arange(nq) * block * dt
    outer = np.exp(np.outer(q, lam)) * amp          # (nq, modes)
    inner = np.exp(np.outer(lam, r))                # (modes, block)
    return (outer @ inner).ravel()[: t.size]


def regression_correlator(L: Superoperator, rho_ss: QState, A: QOperator, B: QOperator, tau_grid,
                          charge: np.ndarray | None = None, method: str = "auto",
                          steady_tol: float = 1e-8, modal_check_tol: float = 1e-7) -> CorrelatorResult:
    """C(tau) = Tr[B exp(L tau)(A rho_ss A^dag)] on ``tau_grid``.

    ``charge``, when given, is the diagonal of a conserved quantity (e.g. the
    polariton number); propagation is then restricted to the charge-diagonal
    block of Liouville space, which must be invariant.  ``method`` is
    ``"modal"`` (dense eigendecomposition), ``"expm"`` (Krylov action of the
    exponential between grid points) or ``"auto"``.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or np.any(tau < 0) or np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be non-negative and strictly increasing")
    notes = []
    d = L.dim
    res = float(np.max(np.abs(L.matrix @ vec(rho_ss.rho))))
    scale = max(float(abs(L.matrix).max()), 1e-300)
    if res > steady_tol * scale:
        msg = f"input state is not stationary (residual {res:.3e})"
        warnings.warn(msg, NonSteadyWarning)
        notes.append(msg)
    a = A.toarray()
    x0 = vec(a @ rho_ss.rho @ a.conj().T)
    w = B.toarray().ravel()
    mat = L.matrix
    if charge is not None:
        idx = sector_indices(np.asarray(charge), 0)
        outside = np.ones(d * d, dtype=bool)
        outside[idx] = False
        if np.max(np.abs(x0[outside]), initial=0.0) > 1e-12 * max(np.max(np.abs(x0)), 1e-300):
            raise ValueError("initial operator A rho A^dag leaves the charge-diagonal sector")
        mat = restrict(L, idx)
        x0, w = x0[idx], w[idx]
    n = mat.shape[0]
    if method == "auto":
        method = "modal" if n <= 4000 else "expm"
    if method == "modal":
        vals, amp = _modal_decomposition(mat, x0, w)
        values = _modal_sum(vals, amp, tau)
        # spot-check the modal expansion against a direct propagation
        t_chk = float(tau[tau.size // 2])
        if n <= 1500:
            direct = w @ (la.expm(mat.toarray() * t_chk) @ x0)
        else:
            t_chk = min(t_chk, 100.0 / scale)
            direct = w @ spla.expm_multiply(mat * t_chk, x0)
        ref = max(abs(w @ x0), abs(direct), 1e-300)
        modal = _modal_sum(vals, amp, np.array([t_chk]))[0]
        if abs(modal - direct) > modal_check_tol * ref:
            notes.append(f"modal expansion inaccurate ({abs(modal - direct) / ref:.2e}); used expm")
            values = _expm_series(mat, x0, w, tau)
            method = "expm"
    elif method == "expm":
        values = _expm_series(mat, x0, w, tau)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CorrelatorResult(tau, values, notes, method)


def _modal_decomposition(mat, x0, w):
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    vals, vecs = la.eig(dense)
    # roundoff in the stationary eigenvalue turns into a spurious phase at long tau
    scale = max(float(np.max(np.abs(dense), initial=0.0)), 1e-300)
    k = int(np.argmin(np.abs(vals)))
    if abs(vals[k]) <= 1e-10 * scale:
        vals[k] = 0.0
    vals = np.minimum(vals.real, 0.0) + 1j * vals.imag
    coef = la.solve(vecs, x0)
    return vals, (w @ vecs) * coef


def _expm_series(mat, x0, w, tau):
    out = np.empty(tau.size, dtype=complex)
    x = x0.copy()
    t_prev = 0.0
    for k, t in enumerate(tau):
        if t > t_prev:
            x = spla.expm_multiply(mat * (t - t_prev), x)
            t_prev = t
        out[k] = w @ x
    return out
