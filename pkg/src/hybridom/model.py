"""Tripartite atom-cavity-mechanics Hamiltonian and its dressed-state spectrum.

All frequencies are in units of the mechanical frequency unless the caller
chooses otherwise; nothing here assumes ``omega_m == 1``.

Phase conventions
-----------------
The Jaynes-Cummings coupling ``i g_ac (sigma_+ a - sigma_- a^dag)`` fixes the
relative phase of the polariton doublet.  With the mixing angle
``chi = atan2(2 sqrt(n) g_ac, Delta_ac)``::

    |+(n)> = sin(chi/2) |g, n> + i cos(chi/2) |e, n-1>
    |-(n)> = cos(chi/2) |g, n> - i sin(chi/2) |e, n-1>

which are exact eigenvectors of the atom-cavity part with energies
``(n - 1/2) omega_c +- sqrt(Delta_ac^2/4 + n g_ac^2) + omega_a/2``.  The
reported ``phi_n = arctan(2 sqrt(n) g_ac / Delta_ac)`` lies in (-pi/2, pi/2]
and equals ``chi`` whenever ``Delta_ac >= 0``.

Inside an n-polariton block the mechanical coupling reads
``-(g_cm/2 - g_am) (-cos(chi) sz + sin(chi) sx) (b + b^dag)`` with the Pauli
matrices acting on the ordered pair (|->, |+>).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .core import EXCITED, GROUND, Ops, QOperator, SpaceLayout, destroy


class UnsupportedConfiguration(ValueError):
    """Analytic formulas requested outside the regime they were derived for."""


@dataclass(frozen=True)
class SystemParams:
    omega_c: float = 100.0
    omega_a: float = 100.0
    omega_m: float = 1.0
    g_ac: float = 0.5
    g_cm: float = 0.1
    g_am: float = 0.0
    gamma_c: float = 0.0
    gamma_a: float = 0.0
    gamma_m: float = 0.0
    gamma_inc: float = 0.0
    n_th: float = 0.0
    F_p: float = 0.0
    omega_p: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"{f.name} must be a finite real number, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        for name in ("omega_c", "omega_a", "omega_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma_c", "gamma_a", "gamma_m", "gamma_inc", "n_th"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def Delta_ac(self) -> float:
        return self.omega_a - self.omega_c

    @property
    def g_pm_eff(self) -> float:
        return self.g_cm - 2.0 * self.g_am

    @property
    def Q_ac(self) -> float:
        return self.omega_c / self.gamma_c if self.gamma_c else math.inf

    @property
    def Q_m(self) -> float:
        return self.omega_m / self.gamma_m if self.gamma_m else math.inf

    @property
    def coupling_ratio(self) -> float:
        """Normalized interference axis (g_cm/2 - g_am)/g_cm; zero at cancellation."""
        return (0.5 * self.g_cm - self.g_am) / self.g_cm

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def is_resonant(self) -> bool:
        return math.isclose(self.omega_a, self.omega_c, rel_tol=1e-12, abs_tol=0.0)

    def polariton_frequency(self, sign: int, n: int = 1) -> float:
        """Origin-shifted polariton energy omega_{+-}^{(n)}."""
        return polariton_energies(self, n)[0 if sign > 0 else 1]


@dataclass(frozen=True)
class DressedLevel:
    n: int
    m: int
    branch: str  # "G", "+" or "-"
    energy: float
    phi_n: float
    theta_nm: float
    q0_n: float

    @property
    def label(self) -> str:
        if self.branch == "G":
            return f"G_{self.n}" if self.n else f"G,{self.m}"
        return f"{self.branch}_{self.n},{self.m}"


@dataclass(frozen=True)
class PolaritonDoublet:
    n: int
    phi: float
    chi: float
    plus: tuple[complex, complex]  # amplitudes on (|g, n>, |e, n-1>)
    minus: tuple[complex, complex]
    omega_plus: float
    omega_minus: float


# --- full Hamiltonian ------------------------------------------------------------

def build_hamiltonian(params: SystemParams, layout: SpaceLayout) -> QOperator:
    """Full Hamiltonian with the energy origin shifted so that |g, 0, l=0> sits at 0
    when the mechanics is uncoupled."""
    o = Ops(layout)
    p = params
    h = (
        p.omega_c * o.n_phot
        + (0.5 * p.omega_a) * o.sz
        + p.omega_m * o.n_phon
        + (1j * p.g_ac) * (o.sp @ o.a - o.sm @ o.ad)
        - p.g_cm * (o.n_phot @ o.x_mech)
        - p.g_am * (o.sz @ o.x_mech)
        + 0.5 * p.omega_a * o.id
    )
    # remove rounding asymmetry from sparse products
    return QOperator(layout, 0.5 * (h.data + h.data.conj().T))


def polariton_number(layout: SpaceLayout) -> QOperator:
    o = Ops(layout)
    return o.n_phot + o.sp @ o.sm


def polariton_number_diag(layout: SpaceLayout) -> np.ndarray:
    """Polariton number of every basis state (it is diagonal in the bare basis)."""
    labels = layout.basis_labels()
    return np.array([k + (1 if s == EXCITED else 0) for s, k, _ in labels], dtype=int)


# --- polariton doublets ------------------------------------------------------------

def _chi(params: SystemParams, n: int) -> float:
    return math.atan2(2.0 * math.sqrt(n) * params.g_ac, params.Delta_ac)


def _phi(params: SystemParams, n: int) -> float:
    num = 2.0 * math.sqrt(n) * params.g_ac
    if params.Delta_ac == 0.0:
        return math.pi / 2 if num != 0 else 0.0
    phi = math.atan(num / params.Delta_ac)
    return math.pi / 2 if phi == -math.pi / 2 else phi


def polariton_energies(params: SystemParams, n: int) -> tuple[float, float]:
    if n < 1:
        raise ValueError("polariton doublets exist for n >= 1")
    half_split = math.sqrt(0.25 * params.Delta_ac**2 + n * params.g_ac**2)
    base = (n - 0.5) * params.omega_c + 0.5 * params.omega_a
    return base + half_split, base - half_split


def polariton_basis(params: SystemParams, n: int) -> PolaritonDoublet:
    chi = _chi(params, n)
    s, c = math.sin(chi / 2), math.cos(chi / 2)
    wp, wm = polariton_energies(params, n)
    return PolaritonDoublet(
        n=n,
        phi=_phi(params, n),
        chi=chi,
        plus=(complex(s), 1j * c),
        minus=(complex(c), -1j * s),
        omega_plus=wp,
        omega_minus=wm,
    )


def polariton_vector(params: SystemParams, layout: SpaceLayout, n: int, sign: int, l: int) -> np.ndarray:
    """|sign(n)> (x) |l> as a vector of the full space."""
    d = polariton_basis(params, n)
    amp_g, amp_e = d.plus if sign > 0 else d.minus
    v = np.zeros(layout.total_dim, dtype=complex)
    if n < layout.n_cavity:
        v[layout.index(GROUND, n, l)] = amp_g
    v[layout.index(EXCITED, n - 1, l)] = amp_e
    return v


# --- block Hamiltonians ----------------------------------------------------------------

def block_hamiltonian(params: SystemParams, n: int, n_mech: int) -> np.ndarray:
    """Hamiltonian restricted to the n-polariton subspace.

    For ``n >= 1`` the basis is ``(|-(n)>, |+(n)>) (x) |l>``, index
    ``branch * n_mech + l`` with branch 0 = "-".  For ``n == 0`` it is the
    ``n_mech``-dimensional mechanical block of |G>.
    """
    p = params
    b = destroy(n_mech)
    x = b + b.conj().T
    num = b.conj().T @ b
    if n == 0:
        return p.omega_m * num + p.g_am * x
    if n < 0:
        raise ValueError("polariton number must be non-negative")
    chi = _chi(p, n)
    half_split = math.sqrt(0.25 * p.Delta_ac**2 + n * p.g_ac**2)
    sz = np.diag([-1.0, 1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    i2, im = np.eye(2), np.eye(n_mech)
    # -(g_cm/2 - g_am) = -g_pm/2, written via g_pm so that g_am = g_cm/2 cancels exactly
    half_gpm = 0.5 * p.g_pm_eff
    z_coef = half_gpm * math.cos(chi)
    x_coef = -half_gpm * math.sin(chi)
    h = (
        ((n - 0.5) * p.omega_c + 0.5 * p.omega_a) * np.kron(i2, im)
        + half_split * np.kron(sz, im)
        + p.omega_m * np.kron(i2, num)
        - p.g_cm * (n - 0.5) * np.kron(i2, x)
        + z_coef * np.kron(sz, x)
        + x_coef * np.kron(sx, x)
    )
    return h


def block_coupling_coefficients(params: SystemParams, n: int) -> tuple[float, float]:
    """(sigma_z, sigma_x) coefficients of the (b + b^dag) coupling in block n."""
    chi = _chi(params, n)
    half_gpm = 0.5 * params.g_pm_eff
    return half_gpm * math.cos(chi), -half_gpm * math.sin(chi)


def block_basis_vectors(params: SystemParams, layout: SpaceLayout, n: int) -> np.ndarray:
    """Columns map the block basis of ``block_hamiltonian(n)`` into the full space."""
    nm = layout.n_mech
    if n == 0:
        cols = np.zeros((layout.total_dim, nm), dtype=complex)
        for l in range(nm):
            cols[layout.index(GROUND, 0, l), l] = 1.0
        return cols
    cols = np.zeros((layout.total_dim, 2 * nm), dtype=complex)
    for branch, sign in ((0, -1), (1, +1)):
        for l in range(nm):
            cols[:, branch * nm + l] = polariton_vector(params, layout, n, sign, l)
    return cols


# --- displaced oscillator overlaps ----------------------------------------------------------

def _laguerre(k: int, a: int, x: float) -> float:
    """Generalized Laguerre L_k^{(a)}(x) by the three-term recurrence in degree."""
    if k == 0:
        return 1.0
    prev, cur = 1.0, 1.0 + a - x
    for j in range(1, k):
        prev, cur = cur, ((2 * j + 1 + a - x) * cur - (j + a) * prev) / (j + 1)
    return cur


def displaced_overlap(l: int, m: int, q0: float) -> float:
    """<l|m(q0)>: overlap of bare Fock state l with the Fock state m of an
    oscillator whose equilibrium is shifted by q0 (position quadrature units,
    x = (b + b^dag)/sqrt(2)).

    Equals <l|D(alpha)|m> with alpha = q0/sqrt(2).  The factorial ratio and the
    power of alpha are combined in log space; the Laguerre factor comes from
    the degree recurrence.
    """
    if l < 0 or m < 0:
        raise ValueError("Fock indices must be non-negative")
    alpha = q0 / math.sqrt(2.0)
    if alpha == 0.0:
        return 1.0 if l == m else 0.0
    x = alpha * alpha
    lo, hi = (m, l) if l >= m else (l, m)
    # for l < m use L_m^{(l-m)}(x) = (l!/m!) (-x)^{m-l} L_l^{(m-l)}(x)
    sign_base = alpha if l >= m else -alpha
    power = hi - lo
    lag = _laguerre(lo, power, x)
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) + power * math.log(abs(alpha)) - 0.5 * x
    sign = 1.0 if (sign_base > 0 or power % 2 == 0) else -1.0
    return sign * lag * math.exp(log_mag)


def overlap_matrix(q0: float, n_rows: int, n_cols: int) -> np.ndarray:
    """Matrix O[l, m] = <l|m(q0)> for l < n_rows, m < n_cols."""
    return np.array([[displaced_overlap(l, m, q0) for m in range(n_cols)] for l in range(n_rows)])


# --- analytic dressed spectrum -----------------------------------------------------------------

def displacement_q0(params: SystemParams, n: int) -> float:
    """Equilibrium shift of the mechanics in the n-polariton block (resonant JC)."""
    if n == 0:
        return -math.sqrt(2.0) * params.g_am / params.omega_m
    return (n - 0.5) * math.sqrt(2.0) * params.g_cm / params.omega_m


def _theta(params: SystemParams, n: int, m: int) -> float:
    num = -params.g_pm_eff * math.sqrt(m)
    den = 2.0 * params.g_ac * math.sqrt(n) - params.omega_m
    if den == 0.0:
        return math.pi / 2 if num != 0 else 0.0
    th = math.atan(num / den)
    return math.pi / 2 if th == -math.pi / 2 else th


def _psi(params: SystemParams, n: int, m: int) -> float:
    """Internal polaron angle: the upper state of the (|+,m-1>, |-,m>) pair is
    (cos(psi/2), sin(psi/2))."""
    d = 0.5 * (2.0 * params.g_ac * math.sqrt(n) - params.omega_m)
    c = 0.5 * params.g_pm_eff * math.sqrt(m)
    return math.atan2(-c, d)


def _require_resonant(params: SystemParams):
    if not params.is_resonant:
        raise UnsupportedConfiguration(
            f"analytic dressed spectrum requires omega_a == omega_c "
            f"(got {params.omega_a} vs {params.omega_c})"
        )


def dressed_energy(params: SystemParams, n: int, m: int, branch: str) -> float:
    """Energy of |G_n> (m = 0) or |+-_{n,m}> (m >= 1) without the Stark term."""
    p = params
    if n == 0:
        return m * p.omega_m - p.g_am**2 / p.omega_m
    base = n * p.omega_c - p.g_cm**2 / p.omega_m * (n - 0.5)
    if m == 0:
        if branch != "G":
            raise ValueError("m = 0 only has the G branch")
        return base - p.g_ac * math.sqrt(n)
    root = math.sqrt((2 * p.g_ac * math.sqrt(n) - p.omega_m) ** 2 / 4 + m * p.g_pm_eff**2 / 4)
    return base + (m - 0.5) * p.omega_m + (root if branch == "+" else -root)


def analytic_spectrum(params: SystemParams, n_max: int, m_max: int, include_ground: bool = True) -> list[DressedLevel]:
    """Dressed levels for n <= n_max and m <= m_max (resonant atom-cavity only).

    Levels of the n = 0 block are exact displaced-oscillator levels; n >= 1 use
    the rotating-wave polaron formulas with the second-order Stark correction
    omitted.
    """
    _require_resonant(params)
    out: list[DressedLevel] = []
    if include_ground:
        q0 = displacement_q0(params, 0)
        for m in range(m_max + 1):
            out.append(DressedLevel(0, m, "G", dressed_energy(params, 0, m, "G"), 0.0, 0.0, q0))
    for n in range(1, n_max + 1):
        phi = _phi(params, n)
        q0 = displacement_q0(params, n)
        out.append(DressedLevel(n, 0, "G", dressed_energy(params, n, 0, "G"), phi, 0.0, q0))
        for m in range(1, m_max + 1):
            th = _theta(params, n, m)
            for br in ("-", "+"):
                out.append(DressedLevel(n, m, br, dressed_energy(params, n, m, br), phi, th, q0))
    return out


def dressed_amplitudes(params: SystemParams, n: int, m: int, branch: str, l: int) -> tuple[complex, complex]:
    """Bare-basis amplitudes (<e, n-1, l|s>, <g, n, l|s>) of the dressed state
    s = |G_n> or |+-_{n,m}>, with l counted in the undisplaced phonon basis."""
    _require_resonant(params)
    if n < 1:
        raise ValueError("dressed polaron states need n >= 1")
    d = polariton_basis(params, n)
    q0 = displacement_q0(params, n)
    (pg, pe), (mg, me) = d.plus, d.minus
    if m == 0:
        if branch != "G":
            raise ValueError("m = 0 only has the G branch")
        ov = displaced_overlap(l, 0, q0)
        return me * ov, mg * ov
    psi = _psi(params, n, m)
    if branch == "+":
        c_plus, c_minus = math.cos(psi / 2), math.sin(psi / 2)
    elif branch == "-":
        c_plus, c_minus = math.sin(psi / 2), -math.cos(psi / 2)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    o_up = displaced_overlap(l, m - 1, q0)
    o_lo = displaced_overlap(l, m, q0)
    amp_e = c_plus * pe * o_up + c_minus * me * o_lo
    amp_g = c_plus * pg * o_up + c_minus * mg * o_lo
    return amp_e, amp_g


def resonant_matrix_elements(
    params: SystemParams, n: int, m: int, k: int, l: int, branch: str, tol: float = 1e-9
) -> tuple[complex, complex]:
    """(<s|e, k, l>, <s|g, k, l>) for s = |+-_{n,m}> at the doublet-mechanics
    resonance 2 sqrt(n) g_ac = omega_m.

    There both mixing angles sit at +-pi/2 and every amplitude is one half of a
    sum or difference of two displaced overlaps.
    """
    if abs(2 * math.sqrt(n) * params.g_ac - params.omega_m) > tol * params.omega_m:
        raise UnsupportedConfiguration("matrix elements are only closed-form at 2 sqrt(n) g_ac = omega_m")
    if k < 0 or l < 0:
        raise ValueError("Fock indices must be non-negative")
    amp_e, amp_g = dressed_amplitudes(params, n, m, branch, l)
    e = amp_e.conjugate() if k == n - 1 else 0.0
    g = amp_g.conjugate() if k == n else 0.0
    return complex(e), complex(g)


def dressed_state_vector(params: SystemParams, layout: SpaceLayout, n: int, m: int, branch: str) -> np.ndarray:
    """Analytic dressed state in the full (truncated) space."""
    v = np.zeros(layout.total_dim, dtype=complex)
    for l in range(layout.n_mech):
        amp_e, amp_g = dressed_amplitudes(params, n, m, branch, l)
        v[layout.index(EXCITED, n - 1, l)] = amp_e
        if n < layout.n_cavity:
            v[layout.index(GROUND, n, l)] = amp_g
    return v


# --- numerical level assignment --------------------------------------------------------

def numeric_levels_by_block(params: SystemParams, layout: SpaceLayout, tol: float = 1e-6) -> dict[int, np.ndarray]:
    """Diagonalize the full Hamiltonian and group eigenvalues by polariton number.

    Each eigenvector is assigned to the block given by its rounded polariton
    number expectation; a non-integer expectation (beyond ``tol``) means an
    accidental cross-block degeneracy mixed the eigenvectors and is an error.
    """
    from .core import eigensystem

    h = build_hamiltonian(params, layout)
    vals, vecs = eigensystem(h, hermitian=True)
    ndiag = polariton_number_diag(layout)
    nexp = np.real(np.einsum("ij,i,ij->j", vecs.conj(), ndiag, vecs))
    rounded = np.rint(nexp).astype(int)
    if np.max(np.abs(nexp - rounded)) > tol:
        raise ValueError("eigenvectors mix polariton blocks; increase omega_c separation")
    return {int(n): np.sort(vals[rounded == n]) for n in np.unique(rounded)}


def sparse_block_projector(layout: SpaceLayout, n: int) -> sp.csr_matrix:
    idx = np.flatnonzero(polariton_number_diag(layout) == n)
    return sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, layout.total_dim))
