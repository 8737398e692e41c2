"""Operators and states on the truncated atom x cavity x mechanics space.

Factor order is fixed to (atom, cavity, mechanics).  A basis index is
``(s * N_c + k) * N_m + l`` with ``s = 0`` for the excited atomic state and
``s = 1`` for the ground state, ``k`` the photon number and ``l`` the phonon
number.  The atomic basis is ordered (e, g) so that ``sigma_z = diag(+1, -1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

ATOM, CAVITY, MECHANICS = 0, 1, 2
EXCITED, GROUND = 0, 1


class LayoutMismatch(ValueError):
    """Two operands live on different tensor-product layouts."""


class EigenError(RuntimeError):
    """An eigensolve failed to converge or produced large residuals."""


@dataclass(frozen=True)
class SpaceLayout:
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        object.__setattr__(self, "factor_dims", dims)
        if len(dims) != 3:
            raise ValueError(f"expected (atom, cavity, mechanics) dims, got {dims}")
        if dims[0] != 2:
            raise ValueError("atom factor must have dimension 2")
        if dims[1] < 2 or dims[2] < 2:
            raise ValueError("cavity and mechanics truncations must be >= 2")

    @classmethod
    def tripartite(cls, n_cavity: int, n_mech: int) -> "SpaceLayout":
        return cls((2, n_cavity, n_mech))

    @property
    def n_cavity(self) -> int:
        return self.factor_dims[1]

    @property
    def n_mech(self) -> int:
        return self.factor_dims[2]

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    def index(self, atom: int, k: int, l: int) -> int:
        """Basis index of |atom, k, l> (atom is EXCITED or GROUND)."""
        return (atom * self.n_cavity + k) * self.n_mech + l

    def basis_labels(self) -> list[tuple[int, int, int]]:
        return [(s, k, l) for s in range(2) for k in range(self.n_cavity) for l in range(self.n_mech)]


def _as_matrix(data):
    if sp.issparse(data):
        return sp.csr_matrix(data, dtype=complex)
    return np.asarray(data, dtype=complex)


@dataclass(frozen=True, eq=False)
class QOperator:
    """Complex matrix acting on a ``SpaceLayout``; storage may be dense or sparse."""

    layout: SpaceLayout
    data: object

    def __post_init__(self):
        data = _as_matrix(self.data)
        n = self.layout.total_dim
        if data.shape != (n, n):
            raise ValueError(f"operator shape {data.shape} does not match layout dim {n}")
        object.__setattr__(self, "data", data)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def toarray(self) -> np.ndarray:
        return self.data.toarray() if self.is_sparse else np.array(self.data)

    def tosparse(self) -> sp.csr_matrix:
        return self.data if self.is_sparse else sp.csr_matrix(self.data)

    def dag(self) -> "QOperator":
        return dagger(self)

    def norm(self) -> float:
        """Largest absolute entry (cheap scale for relative tolerances)."""
        d = self.data
        if self.is_sparse:
            return float(abs(d).max()) if d.nnz else 0.0
        return float(np.max(np.abs(d))) if d.size else 0.0

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        diff = self.data - self.data.conj().T
        scale = max(self.norm(), 1e-300)
        err = abs(diff).max() if sp.issparse(diff) else np.max(np.abs(diff))
        return float(err) <= rtol * scale

    def _check(self, other: "QOperator"):
        if not isinstance(other, QOperator):
            return NotImplemented
        if other.layout != self.layout:
            raise LayoutMismatch(f"{self.layout.factor_dims} vs {other.layout.factor_dims}")

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.layout, self.data @ other.data)
        return self.data @ other

    def __add__(self, other):
        if np.isscalar(other):
            other = identity(self.layout) * other
        self._check(other)
        return QOperator(self.layout, self.data + other.data)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return QOperator(self.layout, -self.data)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return QOperator(self.layout, self.data * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return QOperator(self.layout, self.data / scalar)


@dataclass(frozen=True, eq=False)
class QState:
    """Density matrix on a ``SpaceLayout``."""

    layout: SpaceLayout
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho.toarray() if sp.issparse(self.rho) else self.rho, dtype=complex)
        n = self.layout.total_dim
        if rho.shape != (n, n):
            raise ValueError(f"density matrix shape {rho.shape} does not match layout dim {n}")
        object.__setattr__(self, "rho", rho)

    def validate(self, trace_tol: float = 1e-10, herm_tol: float = 1e-10, pos_tol: float = 1e-8):
        tr = np.trace(self.rho)
        if abs(tr - 1) > trace_tol:
            raise ValueError(f"trace {tr} differs from 1")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        lo = self.min_eigenvalue()
        if lo < -pos_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        return self

    def min_eigenvalue(self) -> float:
        return float(la.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def trace_distance(self, other: "QState") -> float:
        ev = la.eigvalsh(self.rho - other.rho)
        return 0.5 * float(np.sum(np.abs(ev)))

    def partial_diag(self, factor: int) -> np.ndarray:
        """Reduced populations of one tensor factor."""
        dims = self.layout.factor_dims
        p = np.real(np.diag(self.rho)).reshape(dims)
        axes = tuple(i for i in range(3) if i != factor)
        return p.sum(axis=axes)


# --- local single-factor operators -------------------------------------------

def destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def create(n: int) -> np.ndarray:
    return destroy(n).conj().T


def sigma_minus() -> np.ndarray:
    # basis (e, g): sigma_- = |g><e|
    return np.array([[0, 0], [1, 0]], dtype=complex)


def sigma_plus() -> np.ndarray:
    return sigma_minus().T.copy()


def sigma_z() -> np.ndarray:
    return np.diag([1.0, -1.0]).astype(complex)


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def sigma_y() -> np.ndarray:
    return np.array([[0, -1j], [1j, 0]], dtype=complex)


# --- operations ----------------------------------------------------------------

def embed(local_op, factor_index: int, layout: SpaceLayout) -> QOperator:
    """Place ``local_op`` on one factor, identities elsewhere (sparse result)."""
    local = np.asarray(local_op.toarray() if sp.issparse(local_op) else local_op, dtype=complex)
    dims = layout.factor_dims
    if not 0 <= factor_index < len(dims):
        raise IndexError(f"factor index {factor_index} out of range")
    if local.ndim != 2 or local.shape != (dims[factor_index],) * 2:
        raise ValueError(
            f"local operator shape {local.shape} does not match factor dim {dims[factor_index]}"
        )
    mats = [sp.identity(d, dtype=complex, format="csr") for d in dims]
    mats[factor_index] = sp.csr_matrix(local)
    return QOperator(layout, reduce(lambda x, y: sp.kron(x, y, format="csr"), mats))


def identity(layout: SpaceLayout) -> QOperator:
    return QOperator(layout, sp.identity(layout.total_dim, dtype=complex, format="csr"))


def dagger(op: QOperator) -> QOperator:
    return QOperator(op.layout, op.data.conj().T)


def commutator(a: QOperator, b: QOperator) -> QOperator:
    if a.layout != b.layout:
        raise LayoutMismatch(f"{a.layout.factor_dims} vs {b.layout.factor_dims}")
    return a @ b - b @ a


def eigensystem(op: QOperator, hermitian: bool = True, rtol: float = 1e-10):
    """Eigenvalues (ascending) and column eigenvectors of ``op``.

    Hermitian input goes through LAPACK's tridiagonal path (``eigh``); the
    residual of every pair is checked against ``rtol * max|H|``.
    """
    m = op.toarray()
    if hermitian:
        if not op.is_hermitian(1e-12):
            raise ValueError("hermitian=True but operator is not Hermitian")
        vals, vecs = la.eigh(m)
    else:
        vals, vecs = la.eig(m)
        order = np.lexsort((vals.imag, vals.real))
        vals, vecs = vals[order], vecs[:, order]
    scale = max(np.max(np.abs(m)), 1e-300)
    res = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    worst = float(res.max()) if res.size else 0.0
    if hermitian and worst > rtol * scale * max(1.0, np.sqrt(m.shape[0])):
        raise EigenError(f"eigensystem residual {worst:.3e} exceeds tolerance")
    return vals, vecs


def expectation(op: QOperator, state: QState) -> complex:
    if op.layout != state.layout:
        raise LayoutMismatch(f"{op.layout.factor_dims} vs {state.layout.factor_dims}")
    # Tr(A rho) = sum_ij A_ij rho_ji
    if op.is_sparse:
        coo = op.data.tocoo()
        return complex(np.sum(coo.data * state.rho[coo.col, coo.row]))
    return complex(np.sum(op.data * state.rho.T))


def basis_state(layout: SpaceLayout, atom: int, k: int, l: int) -> np.ndarray:
    v = np.zeros(layout.total_dim, dtype=complex)
    v[layout.index(atom, k, l)] = 1.0
    return v


def pure_state(layout: SpaceLayout, psi: Sequence[complex]) -> QState:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return QState(layout, np.outer(psi, psi.conj()))


def thermal_populations(n_th: float, n_levels: int) -> np.ndarray:
    """Bose-Einstein populations truncated to ``n_levels`` and renormalized."""
    if n_th == 0:
        p = np.zeros(n_levels)
        p[0] = 1.0
        return p
    r = n_th / (1.0 + n_th)
    p = r ** np.arange(n_levels)
    return p / p.sum()


def product_state(layout: SpaceLayout, atom_rho, cavity_rho, mech_rho) -> QState:
    return QState(layout, np.kron(np.kron(atom_rho, cavity_rho), mech_rho))


def thermal_mechanics_state(layout: SpaceLayout, n_th: float) -> QState:
    """Atom in |g>, cavity in vacuum, mechanics thermal with occupancy ``n_th``."""
    atom = np.diag([0.0, 1.0])
    cav = np.zeros((layout.n_cavity,) * 2)
    cav[0, 0] = 1.0
    mech = np.diag(thermal_populations(n_th, layout.n_mech))
    return product_state(layout, atom, cav, mech)


class Ops:
    """Standard embedded operators of the tripartite space."""

    def __init__(self, layout: SpaceLayout):
        self.layout = layout
        self.a = embed(destroy(layout.n_cavity), CAVITY, layout)
        self.b = embed(destroy(layout.n_mech), MECHANICS, layout)
        self.sm = embed(sigma_minus(), ATOM, layout)
        self.sz = embed(sigma_z(), ATOM, layout)
        self.sx = embed(sigma_x(), ATOM, layout)
        self.sy = embed(sigma_y(), ATOM, layout)
        self.ad = self.a.dag()
        self.bd = self.b.dag()
        self.sp = self.sm.dag()
        self.id = identity(layout)
        self.n_phot = self.ad @ self.a
        self.n_phon = self.bd @ self.b
        self.x_mech = self.b + self.bd
